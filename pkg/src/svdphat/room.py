"""Random shoebox-room scenarios, image-method impulse responses and mixtures."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, fftconvolve, lfilter, sosfilt
from scipy.spatial.transform import Rotation

from .geometry import MicArray

SINC_TAPS = 81
_HALF = SINC_TAPS // 2


class ScenarioError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    room: tuple = (10.0, 10.0, 3.0)
    rt60_range: tuple = (0.2, 0.5)
    num_sources: int = 1
    wall_margin: float = 0.5
    min_source_distance: float = 0.5
    min_separation_deg: float = 30.0
    max_tries: int = 10_000

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        for key in ("room", "rt60_range"):
            if key in known:
                known[key] = tuple(float(x) for x in known[key])
        return cls(**known)


@dataclass
class Scenario:
    """A room, a randomly placed and rotated array, and source positions.

    ``rotation`` maps array coordinates to room coordinates. ``rt60`` of
    ``None`` means free field (direct path only).
    """

    room: np.ndarray
    rt60: float | None
    array_center: np.ndarray
    rotation: np.ndarray
    source_positions: np.ndarray
    seed: int | None = None

    @property
    def num_sources(self) -> int:
        return len(self.source_positions)

    def mic_positions(self, array: MicArray) -> np.ndarray:
        return self.array_center + array.positions @ self.rotation.T

    def true_doas(self) -> np.ndarray:
        """Unit vectors from the array center to each source, in array coordinates."""
        rel = (self.source_positions - self.array_center) @ self.rotation
        return rel / np.linalg.norm(rel, axis=1, keepdims=True)

    def to_dict(self) -> dict:
        return {
            "room": self.room.tolist(),
            "rt60": self.rt60,
            "array_center": self.array_center.tolist(),
            "rotation": self.rotation.tolist(),
            "source_positions": self.source_positions.tolist(),
            "seed": self.seed,
            "true_doas": self.true_doas().tolist(),
        }


def _separation_ok(u: np.ndarray, others: list, min_sep: float) -> bool:
    return all(np.arccos(np.clip(u @ v, -1.0, 1.0)) >= min_sep for v in others)


def generate_scenario(config: ScenarioConfig, seed) -> Scenario:
    """Rejection-sample array pose and sources until every placement rule holds."""
    rng = np.random.default_rng(seed)
    room = np.asarray(config.room, dtype=np.float64)
    lo, hi = config.wall_margin, room - config.wall_margin
    if np.any(hi <= lo):
        raise ScenarioError("room too small for the wall margin")
    rt_lo, rt_hi = config.rt60_range
    rt60 = float(rng.uniform(rt_lo, rt_hi))
    center = rng.uniform(lo, hi)
    rotation = Rotation.random(random_state=rng).as_matrix()
    min_sep = np.deg2rad(config.min_separation_deg)

    sources: list[np.ndarray] = []
    directions: list[np.ndarray] = []
    tries = 0
    while len(sources) < config.num_sources:
        tries += 1
        if tries > config.max_tries:
            raise ScenarioError(f"could not place {config.num_sources} sources in {config.max_tries} draws")
        p = rng.uniform(lo, hi)
        offset = p - center
        dist = np.linalg.norm(offset)
        if dist < config.min_source_distance:
            continue
        u = offset / dist
        if not _separation_ok(u, directions, min_sep):
            continue
        sources.append(p)
        directions.append(u)

    return Scenario(
        room=room,
        rt60=rt60,
        array_center=center,
        rotation=rotation,
        source_positions=np.array(sources),
        seed=None if seed is None else int(seed) if np.isscalar(seed) else None,
    )


def check_scenario(s: Scenario, config: ScenarioConfig, tol: float = 1e-9) -> list[str]:
    """List every placement rule the scenario breaks (empty when valid)."""
    problems = []
    m = config.wall_margin - tol
    for label, p in [("array", s.array_center)] + [(f"source {t}", x) for t, x in enumerate(s.source_positions)]:
        if np.any(p < m) or np.any(s.room - p < m):
            problems.append(f"{label} closer than {config.wall_margin} m to a wall")
    for t, x in enumerate(s.source_positions):
        if np.linalg.norm(x - s.array_center) < config.min_source_distance - tol:
            problems.append(f"source {t} too close to the array")
    doas = s.true_doas()
    min_sep = np.deg2rad(config.min_separation_deg) - tol
    for a in range(len(doas)):
        for b in range(a + 1, len(doas)):
            if np.arccos(np.clip(doas[a] @ doas[b], -1, 1)) < min_sep:
                problems.append(f"sources {a} and {b} closer than {config.min_separation_deg} deg")
    if s.rt60 is not None and not config.rt60_range[0] <= s.rt60 <= config.rt60_range[1]:
        problems.append("rt60 outside the configured range")
    return problems


# -- image method ----------------------------------------------------------

def sabine_reflection(room, rt60: float, c: float = 340.0) -> float:
    """Uniform pressure reflection coefficient sqrt(1 - alpha), alpha = 0.161 V / (S RT60)."""
    room = np.asarray(room, dtype=np.float64)
    volume = np.prod(room)
    surface = 2.0 * (room[0] * room[1] + room[0] * room[2] + room[1] * room[2])
    alpha = 0.161 * volume / (surface * rt60)
    if alpha >= 1.0:
        raise ScenarioError(f"RT60 of {rt60} s is too short for this room (alpha={alpha:.2f})")
    return float(np.sqrt(1.0 - alpha))


def _axis_images(length: float, src: float, reach: float, order: int | None):
    """Image coordinates along one axis and how many walls each one bounced off."""
    m_max = int(np.ceil(reach / length)) + 1
    if order is not None:
        m_max = min(m_max, order)
    m = np.arange(-m_max, m_max + 1)
    odd = m % 2 == 1
    coord = np.where(odd, (m + 1) * length - src, m * length + src)
    return coord, np.abs(m)


def image_sources(room, src, beta: float, max_order: int | None, max_distance: float, receiver):
    """Image positions and amplitudes (before spreading loss) for one source.

    Images are kept when their total reflection count is at most ``max_order``
    (if given) and their distance to ``receiver`` is at most ``max_distance``.
    """
    room = np.asarray(room, dtype=np.float64)
    src = np.asarray(src, dtype=np.float64)
    receiver = np.asarray(receiver, dtype=np.float64)
    if max_order == 0:
        return src[None, :], np.ones(1)
    axes = [_axis_images(room[a], src[a], max_distance + abs(receiver[a] - src[a]), max_order) for a in range(3)]
    cx, cy, cz = np.meshgrid(axes[0][0], axes[1][0], axes[2][0], indexing="ij")
    ox, oy, oz = np.meshgrid(axes[0][1], axes[1][1], axes[2][1], indexing="ij")
    pos = np.stack([cx.ravel(), cy.ravel(), cz.ravel()], axis=1)
    order = (ox + oy + oz).ravel()
    keep = np.linalg.norm(pos - receiver, axis=1) <= max_distance
    if max_order is not None:
        keep &= order <= max_order
    return pos[keep], beta ** order[keep]


def _sinc_kernel(x: np.ndarray) -> np.ndarray:
    # Hann-windowed sinc, zero for |x| >= 41
    w = np.where(np.abs(x) < _HALF + 1, 0.5 * (1.0 + np.cos(np.pi * x / (_HALF + 1))), 0.0)
    return np.sinc(x) * w


def fractional_impulses_direct(delays: np.ndarray, gains: np.ndarray, num_taps: int) -> np.ndarray:
    """Reference version of :func:`fractional_impulses`: one 81-tap kernel per impulse."""
    center = np.floor(delays + 0.5).astype(np.int64)
    taps = center[:, None] + np.arange(-_HALF, _HALF + 1)
    weights = gains[:, None] * _sinc_kernel(taps - delays[:, None])
    ok = (taps >= 0) & (taps < num_taps)
    return np.bincount(taps[ok], weights=weights[ok], minlength=num_taps)


OVERSAMPLE = 32


def fractional_impulses(delays: np.ndarray, gains: np.ndarray, num_taps: int) -> np.ndarray:
    """Sum of band-limited impulses at fractional sample ``delays``.

    Each impulse is an 81-tap Hann-windowed sinc centred on its exact delay,
    so an integer delay collapses to a single tap. Impulses are first split
    linearly between the two nearest points of a 1/32-sample grid; every
    grid phase is then filtered once with its own sinc kernel, which costs
    far less than a kernel per image. Taps before t = 0 are dropped.
    """
    U = OVERSAMPLE
    pos = np.asarray(delays, dtype=np.float64) * U
    base = np.floor(pos).astype(np.int64)
    frac = pos - base
    gains = np.asarray(gains, dtype=np.float64)
    length = (num_taps + _HALF + 2) * U
    ok = (base >= 0) & (base + 1 < length)
    fine = np.bincount(base[ok], weights=gains[ok] * (1.0 - frac[ok]), minlength=length)
    fine += np.bincount(base[ok] + 1, weights=gains[ok] * frac[ok], minlength=length)
    out = np.zeros(num_taps)
    lags = np.arange(-_HALF - 1, _HALF + 2)
    for p in range(U):
        x = fine[p::U]
        if not x.any():
            continue
        y = np.convolve(x, _sinc_kernel(lags - p / U))
        # y[i] is output sample i + lags[0]
        lo = -lags[0]
        seg = y[lo:lo + num_taps]
        out[: len(seg)] += seg
    return out


def calibrated_reflection(room, rt60: float, src, receiver, c: float = 340.0) -> float:
    """Uniform pressure reflection coefficient giving a -60 dB decay after ``rt60``.

    Sabine's formula assumes a diffuse field, which a flat shoebox room is
    not: its grazing horizontal reflections make image-method responses decay
    far slower than the formula predicts. Instead, the Schroeder curve of the
    image energies ``beta**(2 n) / d**2`` between ``src`` and ``receiver`` is
    evaluated directly, and ``beta`` is bisected until the curve crosses
    -60 dB ``rt60`` seconds after the direct path.
    """
    room = np.asarray(room, dtype=np.float64)
    src = np.asarray(src, dtype=np.float64)
    receiver = np.asarray(receiver, dtype=np.float64)
    axes = [_axis_images(room[a], src[a], 2.0 * c * rt60 + abs(receiver[a] - src[a]), None) for a in range(3)]
    cx, cy, cz = np.meshgrid(axes[0][0], axes[1][0], axes[2][0], indexing="ij")
    ox, oy, oz = np.meshgrid(axes[0][1], axes[1][1], axes[2][1], indexing="ij")
    pos = np.stack([cx.ravel(), cy.ravel(), cz.ravel()], axis=1)
    d = np.linalg.norm(pos - receiver, axis=1)
    keep = d <= d.min() + 2.0 * c * rt60
    d, order = d[keep], (ox + oy + oz).ravel()[keep]
    sort = np.argsort(d, kind="stable")
    d, order = d[sort], order[sort].astype(np.float64)
    log_spread = -2.0 * np.log(d)

    def decay_time(beta):
        e = np.exp(2.0 * order * np.log(beta) + log_spread)
        tail = np.cumsum(e[::-1])[::-1]
        idx = int(np.argmax(tail <= 1e-6 * tail[0]))
        return (d[idx] - d[0]) / c if idx else np.inf

    lo, hi = 1e-6, 1.0 - 1e-12
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if decay_time(mid) < rt60:
            lo = mid
        else:
            hi = mid
    return float(0.5 * (lo + hi))


def reflection_coefficient(scenario: Scenario, c: float = 340.0, absorption: str = "calibrated") -> float:
    if scenario.rt60 is None:
        return 0.0
    if absorption == "sabine":
        return sabine_reflection(scenario.room, scenario.rt60, c)
    if absorption == "calibrated":
        return calibrated_reflection(scenario.room, scenario.rt60, scenario.source_positions[0], scenario.array_center, c)
    raise ValueError(f"unknown absorption model {absorption!r}")


def image_method_rir(
    scenario: Scenario,
    source_index: int,
    mic_position,
    fs: float = 16000.0,
    c: float = 340.0,
    max_order: int | None = None,
    duration: float | None = None,
    beta: float | None = None,
    absorption: str = "calibrated",
) -> np.ndarray:
    """Impulse response from one source to one microphone position (meters).

    Every image within ``c * duration`` meters contributes
    ``beta**reflections / (4 pi d)`` at delay ``d / c * fs``. ``duration``
    defaults to the scenario RT60; ``max_order`` additionally caps the
    reflection count. Free-field scenarios (``rt60 is None``) keep only the
    direct path. ``beta`` is derived from the RT60 when not given.
    """
    src = scenario.source_positions[source_index]
    mic = np.asarray(mic_position, dtype=np.float64)
    direct = np.linalg.norm(src - mic)
    if scenario.rt60 is None:
        beta, max_order = 0.0, 0
        reach = direct
    else:
        if beta is None:
            beta = reflection_coefficient(scenario, c, absorption)
        reach = c * (duration if duration is not None else scenario.rt60)
        reach = max(reach, direct)
    pos, amp = image_sources(scenario.room, src, beta, max_order, reach, mic)
    d = np.linalg.norm(pos - mic, axis=1)
    num_taps = int(np.ceil(reach / c * fs)) + _HALF + 2
    return fractional_impulses(d / c * fs, amp / (4.0 * np.pi * d), num_taps)


def scenario_rirs(
    scenario: Scenario,
    array: MicArray,
    fs: float = 16000.0,
    c: float = 340.0,
    max_order: int | None = None,
    duration: float | None = None,
    beta: float | None = None,
    absorption: str = "calibrated",
) -> list[list[np.ndarray]]:
    """``rirs[t][m]`` for every source t and microphone m.

    Same result as calling :func:`image_method_rir` per pair, but each
    source's image set is generated once and shared by all microphones.
    """
    mics = scenario.mic_positions(array)
    if scenario.rt60 is None:
        return [[image_method_rir(scenario, t, m, fs, c) for m in mics] for t in range(scenario.num_sources)]
    if beta is None:
        beta = reflection_coefficient(scenario, c, absorption)
    radius = np.linalg.norm(mics - scenario.array_center, axis=1).max()
    base_reach = c * (duration if duration is not None else scenario.rt60)
    out = []
    for t in range(scenario.num_sources):
        src = scenario.source_positions[t]
        direct = np.linalg.norm(mics - src, axis=1)
        reach = np.maximum(base_reach, direct)
        pos, amp = image_sources(scenario.room, src, beta, max_order, reach.max() + 2 * radius, scenario.array_center)
        per_mic = []
        for m, mic in enumerate(mics):
            d = np.linalg.norm(pos - mic, axis=1)
            keep = d <= reach[m]
            num_taps = int(np.ceil(reach[m] / c * fs)) + _HALF + 2
            per_mic.append(fractional_impulses(d[keep] / c * fs, amp[keep] / (4.0 * np.pi * d[keep]), num_taps))
        out.append(per_mic)
    return out


def free_field_scenario(doas, distance: float = 3.0) -> Scenario:
    """Sources at ``distance`` meters along each DOA, array at the origin, no walls."""
    doas = np.atleast_2d(np.asarray(doas, dtype=np.float64))
    return Scenario(
        room=np.full(3, np.inf),
        rt60=None,
        array_center=np.zeros(3),
        rotation=np.eye(3),
        source_positions=distance * doas / np.linalg.norm(doas, axis=1, keepdims=True),
    )


def normalize_rms(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    rms = np.sqrt(np.mean(x**2))
    return x / rms if rms > 0 else x


def render_mixture(rirs, signals, normalize: bool = True) -> np.ndarray:
    """Convolve each source with its per-microphone RIRs and sum: (M, samples).

    Sources are first scaled to unit RMS unless ``normalize`` is False.
    """
    if len(rirs) != len(signals):
        raise ValueError("need one RIR set per source signal")
    num_mics = len(rirs[0])
    length = max(len(s) + len(h) - 1 for s, hs in zip(signals, rirs) for h in hs)
    out = np.zeros((num_mics, length))
    for sig, hs in zip(signals, rirs):
        sig = normalize_rms(sig) if normalize else np.asarray(sig, dtype=np.float64)
        for m, h in enumerate(hs):
            y = fftconvolve(sig, h)
            out[m, : len(y)] += y
    return out


# -- synthetic speech ------------------------------------------------------

def _resonator(freq: float, bandwidth: float, fs: float):
    r = np.exp(-np.pi * bandwidth / fs)
    theta = 2.0 * np.pi * freq / fs
    return [1.0 - r], [1.0, -2.0 * r * np.cos(theta), r * r]


def synth_speech_like(seed, duration: float, fs: float = 16000.0) -> np.ndarray:
    """Syllable-rate bursts of voiced (formant-filtered pulse train) and unvoiced
    (band-passed noise) sound separated by short pauses, scaled to unit RMS.

    Syllable levels are drawn within 6 dB of each other.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(seed)
    n_total = int(round(duration * fs))
    out = np.zeros(n_total)
    fricative = butter(4, [2000.0, 6500.0], btype="bandpass", fs=fs, output="sos")
    pos = 0
    while pos < n_total:
        if pos > 0 and rng.random() < 0.2:
            pos += int(rng.uniform(0.04, 0.15) * fs)
            continue
        n = int(rng.uniform(0.12, 0.30) * fs)
        if rng.random() < 0.75:
            f0 = rng.uniform(90.0, 220.0) * np.linspace(1.0, rng.uniform(0.85, 1.15), n)
            phase = np.cumsum(f0 / fs)
            excitation = np.diff(np.floor(phase), prepend=0.0) + 0.05 * rng.standard_normal(n)
            seg = excitation
            for lo_f, hi_f in ((300.0, 900.0), (900.0, 2500.0), (2300.0, 3500.0)):
                b, a = _resonator(rng.uniform(lo_f, hi_f), rng.uniform(60.0, 200.0), fs)
                seg = lfilter(b, a, seg)
        else:
            seg = sosfilt(fricative, rng.standard_normal(n)) * 0.5
        # formant gains vary by orders of magnitude; give every syllable a comparable level
        seg = normalize_rms(seg) * 10.0 ** (rng.uniform(-6.0, 0.0) / 20.0) * np.hanning(n)
        end = min(pos + n, n_total)
        out[pos:end] += seg[: end - pos]
        pos = end
    return normalize_rms(out)


def save_scenarios(path, scenarios) -> None:
    with open(path, "w") as fh:
        json.dump([s.to_dict() for s in scenarios], fh, indent=2)
