"""Simulation campaigns: random reverberant scenarios localized by both methods.

Every scenario is rendered once per array geometry, so each (geometry, T)
cell sees the same rooms, poses and source signals. Work is split per
scenario across a process pool; results are gathered in submission order,
which keeps every output file independent of the worker count.
"""

from __future__ import annotations

import csv
import json
import logging
import multiprocessing as mp
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry import resolve_array
from .metrics import campaign_summary, frame_error, rmse
from .pipeline import ESTIMATE_FIELDS, Localizer, RunConfig, estimate_rows, get_model, write_wav
from .room import ScenarioConfig, generate_scenario, reflection_coefficient, render_mixture, scenario_rirs, synth_speech_like

log = logging.getLogger(__name__)

DEFAULT_GEOMETRIES = ("linear7", "planar7", "spatial7")


@dataclass(frozen=True)
class CampaignConfig:
    geometries: tuple = DEFAULT_GEOMETRIES
    source_counts: tuple = (1, 2, 3)
    scenarios_per_cell: int = 50
    duration: float = 1.0
    room: tuple = (10.0, 10.0, 3.0)
    rt60_range: tuple = (0.2, 0.5)
    seed: int = 0
    save_audio: bool = False
    run: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        if self.scenarios_per_cell < 1:
            raise ValueError("scenarios_per_cell must be >= 1")
        if self.duration * self.run.fs < self.run.frame_size:
            raise ValueError("duration is shorter than one frame")
        if not self.geometries or not self.source_counts:
            raise ValueError("need at least one geometry and one source count")
        if any(t < 1 for t in self.source_counts):
            raise ValueError("source counts must be >= 1")

    @classmethod
    def from_dict(cls, d: dict, run: RunConfig | None = None) -> "CampaignConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__ and k != "run"}
        for key in ("geometries", "source_counts", "room", "rt60_range"):
            if key in known:
                known[key] = tuple(known[key])
        run = run or RunConfig()
        if isinstance(d.get("run"), dict):
            run = replace(run, **d["run"])
        return cls(run=run, **known)

    def scenario_config(self, num_sources: int) -> ScenarioConfig:
        return ScenarioConfig(room=tuple(self.room), rt60_range=tuple(self.rt60_range), num_sources=num_sources)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["run"] = self.run.to_dict()
        return d


def scenario_seed(seed: int, num_sources: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, num_sources, index])


def source_signals(seed: int, num_sources: int, index: int, duration: float, fs: float) -> list[np.ndarray]:
    return [synth_speech_like(np.random.SeedSequence([seed, num_sources, index, 1000 + t]), duration, fs) for t in range(num_sources)]


# -- worker side -----------------------------------------------------------

_WORKER: dict = {}


def _init_worker(cfg: CampaignConfig, cache_dir: str):
    _WORKER["cfg"] = cfg
    _WORKER["localizers"] = {}
    for name in cfg.geometries:
        array = resolve_array(name)
        run = replace(cfg.run, geometry=name, method="both")
        _WORKER["localizers"][name] = Localizer(array, run, cache_dir=cache_dir)


def _run_scenario(job):
    """Render and localize one scenario for every geometry."""
    t_count, index, audio_dir = job
    cfg: CampaignConfig = _WORKER["cfg"]
    fs, c = cfg.run.fs, cfg.run.c
    scenario = generate_scenario(cfg.scenario_config(t_count), scenario_seed(cfg.seed, t_count, index))
    signals = source_signals(cfg.seed, t_count, index, cfg.duration, fs)
    beta = reflection_coefficient(scenario, c)
    truths = scenario.true_doas()
    num_samples = len(signals[0])
    out = {"scenario": scenario.to_dict() | {"num_sources": t_count, "index": index, "beta": beta}, "geometries": {}}
    for name, loc in _WORKER["localizers"].items():
        rirs = scenario_rirs(scenario, loc.array, fs, c, beta=beta)
        audio = render_mixture(rirs, signals)[:, :num_samples]
        if audio_dir is not None:
            write_wav(Path(audio_dir) / f"{name}_T{t_count}_{index:04d}.wav", audio / max(1.0, np.abs(audio).max()), fs)
        frames = loc.process(audio, num_scans=t_count)
        beta_class = loc.array.geometry_class()
        phi = {"srp": [], "svd": []}
        counted = []
        for fr in frames:
            if not (fr.srp or fr.svd):
                continue
            counted.append(fr.frame)
            for method in ("srp", "svd"):
                phi[method].append(frame_error(fr.get(method), truths, beta_class))
        estimates = list(estimate_rows(frames, ["srp", "svd"]))
        result = {"frames": counted, "estimates": estimates}
        for method in ("srp", "svd"):
            errors = np.array(phi[method]).reshape(len(counted), t_count)
            result[method] = errors
            result[f"rmse_{method}"] = rmse(errors) if len(counted) else float("nan")
        out["geometries"][name] = result
    return out


# -- driver ----------------------------------------------------------------

def prepare_models(cfg: CampaignConfig, cache_dir) -> None:
    """Build (or load) each geometry's SVD-PHAT model once before the pool starts."""
    for name in cfg.geometries:
        get_model(resolve_array(name), replace(cfg.run, geometry=name), cache_dir)


def run_campaign(cfg: CampaignConfig, out_dir, workers: int = 1, cache_dir=None) -> list:
    """Run every scenario, write the result files into ``out_dir`` and return the summary rows.

    Files: ``scenarios.json``, ``estimates.csv``, ``frame_errors.csv``,
    ``rmse.csv``, ``summary.csv`` and ``metadata.json``; with ``save_audio``
    the rendered mixtures go to ``audio/``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache = Path(cache_dir) if cache_dir is not None else out / "models"
    prepare_models(cfg, cache)
    audio_dir = None
    if cfg.save_audio:
        audio_dir = out / "audio"
        audio_dir.mkdir(exist_ok=True)
    jobs = [(t, i, None if audio_dir is None else str(audio_dir)) for t in cfg.source_counts for i in range(cfg.scenarios_per_cell)]
    log.info("running %d scenarios x %d geometries on %d worker(s)", len(jobs), len(cfg.geometries), workers)
    if workers > 1:
        ctx = mp.get_context("spawn")
        with ctx.Pool(workers, initializer=_init_worker, initargs=(cfg, str(cache))) as pool:
            results = pool.map(_run_scenario, jobs, chunksize=1)
    else:
        _init_worker(cfg, str(cache))
        results = [_run_scenario(job) for job in jobs]
    return write_results(cfg, results, out)


def write_results(cfg: CampaignConfig, results: list, out: Path) -> list:
    with open(out / "scenarios.json", "w") as fh:
        json.dump([r["scenario"] for r in results], fh, indent=2)

    records = []
    with open(out / "estimates.csv", "w", newline="") as f_est, open(out / "frame_errors.csv", "w", newline="") as f_err, open(
        out / "rmse.csv", "w", newline=""
    ) as f_rmse:
        w_est, w_err, w_rmse = csv.writer(f_est), csv.writer(f_err), csv.writer(f_rmse)
        w_est.writerow(["geometry", "num_sources", "scenario"] + ESTIMATE_FIELDS)
        w_err.writerow(["geometry", "num_sources", "scenario", "frame", "source", "phi_srp", "phi_svd"])
        w_rmse.writerow(["geometry", "num_sources", "scenario", "rt60", "frames", "rmse_srp", "rmse_svd"])
        for name in cfg.geometries:
            for r in results:
                t, i = r["scenario"]["num_sources"], r["scenario"]["index"]
                g = r["geometries"][name]
                for row in g["estimates"]:
                    w_est.writerow([name, t, i] + row)
                for l, frame in enumerate(g["frames"]):
                    for s in range(t):
                        w_err.writerow([name, t, i, frame, s, f"{g['srp'][l, s]:.9f}", f"{g['svd'][l, s]:.9f}"])
                w_rmse.writerow([name, t, i, f"{r['scenario']['rt60']:.6f}", len(g["frames"]), f"{g['rmse_srp']:.9f}", f"{g['rmse_svd']:.9f}"])
                for method in ("srp", "svd"):
                    records.append((name, t, method, g[f"rmse_{method}"]))

    rows = campaign_summary(records)
    write_summary(rows, out / "summary.csv")
    meta = {
        "config": cfg.to_dict(),
        "frame_policy": "a frame counts towards L when at least one method emits an estimate; "
        "a method with no estimate in a counted frame scores pi for every source",
        "mixture_length": "each mixture is truncated to the source signal duration",
        "num_scans": "R equals the number of sources T",
    }
    with open(out / "metadata.json", "w") as fh:
        json.dump(meta, fh, indent=2)
    return rows


def write_summary(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["geometry", "num_sources", "simulations", "rmse_srp", "rmse_svd", "delta"])
        for row in rows:
            w.writerow([row.geometry, row.num_sources, row.count, f"{row.srp:.6f}", f"{row.svd:.6f}", f"{row.delta:.6f}"])
