import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svdphat.geometry import MicArray, preset_array
from svdphat.room import (
    Scenario,
    ScenarioConfig,
    ScenarioError,
    check_scenario,
    fractional_impulses,
    fractional_impulses_direct,
    free_field_scenario,
    generate_scenario,
    image_method_rir,
    image_sources,
    reflection_coefficient,
    render_mixture,
    sabine_reflection,
    scenario_rirs,
    synth_speech_like,
)


def schroeder_rt60(h, fs):
    """Time for the backward-integrated energy to fall 60 dB, measured from the peak."""
    start = int(np.argmax(np.abs(h)))
    e = np.cumsum(h[start:][::-1] ** 2)[::-1]
    below = np.flatnonzero(e <= 1e-6 * e[0])
    return below[0] / fs if len(below) else np.inf


def point_scenario(src, mic, room=(10.0, 10.0, 3.0), rt60=None):
    return Scenario(np.array(room, float), rt60, np.array(mic, float), np.eye(3), np.array([src], float))


class TestScenario:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 3))
    def test_invariants(self, seed, T):
        cfg = ScenarioConfig(num_sources=T)
        s = generate_scenario(cfg, seed)
        assert s.num_sources == T
        assert check_scenario(s, cfg) == []
        np.testing.assert_allclose(s.rotation @ s.rotation.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(s.rotation) == pytest.approx(1.0)

    def test_deterministic(self):
        a = generate_scenario(ScenarioConfig(num_sources=3), 7)
        b = generate_scenario(ScenarioConfig(num_sources=3), 7)
        assert a.to_dict() == b.to_dict()

    def test_true_doas_in_array_frame(self):
        s = generate_scenario(ScenarioConfig(num_sources=2), 3)
        rel = s.source_positions - s.array_center
        np.testing.assert_allclose(s.true_doas() @ s.rotation.T, rel / np.linalg.norm(rel, axis=1, keepdims=True))

    def test_check_flags_violations(self):
        s = point_scenario([0.2, 5, 1.5], [5, 5, 1.5], rt60=0.9)
        problems = check_scenario(s, ScenarioConfig())
        assert len(problems) == 2

    def test_impossible_config(self):
        with pytest.raises(ScenarioError):
            generate_scenario(ScenarioConfig(room=(0.8, 0.8, 0.8)), 0)
        with pytest.raises(ScenarioError):
            generate_scenario(ScenarioConfig(num_sources=30, min_separation_deg=90, max_tries=500), 0)

    def test_from_dict(self):
        cfg = ScenarioConfig.from_dict({"room": [5, 4, 3], "num_sources": 2, "unused": 1})
        assert cfg.room == (5.0, 4.0, 3.0) and cfg.num_sources == 2


class TestDirectPath:
    def test_one_meter(self):
        h = image_method_rir(free_field_scenario([1.0, 0, 0], distance=1.0), 0, [0, 0, 0])
        assert 16000 / 340 == pytest.approx(47.0588, abs=1e-4)
        # a fractional delay spreads the impulse; its band-limited peak sits at the true delay
        t = np.arange(len(h))
        ref = np.sinc(t - 16000 / 340) / (4 * np.pi)
        near = np.abs(t - 47) <= 10
        np.testing.assert_allclose(h[near], ref[near], atol=2e-4)
        assert np.argmax(h) == 47

    def test_integer_delay_is_single_tap(self):
        d = 34 * 340 / 16000  # exactly 34 samples
        h = image_method_rir(free_field_scenario([0, 1.0, 0], distance=d), 0, [0, 0, 0])
        assert h[34] == pytest.approx(1 / (4 * np.pi * d))
        assert np.count_nonzero(np.abs(h) > 1e-15) == 1

    def test_inverse_distance(self):
        peak = lambda d: np.sum(image_method_rir(free_field_scenario([0, 0, 1.0], distance=d), 0, [0, 0, 0]))  # noqa: E731
        assert peak(2.0) == pytest.approx(peak(1.0) / 2, rel=1e-3)

    def test_order_zero_matches_free_field(self):
        s = point_scenario([2, 3, 1], [6, 5, 1.5], rt60=0.3)
        h = image_method_rir(s, 0, s.array_center, max_order=0, duration=0.05)
        d = np.linalg.norm(s.source_positions[0] - s.array_center)
        ref = fractional_impulses_direct(np.array([d / 340 * 16000]), np.array([1 / (4 * np.pi * d)]), len(h))
        np.testing.assert_allclose(h, ref, atol=1e-3 * ref.max())


class TestImpulses:
    def test_polyphase_matches_direct(self):
        rng = np.random.default_rng(0)
        delays = rng.uniform(0, 300, 200)
        gains = rng.standard_normal(200)
        fast = fractional_impulses(delays, gains, 400)
        ref = fractional_impulses_direct(delays, gains, 400)
        assert np.max(np.abs(fast - ref)) <= 2e-3 * np.max(np.abs(ref))

    def test_images_first_order(self):
        room, src = np.array([4.0, 5.0, 3.0]), np.array([1.0, 2.0, 1.0])
        pos, amp = image_sources(room, src, 0.5, 1, 100.0, src)
        assert len(pos) == 7
        expect = {(1, 2, 1), (-1, 2, 1), (7, 2, 1), (1, -2, 1), (1, 8, 1), (1, 2, -1), (1, 2, 5)}
        assert {tuple(np.round(p, 9)) for p in pos} == expect
        assert sorted(amp) == [0.5] * 6 + [1.0]


class TestReverberation:
    def test_sabine(self):
        beta = sabine_reflection((10, 10, 3), 0.3)
        alpha = 0.161 * 300 / (2 * (100 + 30 + 30) * 0.3)
        assert beta == pytest.approx(np.sqrt(1 - alpha))
        with pytest.raises(ScenarioError):
            sabine_reflection((10, 10, 3), 0.01)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_schroeder_decay(self, seed):
        s = generate_scenario(ScenarioConfig(), seed)
        array = preset_array("spatial7")
        h = scenario_rirs(s, array, duration=1.5 * s.rt60)[0][3]
        assert schroeder_rt60(h, 16000) == pytest.approx(s.rt60, rel=0.2)

    def test_free_field_has_no_reflections(self):
        assert reflection_coefficient(free_field_scenario([1.0, 0, 0])) == 0.0

    def test_shared_images_match_per_mic(self):
        s = generate_scenario(ScenarioConfig(num_sources=2, rt60_range=(0.2, 0.2)), 5)
        array = preset_array("planar7")
        beta = reflection_coefficient(s)
        rirs = scenario_rirs(s, array, duration=0.05, beta=beta)
        mics = s.mic_positions(array)
        for t, m in [(0, 0), (1, 4)]:
            ref = image_method_rir(s, t, mics[m], duration=0.05, beta=beta)
            np.testing.assert_allclose(rirs[t][m], ref, atol=1e-12)


class TestRender:
    def test_linear_and_silenced_source(self):
        rng = np.random.default_rng(0)
        rirs = [[rng.standard_normal(50) for _ in range(3)] for _ in range(2)]
        a, b = rng.standard_normal(400), rng.standard_normal(400)
        both = render_mixture(rirs, [a, b], normalize=False)
        only_a = render_mixture(rirs, [a, np.zeros(400)], normalize=False)
        np.testing.assert_allclose(both, only_a + render_mixture(rirs, [np.zeros(400), b], normalize=False), atol=1e-12)
        np.testing.assert_allclose(render_mixture(rirs, [3 * a, 3 * b], normalize=False), 3 * both, atol=1e-12)
        np.testing.assert_allclose(render_mixture(rirs[:1], [a], normalize=False), only_a, atol=1e-12)

    def test_sources_normalized(self):
        rirs = [[np.array([1.0])]]
        out = render_mixture(rirs, [np.full(100, 5.0)])
        np.testing.assert_allclose(out, 1.0)

    def test_identical_mics_identical_channels(self):
        s = free_field_scenario([0.3, 0.4, np.sqrt(0.75)])
        rirs = scenario_rirs(s, MicArray(np.zeros((3, 3)) + [0, 0, 0.01]))
        out = render_mixture(rirs, [np.random.default_rng(1).standard_normal(800)])
        np.testing.assert_array_equal(out[0], out[2])

    def test_mismatched_lengths(self):
        with pytest.raises(ValueError):
            render_mixture([[np.ones(3)]], [np.ones(5), np.ones(5)])


class TestSpeech:
    def test_deterministic(self):
        np.testing.assert_array_equal(synth_speech_like(3, 0.5), synth_speech_like(3, 0.5))
        assert not np.array_equal(synth_speech_like(3, 0.5), synth_speech_like(4, 0.5))

    def test_unit_rms(self):
        x = synth_speech_like(0, 1.0)
        assert len(x) == 16000
        assert np.sqrt(np.mean(x**2)) == pytest.approx(1.0)

    def test_speech_band(self):
        x = synth_speech_like(1, 2.0)
        p = np.abs(np.fft.rfft(x)) ** 2
        f = np.fft.rfftfreq(len(x), 1 / 16000)
        assert p[(f > 80) & (f < 7000)].sum() > 0.95 * p.sum()
        assert p[f < 4000].sum() > 0.5 * p.sum()

    def test_syllabic_envelope(self):
        # pauses and Hann-shaped bursts give a strongly modulated short-time level
        x = synth_speech_like(2, 2.0)
        level = np.sqrt(np.mean(x[: 2 * 16000 // 320 * 320].reshape(-1, 320) ** 2, axis=1))
        assert level.max() > 4 * np.median(level) or level.min() < 0.1 * level.max()

    def test_bad_duration(self):
        with pytest.raises(ValueError):
            synth_speech_like(0, 0.0)
