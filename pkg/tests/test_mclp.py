import numpy as np
import pytest

from maskbeam.errors import DegenerateBinError, InputError
from maskbeam.mclp import (
    MclpConfig,
    build_delayed_stack,
    estimate_prediction_filter,
    estimate_rtf,
    estimate_spatial_filter,
    run_mclp,
    update_variance,
)
from maskbeam.stft import AudioBuffer, Spectrogram, StftConfig, analyze


def make_spec(data, fft_size=8):
    """Wrap a (F, T, M) array whose F matches a tiny config."""
    cfg = StftConfig(fft_size=fft_size, hop=fft_size, window="rect", sample_rate=16000)
    return Spectrogram(data, cfg)


class TestDelayedStack:
    def test_single_lag_single_channel(self):
        t = 12
        sig = (np.arange(t) + 1).astype(complex)
        spec = make_spec(np.tile(sig[None, :, None], (5, 1, 1)))
        cfg = MclpConfig(taps=1, delay=1)
        stack = build_delayed_stack(spec, 2, cfg)
        assert stack.shape == (1, t)
        # single row is the signal delayed by delay + 1 = 2 frames
        np.testing.assert_array_equal(stack[0, 2:], sig[:-2])
        np.testing.assert_array_equal(stack[0, :2], 0)

    def test_leading_columns_zero_padded(self):
        t = 20
        rng = np.random.default_rng(0)
        data = rng.standard_normal((5, t, 2)) + 1j * rng.standard_normal((5, t, 2))
        cfg = MclpConfig(taps=3, delay=2)
        stack = build_delayed_stack(make_spec(data), 1, cfg)
        # column n is all zero until the first lag (delay+1) is in range
        np.testing.assert_array_equal(stack[:, :cfg.delay + 1], 0)
        assert np.any(stack[:, cfg.delay + 1] != 0)

    def test_index_arithmetic_oracle(self):
        # counter-valued signal: entry equals the lagged frame index + 1
        t = 16
        m = 2
        base = np.arange(1, t + 1, dtype=complex)
        data = np.stack([base * (ch + 1) for ch in range(m)], axis=1)[None, :, :]
        data = np.tile(data, (5, 1, 1))
        cfg = MclpConfig(taps=2, delay=2)
        stack = build_delayed_stack(make_spec(data), 0, cfg)
        assert stack.shape == (4, t)
        for ch in range(m):
            for lag in range(1, cfg.taps + 1):
                row = stack[ch * cfg.taps + lag - 1]
                for n in range(t):
                    src = n - cfg.delay - lag
                    expected = (src + 1) * (ch + 1) if src >= 0 else 0.0
                    assert row[n] == expected


class TestPredictionFilter:
    def test_uncorrelated_target_gives_small_filter(self):
        rng = np.random.default_rng(1)
        t = 2000
        stack = (rng.standard_normal((4, t)) + 1j * rng.standard_normal((4, t))) / np.sqrt(2)
        y = (rng.standard_normal((1, t)) + 1j * rng.standard_normal((1, t))) / np.sqrt(2)
        g = estimate_prediction_filter(stack, y, np.ones(t), 0.0)
        assert np.linalg.norm(g) <= 0.1

    def test_exact_ar_recovery(self):
        rng = np.random.default_rng(2)
        t = 200
        c = 0.6 - 0.3j
        sig = np.zeros(t, dtype=complex)
        sig[0] = 1.0
        drive = rng.standard_normal(t) + 1j * rng.standard_normal(t)
        for n in range(1, t):
            sig[n] = drive[n]
        # y(n) = c * y(n - 2) exactly, single channel, L=1, D=1
        y = sig + 0j
        target = np.zeros(t, dtype=complex)
        target[2:] = c * y[:-2]
        stack = np.zeros((1, t), dtype=complex)
        stack[0, 2:] = y[:-2]
        g = estimate_prediction_filter(stack, target[None, :], np.ones(t), 0.0)
        np.testing.assert_allclose(g[0, 0], np.conj(c), atol=1e-6)

    def test_equal_weights_match_unweighted(self):
        rng = np.random.default_rng(3)
        t = 64
        stack = rng.standard_normal((6, t)) + 1j * rng.standard_normal((6, t))
        y = rng.standard_normal((2, t)) + 1j * rng.standard_normal((2, t))
        g1 = estimate_prediction_filter(stack, y, np.full(t, 3.7), 0.0)
        r_pp = stack @ stack.conj().T
        r_py = stack @ y.conj().T
        g2 = np.linalg.solve(r_pp, r_py)
        np.testing.assert_allclose(g1, g2, atol=1e-10)


class TestRtf:
    def test_rank_one_noiseless(self):
        rng = np.random.default_rng(4)
        a = np.array([1.0, 0.8 * np.exp(1j * 0.3), 1.2 * np.exp(-1j * 1.1)])
        d = rng.standard_normal(500) + 1j * rng.standard_normal(500)
        resid = np.outer(a, d)
        est = estimate_rtf(resid)
        np.testing.assert_allclose(est, a, atol=1e-8)

    def test_noisy_recovery(self):
        rng = np.random.default_rng(5)
        a = np.array([1.0, 0.5 * np.exp(1j * np.pi / 4)])
        t = 20000
        d = rng.standard_normal(t) + 1j * rng.standard_normal(t)
        noise = (rng.standard_normal((2, t)) + 1j * rng.standard_normal((2, t)))
        noise *= np.sqrt(np.mean(np.abs(np.outer(a, d)) ** 2) * 1e-3 / np.mean(np.abs(noise) ** 2))
        est = estimate_rtf(np.outer(a, d) + noise)
        np.testing.assert_allclose(est, a, atol=1e-2)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(6)
        a = np.array([1.0, 0.6 + 0.2j, 0.9 - 0.4j])
        d = rng.standard_normal(300) + 1j * rng.standard_normal(300)
        resid = np.outer(a, d)
        perm = [2, 0, 1]
        est = estimate_rtf(resid[perm])
        expected = a[perm] / a[perm][0]
        np.testing.assert_allclose(est, expected, atol=1e-8)

    def test_degenerate_reference_raises(self):
        resid = np.zeros((2, 50), dtype=complex)
        resid[1] = 1.0  # all energy in the other channel
        with pytest.raises(DegenerateBinError):
            estimate_rtf(resid, reference=0)


class TestSpatialFilter:
    def test_identity_covariance(self):
        a = np.array([1.0, 0.5 + 0.5j])
        w = estimate_spatial_filter(np.eye(2, dtype=complex), a, 0.0)
        np.testing.assert_allclose(w, a / np.linalg.norm(a) ** 2, atol=1e-12)

    def test_closed_form_2x2(self):
        w = estimate_spatial_filter(np.diag([1.0, 4.0]).astype(complex),
                                    np.array([1.0, 1.0], dtype=complex), 0.0)
        np.testing.assert_allclose(w, [0.8, 0.2], atol=1e-12)

    def test_constraint_exact(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
            r = b @ b.conj().T + np.eye(3)
            a = rng.standard_normal(3) + 1j * rng.standard_normal(3)
            a /= a[0]
            w = estimate_spatial_filter(r, a, 0.0)
            assert abs(np.vdot(w, a) - 1.0) <= 1e-10


class TestUpdateVariance:
    def test_constant_signal(self):
        cfg = MclpConfig()
        d1 = np.full(50, 3.0 + 4.0j)  # |d1| = 5
        gamma = update_variance(d1, cfg, floor=1e-12)
        np.testing.assert_allclose(gamma, 25.0, atol=1e-12)

    def test_zero_signal_floors(self):
        cfg = MclpConfig()
        gamma = update_variance(np.zeros(30, dtype=complex), cfg, floor=1e-4)
        np.testing.assert_allclose(gamma, 1e-4)

    def test_impulse_spread_matches_windowed_mean_oracle(self):
        cfg = MclpConfig(context=1)
        t = 11
        d1 = np.zeros(t, dtype=complex)
        d1[5] = 2.0
        gamma = update_variance(d1, cfg, floor=0.0)
        power = np.abs(d1) ** 2
        # brute-force windowed mean with edge truncation
        oracle = np.array([
            np.mean(power[max(0, n - 1):min(t, n + 2)]) for n in range(t)
        ])
        np.testing.assert_allclose(gamma, oracle, atol=1e-15)


def anechoic_spec(seed=0, t=120, m=3, f=5):
    """y^m(k, n) = a_m x(k, n): no inter-frame correlation, exact rank one."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((f, t)) + 1j * rng.standard_normal((f, t))
    a = np.array([1.0, 0.9 * np.exp(1j * 0.4), 1.1 * np.exp(-1j * 0.7)])[:m]
    data = x[:, :, None] * a[None, None, :]
    return make_spec(data), x, a


class TestRunMclp:
    def test_anechoic_noiseless_passthrough_synthetic(self):
        # iid frames: any prediction is spurious; the leak scales like
        # sqrt(taps*M/T), so the residual mismatch stays small but nonzero
        spec, x, a = anechoic_spec()
        cfg = MclpConfig(taps=2, delay=1, iterations=2)
        d1, state = run_mclp(spec, cfg)
        err = np.linalg.norm(d1.data[:, :, 0] - x) / np.linalg.norm(x)
        assert err <= 0.1  # frozen: 0.0713 measured, sqrt(LM/T) = 0.22
        assert not state.fallback_bins

    def test_anechoic_noiseless_scene_passthrough(self):
        # single-tap RIRs, no noise: d1 tracks the dry source up to the
        # reference-gain convention and the finite-sample prediction leak
        from maskbeam.simharness import SceneConfig, simulate_scene, snr_db, speech_shaped_noise
        from maskbeam.stft import synthesize

        src = AudioBuffer(speech_shaped_noise(32000, seed=100)[None, :], 16000)
        scene = simulate_scene(src, SceneConfig(
            seed=0, snr_db=float("inf"), rir_length=1,
            direct_delays=(0, 0, 0, 0), gains=(1.0, 0.95, 0.9, 0.85)))
        spec = analyze(scene.mixed, StftConfig())
        d1, state = run_mclp(spec, MclpConfig(taps=2, delay=4))
        x = analyze(scene.dry, StftConfig()).data[:, :, 0]
        err = np.linalg.norm(d1.data[:, :, 0] - x) / np.linalg.norm(x)
        assert err <= 0.18  # frozen: 0.143 measured at T=247, sqrt(LM/T)=0.18
        out = synthesize(d1, spec.config)
        out = AudioBuffer(out.samples[:, :scene.dry.num_samples], 16000)
        assert snr_db(scene.dry, out) >= 14.0  # frozen: 17.1 dB measured
        assert not state.fallback_bins

    def test_constraint_invariant(self, small_scene_spec):
        cfg = MclpConfig(iterations=3)
        _, state = run_mclp(small_scene_spec, cfg)
        constraint = np.abs(
            np.einsum("fm,fm->f", state.spatial_filters.conj(), state.rtf) - 1.0
        )
        assert constraint.max() <= 1e-8

    def test_objective_descent_per_iteration(self, small_scene_spec):
        cfg = MclpConfig(iterations=3)
        _, state = run_mclp(small_scene_spec, cfg)
        rel = (state.objective_trace - state.objective_pre_trace) / np.maximum(
            state.objective_pre_trace, 1e-300
        )
        assert rel.max() <= 1e-9

    def test_iterations_prefix_deterministic(self, small_scene_spec):
        _, s1 = run_mclp(small_scene_spec, MclpConfig(iterations=1))
        _, s2 = run_mclp(small_scene_spec, MclpConfig(iterations=2))
        np.testing.assert_array_equal(s1.objective_trace[:, 0], s2.objective_trace[:, 0])

    def test_reverberant_scene_improves_direct_path_correlation(self, small_scene,
                                                                small_scene_spec, stft_cfg):
        from maskbeam.simharness import snr_db
        from maskbeam.stft import synthesize

        d1, _ = run_mclp(small_scene_spec, MclpConfig())
        out = synthesize(d1, stft_cfg)
        out = AudioBuffer(out.samples[:, :small_scene.dry.num_samples], 16000)
        enhanced = snr_db(small_scene.dry, out)
        channels = [snr_db(small_scene.dry, small_scene.mixed.channel(m))
                    for m in range(small_scene.mixed.num_channels)]
        assert enhanced > max(channels)

    def test_channel_permutation_equivariance(self, small_scene_spec):
        perm = [2, 0, 3, 1]
        d1_a, _ = run_mclp(small_scene_spec, MclpConfig(iterations=2, reference_channel=0))
        permuted = Spectrogram(small_scene_spec.data[:, :, perm], small_scene_spec.config)
        d1_b, _ = run_mclp(permuted, MclpConfig(iterations=2, reference_channel=perm.index(0)))
        rel = np.linalg.norm(d1_a.data - d1_b.data) / np.linalg.norm(d1_a.data)
        assert rel <= 1e-8

    def test_global_scaling_equivariance(self, small_scene_spec):
        cfg = MclpConfig(iterations=2, variance_floor=1e-300)
        c = 3.7
        d1_a, _ = run_mclp(small_scene_spec, cfg)
        scaled = Spectrogram(c * small_scene_spec.data, small_scene_spec.config)
        d1_b, _ = run_mclp(scaled, cfg)
        rel = np.linalg.norm(d1_b.data - c * d1_a.data) / np.linalg.norm(c * d1_a.data)
        assert rel <= 1e-10

    def test_too_few_frames_raises(self):
        spec, _, _ = anechoic_spec(t=10)
        with pytest.raises(InputError):
            run_mclp(spec, MclpConfig(taps=10, delay=2))

    def test_bad_reference_channel_raises(self):
        spec, _, _ = anechoic_spec()
        with pytest.raises(InputError):
            run_mclp(spec, MclpConfig(reference_channel=5))
