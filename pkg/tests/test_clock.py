import math

import numpy as np
import pytest

from ghzclock.clock import (
    CA_PLUS_PRESET,
    ClockError,
    ClockTrace,
    LOModel,
    ServoConfig,
    allan_deviation,
    detect_fringe_hops,
    adev_prediction,
    extrapolate_floor,
    gen_lo_noise,
    overlapping_allan,
    run_clock,
)
from ghzclock.protocols import ProtocolSpec, make_estimator, phase_uncertainty_closed
from ghzclock.spin import EnsembleParams

CARRIER = CA_PLUS_PRESET["carrier"]


def make_trace(y, T, n_atoms=4, phi_offset=None, phases=None):
    """Synthetic trace with prescribed fractional frequency or phases."""
    n = len(y) if phases is None else len(phases)
    phi0 = math.pi / (2 * n_atoms) if phi_offset is None else phi_offset
    return ClockTrace(
        true_phase=np.full(n, phi0) if phases is None else phases,
        outcome=np.zeros(n),
        estimate=np.zeros(n),
        correction=np.zeros(n) if phases is not None else -np.asarray(y) * CARRIER,
        lo_offset=np.zeros(n),
        cycle_period=T,
        n_atoms=n_atoms,
        working_point=phi0,
        carrier=CARRIER,
    )


class TestLoNoise:
    def test_none_kind_is_silent(self):
        assert np.all(gen_lo_noise(LOModel("none"), 1000, 0.1, 1) == 0.0)

    def test_deterministic_per_seed(self):
        lo = LOModel("flicker", coherence_time=7.5)
        a = gen_lo_noise(lo, 4096, 0.5, 42)
        b = gen_lo_noise(lo, 4096, 0.5, 42)
        assert np.array_equal(a, b)

    def test_flicker_phase_calibration(self):
        # rms phase accumulated over the coherence time ~ 1 rad (+-10%)
        z, t = 7.5, 0.5
        lo = LOModel("flicker", coherence_time=z)
        m = int(round(z / t))
        sq = []
        for seed in range(20):
            w = gen_lo_noise(lo, 2**15, t, seed)
            nwin = w.size // m
            phases = np.add.reduceat(w * t, np.arange(0, nwin * m, m))
            sq.append(np.mean(phases**2))
        assert math.sqrt(np.mean(sq)) == pytest.approx(1.0, abs=0.1)

    def test_flicker_allan_is_flat(self):
        lo = LOModel("flicker", coherence_time=7.5)
        y = gen_lo_noise(lo, 2**17, 0.5, 123) / CARRIER
        ks = np.unique(np.round(np.geomspace(4, 2**17 // 100, 25)).astype(int))
        taus, sig = overlapping_allan(y, 0.5, ks * 0.5)
        logt = np.log10(taus)
        center = 0.5 * (logt.min() + logt.max())
        mask = np.abs(logt - center) <= 1.0
        slope = np.polyfit(logt[mask], np.log10(sig[mask]), 1)[0]
        assert abs(slope) < 0.15

    def test_white_noise_level(self):
        lo = LOModel("white", flicker_floor=1e-15)
        t = 0.25
        w = gen_lo_noise(lo, 200_000, t, 7)
        sigma_y = w.std() / CARRIER
        assert sigma_y == pytest.approx(1e-15 / math.sqrt(t), rel=0.02)

    def test_band_guard(self):
        with pytest.raises(ClockError):
            gen_lo_noise(LOModel("flicker", coherence_time=7.5), 4, 0.1, 1)

    def test_model_validation(self):
        with pytest.raises(ClockError):
            LOModel("flicker")  # missing coherence time
        with pytest.raises(ClockError):
            LOModel("white")  # missing floor
        with pytest.raises(ClockError):
            LOModel("purple")


class TestOverlappingAllan:
    def test_white_fm_law(self):
        rng = np.random.default_rng(5)
        v = 2.3e-30
        y = rng.normal(0.0, math.sqrt(v), 10**6)
        taus, sig = overlapping_allan(y, 1.0, [10.0])
        assert sig[0] == pytest.approx(math.sqrt(v / 10.0), rel=0.05)

    def test_constant_offset_gives_zero(self):
        trace = make_trace(np.full(5000, 3.7e-14), 0.1)
        taus, sig = overlapping_allan(trace.fractional_frequency(), 0.1, [0.5, 1.0])
        assert np.allclose(sig, 0.0, atol=1e-25)

    def test_rejects_non_multiple_tau(self):
        with pytest.raises(ClockError):
            overlapping_allan(np.zeros(100), 0.1, [0.25])

    def test_rejects_insufficient_samples(self):
        with pytest.raises(ClockError):
            overlapping_allan(np.zeros(10), 1.0, [6.0])


class TestExtrapolation:
    def test_pure_white_floor(self):
        rng = np.random.default_rng(11)
        y = rng.normal(0.0, 1e-15, 400_000)
        ks = np.unique(np.round(np.geomspace(1, 4000, 24)).astype(int))
        taus, sig = overlapping_allan(y, 1.0, ks.astype(float))
        assert extrapolate_floor(taus, sig) == pytest.approx(1e-15, rel=0.05)


class TestRunClock:
    def base_config(self, kind="heralded_ghz", n=2, gamma=0.0):
        params = EnsembleParams(n, gamma, 0.0)
        spec = ProtocolSpec(kind, params)
        return spec, LOModel("none"), ServoConfig()

    def test_deterministic_trace(self):
        spec, lo, servo = self.base_config(n=4, gamma=0.9)
        est = make_estimator(spec, 0.2)
        a = run_clock(spec, est, lo, servo, 0.2, 2000, seed=9)
        b = run_clock(spec, est, lo, servo, 0.2, 2000, seed=9)
        for field in ("true_phase", "outcome", "estimate", "correction", "lo_offset"):
            assert np.array_equal(getattr(a, field), getattr(b, field), equal_nan=True)

    def test_quiet_lock_at_working_point(self):
        # no LO noise, no decay: outcomes +-N/2 equally likely, zero-mean
        # error signal, servo stays at the working point on average
        spec, lo, servo = self.base_config(n=2, gamma=0.0)
        est = make_estimator(spec, 0.2)
        trace = run_clock(spec, est, lo, servo, 0.2, 20000, seed=3)
        assert set(np.unique(trace.outcome)) <= {-1.0, 1.0}
        assert abs(np.nanmean(trace.estimate) - spec.phi0) < 0.02
        assert abs(np.mean(trace.correction)) < 0.05 / 0.2
        assert detect_fringe_hops(trace)[0] == 0

    def test_servo_converges_to_constant_offset(self):
        # deterministic check over the supported gain range: a css clock with
        # a constant LO offset and no projection noise snaps onto it
        params = EnsembleParams(400, 0.0, 0.0)
        spec = ProtocolSpec("css", params)
        offset = 0.37
        for gain in (0.1, 0.5, 1.0):
            correction = 0.0
            integrator = 0.0
            servo = ServoConfig(gain, 0.0)
            err_history = []
            for _ in range(1000):
                phi = (offset - correction) * 0.1
                est_phi = phi  # noise-free readout of the tracking error
                err = est_phi / 0.1
                integrator += err
                correction += servo.primary_gain * err + servo.integral_gain * integrator
                err_history.append(phi)
            assert abs(np.mean(err_history[-100:])) < 1e-3

    def test_heralded_discard_accounting(self):
        gamma = CA_PLUS_PRESET["gamma_decay"]
        params = EnsembleParams(4, gamma, 0.0)
        spec = ProtocolSpec("heralded_ghz", params)
        t = 0.11
        est = make_estimator(spec, t)
        trace = run_clock(spec, est, LOModel("none"), ServoConfig(), t, 50_000, seed=21)
        s = math.exp(-gamma * t)
        p_keep = 0.5 * (1.0 + (1.0 - s) ** 4 + s**4)
        sigma = math.sqrt(p_keep * (1.0 - p_keep) / 50_000)
        assert trace.discard_fraction() == pytest.approx(1.0 - p_keep, abs=4 * sigma)
        # discarded cycles leave the correction untouched
        nan_mask = np.isnan(trace.estimate)
        deltas = np.diff(trace.correction)
        assert np.all(deltas[nan_mask[:-1]] == 0.0)

    def test_ca_preset_values(self):
        assert CA_PLUS_PRESET["gamma_decay"] == pytest.approx(1.0 / 1.1)
        assert CA_PLUS_PRESET["carrier"] == pytest.approx(2 * math.pi * 411.042e12)
        assert CA_PLUS_PRESET["coherence_time"] == 7.5

    def test_eq_adev_consistency_no_lo_noise(self):
        # sigma_y sqrt(tau) flat over the fit decade and floor at the
        # projection-noise prediction, averaged over 10 runs
        gamma = CA_PLUS_PRESET["gamma_decay"]
        params = EnsembleParams(4, gamma, 0.0)
        spec = ProtocolSpec("heralded_ghz", params)
        t = 0.11
        est = make_estimator(spec, t)
        ks = np.unique(np.round(np.geomspace(1, 1000, 24)).astype(int))
        profiles, floors = [], []
        for run in range(10):
            trace = run_clock(spec, est, LOModel("none"), ServoConfig(), t, 100_000, seed=[55, run])
            taus, sig = overlapping_allan(trace.fractional_frequency(), t, ks * t)
            profiles.append(sig * np.sqrt(taus))
            floors.append(extrapolate_floor(taus, sig))
        profile = np.mean(profiles, axis=0)
        fit_region = profile[ks >= ks.max() / 10]
        assert (fit_region.max() - fit_region.min()) / fit_region.mean() < 0.05
        floors = np.array(floors)
        pred = adev_prediction(math.sqrt(phase_uncertainty_closed(spec, t)), t, CARRIER)
        se = floors.std(ddof=1) / math.sqrt(floors.size)
        assert abs(floors.mean() - pred) < 3 * se


class TestFringeHops:
    def test_quiet_trace_has_no_hops(self):
        trace = make_trace(np.zeros(5000), 0.1)
        assert detect_fringe_hops(trace) == (0, [])

    def test_single_injected_step_counts_once(self):
        n_atoms = 4
        phi0 = math.pi / (2 * n_atoms)
        phases = np.full(5000, phi0)
        phases[2500:] += 2 * math.pi / n_atoms
        trace = make_trace(None, 0.1, phases=phases)
        count, cycles = detect_fringe_hops(trace)
        assert count == 1
        assert 2500 <= cycles[0] <= 2700

    def test_step_and_return_counts_twice(self):
        n_atoms = 4
        phi0 = math.pi / (2 * n_atoms)
        phases = np.full(6000, phi0)
        phases[2000:4000] += 2 * math.pi / n_atoms
        trace = make_trace(None, 0.1, phases=phases)
        count, _ = detect_fringe_hops(trace)
        assert count == 2

    def test_allan_estimate_carries_hop_count(self):
        trace = make_trace(np.zeros(5000), 0.1)
        result = allan_deviation(trace, [1.0, 2.0])
        assert result.hop_count == 0
        assert result.sigma_y_at_1s == pytest.approx(0.0, abs=1e-30)


class TestOtherProtocolLoops:
    @pytest.mark.parametrize("kind,twist", [("parity_ghz", None), ("sss", 0.5)])
    def test_loop_tracks_with_linear_estimators(self, kind, twist):
        params = EnsembleParams(4, 0.2, 0.0)
        spec = ProtocolSpec(kind, params, twist_mu=twist)
        t = 0.2
        est = make_estimator(spec, t)
        trace = run_clock(spec, est, LOModel("none"), ServoConfig(), t, 20_000, seed=17)
        # locked loop: mean tracking error stays well inside a fringe
        err = trace.true_phase - trace.working_point
        assert abs(np.mean(err[5000:])) < 0.05
        assert detect_fringe_hops(trace)[0] == 0
