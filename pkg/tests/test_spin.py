import math

import numpy as np
import pytest
from scipy.linalg import expm

from ghzclock.spin import (
    EnsembleParams,
    PureState,
    SpinError,
    apply_oat,
    apply_rotation,
    build_sss,
    build_state,
    collective_op,
    expectation,
    sss_moments,
    state_moments,
    u_ghz,
    u_ghz_closed,
)


def max_phase_dev(a, b):
    """Elementwise deviation after aligning one global phase."""
    idx = np.argmax(np.abs(b))
    return np.max(np.abs(a - (a.flat[idx] / b.flat[idx]) * b))


class TestEnsembleParams:
    def test_rejects_bad_atom_count(self):
        with pytest.raises(SpinError):
            EnsembleParams(0, 1.0, 0.0)

    def test_rejects_negative_rate(self):
        with pytest.raises(SpinError):
            EnsembleParams(2, -0.1, 0.0)

    def test_gamma_total(self):
        assert EnsembleParams(2, 0.75, 0.5).gamma_total == 1.25


class TestBuildState:
    def test_ground_single_atom(self):
        assert np.allclose(build_state("ground", 1).amplitudes, [1.0, 0.0])

    def test_ghz_two_atoms(self):
        r = 1.0 / math.sqrt(2.0)
        assert np.allclose(build_state("ghz", 2).amplitudes, [r, 0.0, 0.0, r])

    def test_css_two_atoms(self):
        assert np.allclose(build_state("css", 2).amplitudes, [0.5, 0.5, 0.5, 0.5])

    def test_rejects_nonpositive_n(self):
        with pytest.raises(SpinError):
            build_state("ghz", 0)

    def test_rejects_unknown_kind(self):
        with pytest.raises(SpinError):
            build_state("w_state", 3)


class TestRotations:
    def test_pi_pulse_excites_single_atom(self):
        out = apply_rotation(build_state("ground", 1), math.pi, "x")
        assert abs(abs(out.amplitudes[1]) - 1.0) < 1e-12

    def test_z_rotation_only_phases_ghz(self):
        state = build_state("ghz", 2)
        out = apply_rotation(state, 0.7123, "z")
        assert np.allclose(np.abs(out.amplitudes), np.abs(state.amplitudes), atol=1e-12)
        # relative phase between the two branches is exp(+-i theta m), m = +-1
        rel = out.amplitudes[3] / out.amplitudes[0]
        assert abs(rel - np.exp(-2j * 0.7123)) < 1e-12

    def test_rotation_inverse(self):
        state = build_state("css", 3)
        back = apply_rotation(apply_rotation(state, math.pi / 2, "x"), -math.pi / 2, "x")
        assert max_phase_dev(back.amplitudes, state.amplitudes) < 1e-12

    def test_norm_preserved(self):
        rng = np.random.default_rng(0)
        for axis in "xyz":
            state = build_state("css", 4)
            out = apply_rotation(state, rng.uniform(-3, 3), axis)
            assert abs(np.linalg.norm(out.amplitudes) - 1.0) < 1e-12


class TestOneAxisTwisting:
    def test_zero_twist_is_identity(self):
        state = build_state("css", 3)
        assert np.allclose(apply_oat(state, 0.0, "x").amplitudes, state.amplitudes)

    def test_twist_untwist(self):
        state = build_state("css", 4)
        out = apply_oat(apply_oat(state, 0.83, "x"), -0.83, "x")
        assert max_phase_dev(out.amplitudes, state.amplitudes) < 1e-12

    @pytest.mark.parametrize("n", [2, 4])
    def test_matches_matrix_exponential(self, n):
        # independent oracle: dense expm of -i mu/2 Sx^2
        mu = 1.37
        sx = collective_op(n, "x")
        u = expm(-0.5j * mu * (sx @ sx))
        state = build_state("css", n)
        direct = u @ state.amplitudes
        fast = apply_oat(state, mu, "x").amplitudes
        assert np.max(np.abs(direct - fast)) < 1e-12

    @pytest.mark.parametrize("n", [2, 4, 6])
    def test_pi_twist_of_css_is_cat_state(self, n):
        # mu = pi twisting about z turns the x-polarized css into an equal
        # two-branch superposition of +-x coherent states (ghz class)
        twisted = apply_oat(build_state("css", n), math.pi, "z")
        plus = np.array([1.0, 1.0]) / math.sqrt(2)
        minus = np.array([1.0, -1.0]) / math.sqrt(2)
        vp = vm = np.array([1.0])
        for _ in range(n):
            vp = np.kron(vp, plus)
            vm = np.kron(vm, minus)
        overlaps = [
            abs(np.vdot((np.exp(s * 0.25j * math.pi) * vp + np.exp(-s * 0.25j * math.pi) * vm) / math.sqrt(2),
                        twisted.amplitudes))
            for s in (1, -1)
        ]
        assert max(overlaps) > 1.0 - 1e-12


class TestEntanglingPulse:
    def test_ground_state_output_n2(self):
        # (|dd> + i^3 |uu>)/sqrt2 up to a global phase
        psi = u_ghz(2)[:, 0]
        ref = np.array([1.0, 0.0, 0.0, 1j**3]) / math.sqrt(2)
        assert max_phase_dev(psi, ref) < 1e-12

    @pytest.mark.parametrize("n", range(1, 9))
    def test_unitarity(self, n):
        u = u_ghz(n)
        assert np.max(np.abs(u @ u.conj().T - np.eye(2**n))) < 1e-12

    @pytest.mark.parametrize("n", range(1, 11))
    def test_matches_closed_form_up_to_global_phase(self, n):
        assert max_phase_dev(u_ghz(n), u_ghz_closed(n)) < 1e-12


class TestSqueezedMoments:
    def test_css_limit(self):
        m = sss_moments(6, 0.0)
        assert m.mean_sx == pytest.approx(3.0, abs=1e-14)
        assert m.var_sy == pytest.approx(1.5, abs=1e-14)

    def test_contrast_vanishes_at_pi_for_n4(self):
        assert sss_moments(4, math.pi).mean_sx == pytest.approx(0.0, abs=1e-14)

    def test_matches_brute_force_n6(self):
        state = build_sss(6, 0.4)
        brute = state_moments(state)
        closed = sss_moments(6, 0.4)
        assert brute.mean_sx == pytest.approx(closed.mean_sx, abs=1e-10)
        assert brute.var_sy == pytest.approx(closed.var_sy, abs=1e-10)

    @pytest.mark.parametrize("n", range(2, 11))
    def test_matches_brute_force_grid(self, n):
        sy = collective_op(n, "y")
        sy2 = sy @ sy
        sx = collective_op(n, "x")
        for mu in np.linspace(math.pi / 20, math.pi, 20):
            state = build_sss(n, mu)
            closed = sss_moments(n, mu)
            assert abs(expectation(state, sx) - closed.mean_sx) < 1e-10
            assert abs(expectation(state, sy2) - closed.var_sy) < 1e-10
            assert abs(expectation(state, sy)) < 1e-10

    def test_rejects_single_atom(self):
        with pytest.raises(SpinError):
            sss_moments(1, 0.3)


class TestStateValidation:
    def test_rejects_unnormalized(self):
        with pytest.raises(SpinError):
            PureState(np.array([1.0, 1.0]))

    def test_rejects_bad_length(self):
        with pytest.raises(SpinError):
            PureState(np.array([1.0, 0.0, 0.0]))
