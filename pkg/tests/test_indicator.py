"""Error indicators against hand-assembled oracles and exact-zero cases."""

import numpy as np
import pytest

from flowadapt import forward, mesh as meshmod, numflux
from flowadapt.adjoint import run_adjoint
from flowadapt.errors import ConfigurationError
from flowadapt.functional import QuarticWindow, VolumeFunctional
from flowadapt.indicator import (compute_eta_h, compute_eta_k,
                                 efficiency_index, eta_k_from_weights)
from flowadapt.physics import Burgers1D, LinearAdvection1D


class StubDual:
    def __init__(self, means):
        self.means = means

    def interval_mean(self, m):
        return self.means[m]


class StubFunctional:
    """psi(x, t) = x * t, one variable."""

    def volume_weight(self, x, t, k):
        out = np.zeros((x.shape[0], k))
        out[:, 0] = x[:, 0] * t
        return out

    def boundary_weight(self, mesh, t):
        return None


def tiny_burgers_traj(modes):
    m = meshmod.build_interval_mesh(0.0, 3.0, 3)
    model = Burgers1D()
    states = np.array([[[1.0], [2.0], [3.0]],
                       [[2.0], [4.0], [6.0]],
                       [[3.0], [5.0], [7.0]]])
    return forward.Trajectory(
        mesh=m, model=model,
        times=np.array([0.0, 0.1, 0.3]),
        dts=np.array([0.1, 0.2]),
        modes=np.array(modes, dtype=np.int64),
        states=states,
        newton_iters=np.zeros(2, dtype=np.int64),
        linear_iters=np.zeros(2, dtype=np.int64),
    )


W_MEANS = [
    np.array([0.3, -0.2, 0.5])[:, None, None],
    np.array([0.1, 0.4, -0.3])[:, None, None],
]


class TestEtaKHandValues:
    """Fully hand-computed pairings on a three cell trajectory.

    Explicit step 1: dU = U1 - U0 = (1, 2, 3), fluxes at U1 = (2, 4, 6),
    t_mid = 0.2, psi = (0.1, 0.3, 0.5), A^T w = (0.2, 1.6, -1.8), so the
    pairing is (-0.1, -2.6, 6.9); unit volumes give 0.5 * 0.2 * 4.2 = 0.42
    and bar 0.5 * 9.6 = 4.8.
    """

    def test_explicit_steps(self):
        traj = tiny_burgers_traj([0, 0])
        res = compute_eta_k(traj, StubDual(W_MEANS), StubFunctional())
        assert res.steps[0] == 0.0  # first explicit step has no time slope
        assert res.bar_steps[0] == 0.0
        assert np.isclose(res.steps[1], 0.42, rtol=1e-13)
        assert np.isclose(res.bar_steps[1], 4.8, rtol=1e-13)
        assert np.isclose(res.total, 0.42, rtol=1e-13)
        assert np.isclose(res.bar_total, 0.2 * 4.8, rtol=1e-13)

    def test_implicit_steps(self):
        # step 0: dU = (1,2,3), fluxes at U1, t_mid = 0.05,
        #   psi = (0.025, 0.075, 0.125), A^T w = (0.6, -0.8, 3.0)
        # step 1: dU = (1,1,1), fluxes at U2, t_mid = 0.2,
        #   psi = (0.1, 0.3, 0.5), A^T w = (0.3, 2.0, -2.1)
        traj = tiny_burgers_traj([1, 1])
        res = compute_eta_k(traj, StubDual(W_MEANS), StubFunctional())
        assert np.isclose(res.steps[0], -0.3725, rtol=1e-13)
        assert np.isclose(res.steps[1], 0.07, rtol=1e-13)

    def test_from_weights_matches_naive_loop(self):
        traj = tiny_burgers_traj([0, 1])
        rng = np.random.default_rng(20250811)
        weights = rng.normal(size=(2, 3, 1))
        res = eta_k_from_weights(traj, weights)
        for m in range(2):
            theta = 1.0 if traj.modes[m] == 1 else 0.0
            signed = 0.0
            bar = 0.0
            for i in range(3):
                du = theta * (traj.states[m + 1, i, 0] - traj.states[m, i, 0])
                if m > 0:
                    du += (1 - theta) * (traj.states[m, i, 0]
                                         - traj.states[m - 1, i, 0])
                pair = du * weights[m, i, 0]
                signed += traj.mesh.volumes[i] * pair
                bar += traj.mesh.volumes[i] * abs(pair)
            assert np.isclose(res.steps[m], 0.5 * traj.dts[m] * signed,
                              rtol=1e-13)
            assert np.isclose(res.bar_steps[m], 0.5 * bar, rtol=1e-13)


class TestEtaHOracle:
    def test_matches_naive_face_loop(self):
        traj = tiny_burgers_traj([0, 0])
        m = traj.mesh
        bc = numflux.BoundarySpec({
            "left": ("farfield", np.array([1.0])),
            "right": ("farfield", np.array([-1.0])),
        })
        op = forward.SpatialOperator(m, traj.model, bc)
        dual = StubDual(W_MEANS)
        res = compute_eta_h(traj, op, dual, granularity="face")
        for step in range(2):
            U = traj.states[step]  # explicit: fluxes at the start state
            _, Fb = op.face_fluxes(U, traj.times[step])
            w = dual.means[step][:, 0, 0]
            signed = 0.0
            bar = 0.0
            for f in range(m.f_left.shape[0]):
                i, j = m.f_left[f], m.f_right[f]
                dF = 0.5 * (0.5 * U[j, 0] ** 2 - 0.5 * U[i, 0] ** 2) \
                    * m.f_normal[f, 0]
                ti = m.f_area[f] * dF * (m.f_centroid[f, 0]
                                         - m.centroids[i, 0]) * w[i]
                tj = m.f_area[f] * dF * (m.f_centroid[f, 0]
                                         - m.centroids[j, 0]) * w[j]
                signed += ti + tj
                bar += abs(ti) + abs(tj)
            for b in range(m.b_cell.shape[0]):
                i = m.b_cell[b]
                defect = Fb[b, 0] - 0.5 * U[i, 0] ** 2 * m.b_normal[b, 0]
                tb = m.b_area[b] * defect * (m.b_centroid[b, 0]
                                             - m.centroids[i, 0]) * w[i]
                signed += tb
                bar += abs(tb)
            assert np.isclose(res.steps[step], -traj.dts[step] * signed,
                              rtol=1e-12, atol=1e-15)
            assert np.isclose(res.bar_steps[step], bar, rtol=1e-12)

    def test_granularities_agree_on_signed_totals(self):
        from flowadapt.scenario import burgers_perturbed_shock

        sc = burgers_perturbed_shock(0)
        op = sc.operator()
        traj = forward.run_forward(sc.initial_field(), 0.08, op,
                                   forward.SchemeConfig(cfl=0.5, theta=0.0))
        dual = run_adjoint(traj, sc.functional)
        cell = compute_eta_h(traj, op, dual, granularity="cell")
        face = compute_eta_h(traj, op, dual, granularity="face")
        assert np.allclose(cell.steps, face.steps, rtol=1e-11, atol=1e-18)
        assert np.all(face.bar_steps >= cell.bar_steps * (1 - 1e-12))

    def test_bad_granularity_rejected(self):
        traj = tiny_burgers_traj([0, 0])
        with pytest.raises(ConfigurationError):
            compute_eta_h(traj, None, StubDual(W_MEANS), granularity="point")


class TestExactZeroCases:
    def test_constant_state_zeroes_both_indicators(self):
        m = meshmod.build_interval_mesh(0.0, 2.0, 24)
        model = LinearAdvection1D(speed=1.0)
        bc = numflux.BoundarySpec({
            "left": ("farfield", np.array([0.7])),
            "right": ("farfield", np.array([0.7])),
        })
        op = forward.SpatialOperator(m, model, bc)
        field = forward.Field(m, model, np.full((24, 1), 0.7), 0.0)
        traj = forward.run_forward(field, 0.5, op,
                                   forward.SchemeConfig(cfl=0.5, theta=0.0))
        func = VolumeFunctional(space=QuarticWindow(1.0, 0.4),
                                time=QuarticWindow(0.25, 0.15))
        dual = run_adjoint(traj, func)
        ek = compute_eta_k(traj, dual, func)
        eh = compute_eta_h(traj, op, dual)
        assert np.all(ek.steps == 0.0) and np.all(ek.bar_steps == 0.0)
        assert np.all(eh.steps == 0.0) and np.all(eh.bar_steps == 0.0)

    def test_unperturbed_shock_has_zero_temporal_indicator(self):
        from flowadapt.scenario import burgers_perturbed_shock

        sc = burgers_perturbed_shock(0, amplitude=0.0)
        op = sc.operator(entropy_fix=0.0)  # keep the shock face exact
        traj = forward.run_forward(sc.initial_field(), 0.1, op,
                                   forward.SchemeConfig(cfl=0.5, theta=0.0))
        assert np.array_equal(traj.states[0], traj.states[-1])
        dual = run_adjoint(traj, sc.functional, fix_coef=0.0)
        ek = compute_eta_k(traj, dual, sc.functional)
        assert np.all(ek.bar_steps == 0.0)


class TestEfficiencyIndex:
    def test_plain_ratio(self):
        assert efficiency_index(0.5, 1.0, 1.25) == pytest.approx(2.0)
        assert efficiency_index(-0.5, 1.25, 1.0) == pytest.approx(2.0)

    def test_zero_error_edge(self):
        assert efficiency_index(0.0, 1.0, 1.0) == 1.0
        assert efficiency_index(0.3, 1.0, 1.0) == np.inf

    def test_needs_states(self):
        traj = tiny_burgers_traj([0, 0])
        traj.states = None
        with pytest.raises(ConfigurationError):
            compute_eta_k(traj, StubDual(W_MEANS), StubFunctional())
