"""Space-time split error indicators driven by the dual solution.

The temporal part pairs the discrete time derivative of the trajectory with
the dual residual weight psi - A^T w over each interval:

    eta_k = sum_m (dt_m / 2) sum_i ( (1-theta)(U^{m-1} - U^{m-2})
                                     + theta (U^m - U^{m-1}),
                                     psi - A^T w_hat )_{V_i}

with U^{-1} taken as U^0, theta the step's mode, the Jacobian at the state
the step evaluated its fluxes at, w_hat the interval mean of the dual, and
psi sampled at cell centroids and the interval midpoint.  The spatial part
pairs each cell's face flux consistency defect with the dual gradient lever
arm to the face:

    eta_h = - sum_m dt_m sum_i sum_f |f| (F_f - f(U_i) . n_if)
                                        . ((x_f - x_i) . w_hat_i)

Both come in a signed version (summing to the error estimate) and an
equidistribution version eta_bar with cellwise absolute values and no dt
factor per step; aggregate eta_bar totals weight the steps by dt.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .galerkin import step_flux_eval

ETA_H_SIGN = -1.0


def _require_states(traj):
    if traj.states is None:
        raise ConfigurationError(
            "indicator evaluation needs stored states; rerun with storage on"
        )


def dual_residual_weights(traj, dual, functional):
    """psi - A^T w_hat per interval, (N, n_cells, n_vars)."""
    _require_states(traj)
    mesh = traj.mesh
    model = traj.model
    N = traj.n_steps
    k = model.n_vars
    out = np.empty((N, mesh.n_cells, k))
    basis = np.eye(mesh.dim)
    for m in range(N):
        t_mid = traj.times[m] + 0.5 * traj.dts[m]
        w_hat = dual.interval_mean(m)
        idx, _ = step_flux_eval(traj, m)
        U = traj.states[idx]
        weight = functional.volume_weight(mesh.centroids, t_mid, k)
        for d in range(mesh.dim):
            A = model.jacobian(U, basis[d])
            weight = weight - np.einsum("cji,cj->ci", A, w_hat[:, d, :])
        out[m] = weight
    return out


@dataclass
class IndicatorResult:
    """Per-step signed and equidistribution values of one indicator."""

    steps: np.ndarray  # (N,) signed, dt factor included
    bar_steps: np.ndarray  # (N,) absolute density, no dt factor
    dts: np.ndarray

    @property
    def total(self):
        return float(self.steps.sum())

    @property
    def bar_total(self):
        return float((self.dts * self.bar_steps).sum())


def eta_k_from_weights(traj, weights):
    """Temporal indicator given assembled interval weights, (N, nc, k)."""
    _require_states(traj)
    mesh = traj.mesh
    N = traj.n_steps
    steps = np.empty(N)
    bar_steps = np.empty(N)
    vol = mesh.volumes
    for m in range(N):
        theta = traj.theta(m)
        dU = theta * (traj.states[m + 1] - traj.states[m])
        if m > 0:
            dU = dU + (1.0 - theta) * (traj.states[m] - traj.states[m - 1])
        pair = (dU * weights[m]).sum(axis=1)
        steps[m] = 0.5 * traj.dts[m] * float((vol * pair).sum())
        bar_steps[m] = 0.5 * float((vol * np.abs(pair)).sum())
    return IndicatorResult(steps=steps, bar_steps=bar_steps, dts=traj.dts.copy())


def compute_eta_k(traj, dual, functional):
    """Temporal indicator of a trajectory under its dual solution."""
    return eta_k_from_weights(traj, dual_residual_weights(traj, dual, functional))


def compute_eta_h(traj, op, dual, granularity="cell"):
    """Spatial indicator pairing each cell's face-flux defect with the linear
    dual reconstruction w . (x_face - x_cell).

    Interior faces use the centered flux average as the face value, so the
    defect seen by each cell is half the flux jump across the face.  The
    upwind dissipation part of the scheme flux is excluded: its pairing with
    the one-sided reconstruction scales like the timestep-independent
    first-order diffusion and would mask the second-order spatial decay this
    indicator is meant to expose.  Boundary faces keep the full defect
    between the characteristic boundary flux and the cell's own flux.

    granularity 'cell' or 'face' sets where the equidistribution absolute
    value is taken.
    """
    _require_states(traj)
    if granularity not in ("cell", "face"):
        raise ConfigurationError(f"unknown granularity {granularity!r}")
    mesh = traj.mesh
    model = traj.model
    N = traj.n_steps
    steps = np.empty(N)
    bar_steps = np.empty(N)
    dxL = mesh.f_centroid - mesh.centroids[mesh.f_left]
    dxR = mesh.f_centroid - mesh.centroids[mesh.f_right]
    dxB = mesh.b_centroid - mesh.centroids[mesh.b_cell]
    for m in range(N):
        idx, t = step_flux_eval(traj, m)
        U = traj.states[idx]
        _, Fb = op.face_fluxes(U, t)
        w_hat = dual.interval_mean(m)
        fnL = model.flux(U[mesh.f_left], mesh.f_normal)
        fnR = model.flux(U[mesh.f_right], mesh.f_normal)
        fnB = model.flux(U[mesh.b_cell], mesh.b_normal)
        dF = 0.5 * (fnR - fnL)
        leverL = np.einsum("fd,fdk->fk", dxL, w_hat[mesh.f_left])
        leverR = np.einsum("fd,fdk->fk", dxR, w_hat[mesh.f_right])
        leverB = np.einsum("fd,fdk->fk", dxB, w_hat[mesh.b_cell])
        termL = mesh.f_area * (dF * leverL).sum(axis=1)
        termR = mesh.f_area * (dF * leverR).sum(axis=1)
        termB = mesh.b_area * ((Fb - fnB) * leverB).sum(axis=1)
        if granularity == "cell":
            acc = np.zeros(mesh.n_cells)
            np.add.at(acc, mesh.f_left, termL)
            np.add.at(acc, mesh.f_right, termR)
            np.add.at(acc, mesh.b_cell, termB)
            signed = acc.sum()
            bar = np.abs(acc).sum()
        else:
            signed = termL.sum() + termR.sum() + termB.sum()
            bar = np.abs(termL).sum() + np.abs(termR).sum() + np.abs(termB).sum()
        steps[m] = ETA_H_SIGN * traj.dts[m] * float(signed)
        bar_steps[m] = float(bar)
    return IndicatorResult(steps=steps, bar_steps=bar_steps, dts=traj.dts.copy())


def efficiency_index(eta_total, J_coarse, J_ref):
    """Indicator total over the functional error it estimates."""
    err = J_ref - J_coarse
    if err == 0.0:
        return np.inf if eta_total != 0.0 else 1.0
    return eta_total / err
