"""Backward dual solver for the gradient of the adjoint solution.

The adjoint phi of a target functional solves the backward problem
phi_t + A(u)^T grad phi = psi with phi(T) = 0.  Differentiating in space
(coefficients frozen at the forward state) turns each spatial component of
w = grad phi into a conservation law

    w_t + div(A(u)^T w) = grad psi

which is marched backward in time with a central-plus-upwind face flux

    H(n) = A_n^T (w_i + w_j) / 2 + |A_n^T| (w_j - w_i) / 2

evaluated at the face-averaged forward state.  Forward intervals longer than
the explicit stability limit of this transport are sub-cycled with the
coefficients frozen on the interval.  At boundaries the outgoing-mode part of
the flux comes from the interior; the incoming-mode part is data recovered
from the adjoint relation phi_t = psi - H: the backward time difference of
the projected boundary weight plus the projected volume weight.
"""

from dataclasses import dataclass

import numpy as np

from .galerkin import step_flux_eval

_FIX_DEFAULT = 0.05


def _abs_fix(lam, scale, fix_coef):
    a = np.abs(lam)
    if fix_coef <= 0.0:
        return a
    delta = fix_coef * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        smooth = np.where(delta > 0.0, (lam * lam + delta * delta) / (2.0 * delta), a)
    return np.where(a < delta, smooth, a)


def gradient_source(functional, mesh, t, n_vars):
    """Green-Gauss gradient of the functional's volume weight, (nc, dim, k)."""
    dim = mesh.dim
    out = np.zeros((mesh.n_cells, dim, n_vars))
    psi_f = functional.volume_weight(mesh.f_centroid, t, n_vars)
    psi_b = functional.volume_weight(mesh.b_centroid, t, n_vars)
    if not psi_f.any() and not psi_b.any():
        return out
    for d in range(dim):
        w = (mesh.f_area * mesh.f_normal[:, d])[:, None] * psi_f
        np.add.at(out[:, d, :], mesh.f_left, w)
        np.add.at(out[:, d, :], mesh.f_right, -w)
        np.add.at(out[:, d, :], mesh.b_cell,
                  (mesh.b_area * mesh.b_normal[:, d])[:, None] * psi_b)
    return out / mesh.volumes[:, None, None]


def _pos_projector_apply(model, U, normals, vec):
    """P_+^T vec at each boundary face, selecting incoming dual modes."""
    lam, R, L = model.eigensystem(U, normals)
    gate = (lam > 0.0).astype(float)
    PposT = np.swapaxes(np.einsum("fij,fj,fjk->fik", R, gate, L), 1, 2)
    return np.einsum("fik,fk->fi", PposT, vec)


def incoming_flux_data(functional, mesh, model, U_lo, U_hi, t_lo, t_hi):
    """Incoming-mode boundary flux data for one backward interval, (nb, dim, k).

    The dual relation phi_t = psi - H, restricted to incoming modes where the
    boundary condition pins P_+^T phi to the boundary weight, gives the data

        P_+^T H = -d/dt (P_+^T psi_b) + P_+^T psi

    discretized with the states at the interval's two time nodes.  The face
    normal distributes the scalar relation over the gradient components.
    """
    k = model.n_vars
    psi_vol = functional.volume_weight(mesh.b_centroid, t_lo, k)
    psi_b_lo = functional.boundary_weight(mesh, t_lo)
    psi_b_hi = functional.boundary_weight(mesh, t_hi)
    if psi_b_lo is None and not psi_vol.any():
        return None
    Ub_lo = U_lo[mesh.b_cell]
    data = _pos_projector_apply(model, Ub_lo, mesh.b_normal, psi_vol)
    if psi_b_lo is not None:
        Ub_hi = U_hi[mesh.b_cell]
        p_hi = _pos_projector_apply(model, Ub_hi, mesh.b_normal, psi_b_hi)
        p_lo = _pos_projector_apply(model, Ub_lo, mesh.b_normal, psi_b_lo)
        data = data - (p_hi - p_lo) / (t_hi - t_lo)
    return mesh.b_normal[:, :, None] * data[:, None, :]


class _IntervalTransport:
    """Frozen dual transport operator for one forward interval."""

    def __init__(self, mesh, model, U, fix_coef, incoming):
        self.mesh = mesh
        k = model.n_vars
        Uf = 0.5 * (U[mesh.f_left] + U[mesh.f_right])
        normals = mesh.f_normal
        lam, R, L = model.eigensystem(Uf, normals)
        scale = model.max_speed(Uf)
        alam = _abs_fix(lam, scale[:, None], fix_coef)
        # transposed action blocks: (A_n^T w)_i = sum_j (A_n)_ji w_j
        A = np.einsum("fij,fj,fjk->fik", R, lam, L)
        absA = np.einsum("fij,fj,fjk->fik", R, alam, L)
        self.BcT = 0.5 * np.swapaxes(A, 1, 2)
        self.BdT = 0.5 * np.swapaxes(absA, 1, 2)
        # boundary faces: P_-^T (A_n^T w) = (A_n P_-)^T w, outgoing modes only
        Ub = U[mesh.b_cell]
        lam_b, Rb, Lb = model.eigensystem(Ub, mesh.b_normal)
        self.AnegT = np.swapaxes(
            np.einsum("fij,fj,fjk->fik", Rb, np.where(lam_b < 0.0, lam_b, 0.0), Lb),
            1, 2,
        )
        self.incoming = incoming  # (nb, dim, k) fixed flux data, or None
        self.max_speed = float(model.max_speed(U).max())

    def rate(self, w):
        """Spatial part of dw/dt in the backward march, (nc, dim, k)."""
        mesh = self.mesh
        wi = w[mesh.f_left]
        wj = w[mesh.f_right]
        H = np.einsum("fik,fdk->fdi", self.BcT, wi + wj) + np.einsum(
            "fik,fdk->fdi", self.BdT, wj - wi
        )
        H *= mesh.f_area[:, None, None]
        acc = np.zeros_like(w)
        for d in range(w.shape[1]):
            np.add.at(acc[:, d, :], mesh.f_left, H[:, d, :])
            np.add.at(acc[:, d, :], mesh.f_right, -H[:, d, :])
        wb = w[mesh.b_cell]
        Fb = np.einsum("fik,fdk->fdi", self.AnegT, wb)
        if self.incoming is not None:
            Fb = Fb + self.incoming
        Fb = Fb * mesh.b_area[:, None, None]
        for d in range(w.shape[1]):
            np.add.at(acc[:, d, :], mesh.b_cell, Fb[:, d, :])
        return acc / mesh.volumes[:, None, None]


@dataclass
class DualSolution:
    """Gradient dual at the trajectory's time nodes, (N+1, nc, dim, n_vars)."""

    mesh: object
    model: object
    times: np.ndarray
    w: np.ndarray
    substeps: np.ndarray
    meta: dict

    def interval_mean(self, m):
        return 0.5 * (self.w[m + 1] + self.w[m])


def run_adjoint(traj, functional, cfl_dual=0.45, fix_coef=_FIX_DEFAULT):
    """March the dual backward over a stored forward trajectory."""
    mesh = traj.mesh
    model = traj.model
    N = traj.n_steps
    k = model.n_vars
    dim = mesh.dim
    w = np.zeros((N + 1, mesh.n_cells, dim, k))
    substeps = np.zeros(N, dtype=np.int64)
    diam = mesh.cell_diameter
    for m in range(N - 1, -1, -1):
        idx, _ = step_flux_eval(traj, m)
        U = traj.states[idx]
        incoming = incoming_flux_data(functional, mesh, model,
                                      traj.states[m], traj.states[m + 1],
                                      traj.times[m], traj.times[m + 1])
        op = _IntervalTransport(mesh, model, U, fix_coef, incoming)
        dt = traj.dts[m]
        speed = model.max_speed(U)
        with np.errstate(divide="ignore"):
            stab = float(np.min(np.where(speed > 0.0, diam / np.maximum(speed, 1e-300),
                                         np.inf)))
        n_sub = 1 if not np.isfinite(stab) else max(1, int(np.ceil(dt / (cfl_dual * stab))))
        ddt = dt / n_sub
        cur = w[m + 1].copy()
        t_hi = traj.times[m + 1]
        for s in range(n_sub):
            t_mid = t_hi - (s + 0.5) * ddt
            src = gradient_source(functional, mesh, t_mid, k)
            cur = cur + ddt * (op.rate(cur) - src)
        w[m] = cur
        substeps[m] = n_sub
    return DualSolution(mesh=mesh, model=model, times=traj.times.copy(), w=w,
                        substeps=substeps, meta={"cfl_dual": cfl_dual,
                                                 "fix_coef": fix_coef})
