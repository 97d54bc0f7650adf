"""Space-time weak form of the finite volume scheme.

A trajectory defines a piecewise-constant space-time solution whose residual
against a test function phi (constant on each cell-interval prism) is

    N(U; phi) = sum_m sum_i phi_i^m [ |V_i| (U_i^m - U_i^{m-1})
                                      + dt_m sum_f |f| F_f^(m) n_if ]

with F_f^(m) the face flux the scheme actually used in step m (old state for
explicit steps, new state for implicit ones).  Since the bracket is |V_i|
times the scheme equation, N vanishes for every phi: discrete Galerkin
orthogonality.  Regrouping the same sum by space-time faces gives the
equivalent face-jump form used by the error indicators; both arrangements are
implemented here so their identity can be checked directly.

Time faces carry the past-side trace: the face at t_m holds U^m between the
intervals ending and starting there, the initial face holds the data U^0
weighted with the first interval's test value.
"""

import numpy as np

from . import kernels


def step_flux_eval(traj, m):
    """(state index, time) at which step m of the trajectory took fluxes."""
    if traj.modes[m] == 1:
        return m + 1, traj.times[m + 1]
    return m, traj.times[m]


def interval_means(w_nodes):
    """Trapezoid interval averages of node values, (N+1, ...) -> (N, ...)."""
    w_nodes = np.asarray(w_nodes, dtype=float)
    return 0.5 * (w_nodes[1:] + w_nodes[:-1])


def sample_prism_function(fn, mesh, times):
    """Evaluate fn(points, t) at cell centroids and interval midpoints."""
    t_mid = 0.5 * (times[1:] + times[:-1])
    return np.stack([np.asarray(fn(mesh.centroids, t), dtype=float) for t in t_mid])


def semilinear_cellwise(traj, op, phi):
    """N(U; phi) summed cell by cell; phi has shape (N, n_cells, n_vars)."""
    mesh = traj.mesh
    total = 0.0
    scale = 0.0
    for m in range(traj.n_steps):
        idx, t = step_flux_eval(traj, m)
        F, Fb = op.face_fluxes(traj.states[idx], t)
        dt = traj.dts[m]
        acc = mesh.volumes[:, None] * (traj.states[m + 1] - traj.states[m])
        w = (dt * mesh.f_area)[:, None] * F
        kernels.scatter_add(acc, mesh.f_left, w)
        kernels.scatter_add(acc, mesh.f_right, -w)
        kernels.scatter_add(acc, mesh.b_cell, (dt * mesh.b_area)[:, None] * Fb)
        total += float((phi[m] * acc).sum())
        # scale from pre-cancellation magnitudes so the gap is meaningful
        mag = mesh.volumes[:, None] * np.abs(traj.states[m + 1] - traj.states[m])
        kernels.scatter_add(mag, mesh.f_left, np.abs(w))
        kernels.scatter_add(mag, mesh.f_right, np.abs(w))
        kernels.scatter_add(mag, mesh.b_cell, np.abs((dt * mesh.b_area)[:, None] * Fb))
        scale += float((np.abs(phi[m]) * mag).sum())
    return total, scale


def semilinear_facewise(traj, op, phi):
    """Same functional as semilinear_cellwise, regrouped over faces."""
    mesh = traj.mesh
    N = traj.n_steps
    vol = mesh.volumes[:, None]
    total = float((vol * traj.states[N] * phi[N - 1]).sum())
    total -= float((vol * traj.states[0] * phi[0]).sum())
    for m in range(1, N):
        total += float((vol * traj.states[m] * (phi[m - 1] - phi[m])).sum())
    for m in range(N):
        idx, t = step_flux_eval(traj, m)
        F, Fb = op.face_fluxes(traj.states[idx], t)
        dt = traj.dts[m]
        jump = phi[m][mesh.f_left] - phi[m][mesh.f_right]
        total += dt * float((mesh.f_area[:, None] * F * jump).sum())
        total += dt * float(
            (mesh.b_area[:, None] * Fb * phi[m][mesh.b_cell]).sum()
        )
    return total


def orthogonality_gap(traj, op, phi):
    """|N(U; phi)| relative to the size of its constituent terms."""
    total, scale = semilinear_cellwise(traj, op, phi)
    return abs(total) / max(scale, 1e-300)
