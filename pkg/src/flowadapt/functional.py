"""Target functionals: space-time averages the adaptation keeps accurate.

Two families are provided.  A volume functional integrates one conserved
component against a smooth compactly supported space-time weight; a boundary
pressure functional integrates the wall pressure against a comb of window
weights along one boundary group.  Both evaluate on a trajectory with the
piecewise-constant-in-time convention: the state on interval m is the step's
root state U^m, the weight's own time dependence is sampled at the interval
midpoint.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass
class QuarticWindow:
    """w(s) = (1 - z^2)^2 with z = (s - center)/halfwidth, zero outside."""

    center: float
    halfwidth: float

    def __call__(self, s):
        z = (np.asarray(s, dtype=float) - self.center) / self.halfwidth
        return np.where(np.abs(z) <= 1.0, (1.0 - z * z) ** 2, 0.0)

    def derivative(self, s):
        z = (np.asarray(s, dtype=float) - self.center) / self.halfwidth
        return np.where(
            np.abs(z) <= 1.0, -4.0 * z * (1.0 - z * z) / self.halfwidth, 0.0
        )


def comb_weight(x, centers, halfwidth):
    """Sum of quartic windows centered at ``centers``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for c in centers:
        out += QuarticWindow(c, halfwidth)(x)
    return out


def comb_weight_derivative(x, centers, halfwidth):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for c in centers:
        out += QuarticWindow(c, halfwidth).derivative(x)
    return out


class TargetFunctional:
    """Base interface: instantaneous trace plus dual-problem weight data."""

    def trace(self, mesh, model, U, t):
        raise NotImplementedError

    def volume_weight(self, points, t, n_vars):
        """Weight vector psi(x, t) at arbitrary points, (m, n_vars)."""
        return np.zeros((np.asarray(points).shape[0], n_vars))

    # boundary group carrying a wall weight, or None
    wall_group = None

    def wall_weight(self, x):
        raise NotImplementedError

    def boundary_weight(self, mesh, t):
        """Weight vector on every boundary face, (nb, n_vars), or None."""
        return None

    def evaluate(self, traj):
        """J(u_h) and the per-interval trace table for the whole run."""
        if traj.states is None:
            raise ConfigurationError(
                "functional evaluation needs stored states; rerun with storage on"
            )
        rows = []
        J = 0.0
        for m in range(traj.n_steps):
            dt = traj.dts[m]
            t_mid = traj.times[m] + 0.5 * dt
            tr = self.trace(traj.mesh, traj.model, traj.states[m + 1], t_mid)
            J += dt * tr
            rows.append((m, t_mid, dt, tr, J))
        return J, rows


@dataclass
class VolumeFunctional(TargetFunctional):
    """J = integral of psi_x(x) psi_t(t) u_c over space and time."""

    space: QuarticWindow
    time: QuarticWindow
    component: int = 0

    def weight(self, x, t):
        return self.space(x) * self.time(t)

    def trace(self, mesh, model, U, t):
        psi = self.weight(mesh.centroids[:, 0], t)
        return float((mesh.volumes * psi * U[:, self.component]).sum())

    def volume_weight(self, points, t, n_vars):
        pts = np.asarray(points, dtype=float)
        x = pts[:, 0] if pts.ndim == 2 else pts
        out = np.zeros((x.shape[0], n_vars))
        out[:, self.component] = self.weight(x, t)
        return out


@dataclass
class BoundaryPressureFunctional(TargetFunctional):
    """J = integral over one wall group of p(x, t) w(x), w a window comb."""

    group: str
    centers: tuple
    halfwidth: float

    def __post_init__(self):
        self.wall_group = self.group

    def wall_weight(self, x):
        return comb_weight(x, self.centers, self.halfwidth)

    def wall_weight_derivative(self, x):
        return comb_weight_derivative(x, self.centers, self.halfwidth)

    def boundary_weight(self, mesh, t):
        # psi_b dotted with the wall flux (0, p nx, p ny, 0) recovers w(x) p
        out = np.zeros((mesh.n_bfaces, 4))
        faces = mesh.boundary_faces(self.group)
        w = self.wall_weight(mesh.b_centroid[faces, 0])
        out[faces, 1] = w * mesh.b_normal[faces, 0]
        out[faces, 2] = w * mesh.b_normal[faces, 1]
        return out

    def trace(self, mesh, model, U, t):
        faces = mesh.boundary_faces(self.group)
        _, _, _, p = model.primitives(U[mesh.b_cell[faces]])
        w = self.wall_weight(mesh.b_centroid[faces, 0])
        return float((mesh.b_area[faces] * w * p).sum())


class TraceRecorder:
    """Forward-run observer accumulating the functional trace on the fly."""

    def __init__(self, functional, mesh, model, t_start=0.0):
        self.functional = functional
        self.mesh = mesh
        self.model = model
        self.rows = []
        self.J = 0.0
        self._t_last = t_start

    def __call__(self, m, field_new, stats):
        dt = field_new.t - self._t_last
        t_mid = self._t_last + 0.5 * dt
        tr = self.functional.trace(self.mesh, self.model, field_new.values, t_mid)
        self.J += dt * tr
        self.rows.append((m, t_mid, dt, tr, self.J))
        self._t_last = field_new.t
