"""Numerical flux functions and boundary condition dispatch.

The interior flux is the Roe flux

    F(UL, UR, n) = (f(UL) + f(UR)) . n / 2 - |A_roe| (UR - UL) / 2

with the dissipation matrix evaluated at the model's Roe-averaged state and
eigenvalues regularized by the quadratic smoothing

    |l| <- (l^2 + d^2) / (2 d)   for |l| < d,   d = fix_coef (|v_n| + c).

Boundary faces carry either a solid wall flux or characteristic far-field
data: the normal flux of the interior state through the outgoing projector
plus the normal flux of the external state through the incoming one.

The Euler model has hand-tuned per-face kernels in :mod:`flowadapt.kernels`;
the generic implementations here work for any model and are what the 1D
models use.
"""

import numpy as np

from .errors import ConfigurationError


def _abs_with_fix(lam, lam_scale, fix_coef):
    """Regularized |lambda| with smoothing width fix_coef * lam_scale."""
    a = np.abs(lam)
    if fix_coef <= 0.0:
        return a
    delta = fix_coef * lam_scale
    small = a < delta
    with np.errstate(divide="ignore", invalid="ignore"):
        smooth = np.where(delta > 0.0, (lam * lam + delta * delta) / (2.0 * delta), a)
    return np.where(small, smooth, a)


def _dissipation(model, UL, UR, normals, fix_coef):
    """|A_roe| as dense (m, k, k) blocks at the face Roe states."""
    Uhat = model.roe_state(UL, UR)
    lam, R, L = model.eigensystem(Uhat, normals)
    scale = model.max_speed(Uhat)
    alam = _abs_with_fix(lam, scale[:, None], fix_coef)
    return np.einsum("mij,mj,mjk->mik", R, alam, L)


def roe_flux(model, UL, UR, normals, fix_coef=0.05):
    """Roe flux through faces with unit normals pointing left to right."""
    fL = model.flux(UL, normals)
    fR = model.flux(UR, normals)
    absA = _dissipation(model, UL, UR, normals, fix_coef)
    return 0.5 * (fL + fR) - 0.5 * np.einsum("mij,mj->mi", absA, UR - UL)


def roe_flux_jacobians(model, UL, UR, normals, fix_coef=0.05):
    """Frozen-|A_roe| flux linearization: (dF/dUL, dF/dUR) face blocks."""
    AL = model.jacobian(UL, normals)
    AR = model.jacobian(UR, normals)
    absA = _dissipation(model, UL, UR, normals, fix_coef)
    return 0.5 * (AL + absA), 0.5 * (AR - absA)


def characteristic_boundary_flux(model, U_int, U_ext, normals):
    """P_+ f_n(U_int) + P_- f_n(U_ext), projectors at the interior state."""
    lam, R, L = model.eigensystem(U_int, normals)
    f_int = model.flux(U_int, normals)
    f_ext = model.flux(U_ext, normals)
    w_int = np.einsum("mij,mj->mi", L, f_int)
    w_ext = np.einsum("mij,mj->mi", L, f_ext)
    w = np.where(lam >= 0.0, w_int, w_ext)
    return np.einsum("mij,mj->mi", R, w)


def characteristic_boundary_jacobian(model, U_int, normals):
    """Outgoing part A_+ = R max(lam, 0) L of the frozen boundary flux."""
    lam, R, L = model.eigensystem(U_int, normals)
    return np.einsum("mij,mj,mjk->mik", R, np.maximum(lam, 0.0), L)


class BoundaryGroup:
    """Resolved boundary condition on one named face group."""

    def __init__(self, name, kind, faces, external=None):
        self.name = name
        self.kind = kind
        self.faces = faces
        self._external = external

    def external(self, t):
        return self._external(t)


class BoundarySpec:
    """Named boundary conditions: 'wall' or far-field exterior data.

    Far-field data may be a constant state, a per-face array, or a callable
    ``g(t, centroids) -> (n_faces, n_vars)`` for time-dependent conditions.
    """

    def __init__(self, conditions):
        self.conditions = dict(conditions)

    @classmethod
    def farfield_everywhere(cls, mesh, state):
        return cls({name: ("farfield", state) for name in mesh.boundary_names})

    def resolve_groups(self, mesh):
        groups = []
        missing = [n for n in mesh.boundary_names if n not in self.conditions]
        if missing:
            raise ConfigurationError(
                f"no boundary condition for group(s) {missing}; "
                f"mesh defines {sorted(mesh.boundary_names)}"
            )
        unknown = [n for n in self.conditions if n not in mesh.boundary_names]
        if unknown:
            raise ConfigurationError(
                f"boundary condition for unknown group(s) {unknown}; "
                f"mesh defines {sorted(mesh.boundary_names)}"
            )
        for name, cond in self.conditions.items():
            faces = mesh.boundary_faces(name)
            if isinstance(cond, str):
                kind, data = cond, None
            else:
                kind, data = cond
            if kind == "wall":
                groups.append(BoundaryGroup(name, "wall", faces))
                continue
            if kind != "farfield":
                raise ConfigurationError(
                    f"unknown boundary kind {kind!r} on group {name!r}"
                )
            if data is None:
                raise ConfigurationError(
                    f"far-field boundary {name!r} needs exterior data"
                )
            centroids = mesh.b_centroid[faces]
            nf = faces.shape[0]
            if callable(data):
                ext = lambda t, d=data, c=centroids: np.asarray(d(t, c), dtype=float)
            else:
                arr = np.asarray(data, dtype=float)
                if arr.ndim == 1:
                    arr = np.repeat(arr.reshape(1, -1), nf, axis=0)
                if arr.shape[0] != nf:
                    raise ConfigurationError(
                        f"far-field data on {name!r} has {arr.shape[0]} rows "
                        f"for {nf} faces"
                    )
                ext = lambda t, a=arr: a
            groups.append(BoundaryGroup(name, "farfield", faces, ext))
        return groups
