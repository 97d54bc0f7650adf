"""Flux models and characteristic decompositions.

All batch operations take conserved states as an (m, n_vars) array and unit
normals as an (m, dim) array; single states (n_vars,) with a (dim,) normal are
accepted and returned in kind.  Eigensystems satisfy A = R diag(lam) L with
L = R^{-1} built analytically, and the characteristic projectors split by
eigenvalue sign with zero eigenvalues assigned to the outgoing part P_plus.
"""

import numpy as np

from . import kernels
from .errors import StateError

GAMMA = 1.4
ADMISSIBILITY_FLOOR = 1e-10


def _batched(U, normals, dim, n_vars):
    U = np.asarray(U, dtype=float)
    normals = np.asarray(normals, dtype=float)
    single = U.ndim == 1
    if single:
        U = U[None, :]
    if normals.ndim == 1:
        normals = np.broadcast_to(normals, (U.shape[0], dim))
    if U.shape[1] != n_vars or normals.shape[1] != dim:
        raise ValueError("state or normal shape does not match model")
    return U, normals, single


class FluxModel:
    """Base interface: hyperbolic flux, Jacobian, and eigensystem."""

    name = "base"
    n_vars = 0
    dim = 0

    def flux(self, U, normals):
        raise NotImplementedError

    def jacobian(self, U, normals):
        raise NotImplementedError

    def eigensystem(self, U, normals):
        raise NotImplementedError

    def roe_state(self, UL, UR):
        """State whose eigensystem realizes the Roe linearization."""
        raise NotImplementedError

    def max_speed(self, U):
        """Per-cell bound on |lambda| over all unit directions."""
        raise NotImplementedError

    def check_admissible(self, U):
        """Raise StateError when a state violates the admissibility floor."""
        return None


class Burgers1D(FluxModel):
    """Scalar Burgers flux f(u) = u^2/2 on an interval."""

    name = "burgers1d"
    n_vars = 1
    dim = 1

    def flux(self, U, normals):
        U, normals, single = _batched(U, normals, 1, 1)
        F = 0.5 * U * U * normals
        return F[0] if single else F

    def jacobian(self, U, normals):
        U, normals, single = _batched(U, normals, 1, 1)
        A = (U * normals)[:, :, None]
        return A[0] if single else A

    def eigensystem(self, U, normals):
        U, normals, single = _batched(U, normals, 1, 1)
        lam = U * normals
        eye = np.ones((U.shape[0], 1, 1))
        if single:
            return lam[0], eye[0], eye[0]
        return lam, eye, eye

    def roe_state(self, UL, UR):
        return 0.5 * (np.asarray(UL, dtype=float) + np.asarray(UR, dtype=float))

    def max_speed(self, U):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        return np.abs(U[:, 0])


class LinearAdvection1D(FluxModel):
    """Constant-coefficient transport, used as an exactly solvable oracle."""

    name = "advection1d"
    n_vars = 1
    dim = 1

    def __init__(self, speed=1.0):
        self.speed = float(speed)

    def flux(self, U, normals):
        U, normals, single = _batched(U, normals, 1, 1)
        F = self.speed * U * normals
        return F[0] if single else F

    def jacobian(self, U, normals):
        U, normals, single = _batched(U, normals, 1, 1)
        A = np.broadcast_to((self.speed * normals)[:, :, None], (U.shape[0], 1, 1)).copy()
        return A[0] if single else A

    def eigensystem(self, U, normals):
        U, normals, single = _batched(U, normals, 1, 1)
        lam = self.speed * normals
        eye = np.ones((U.shape[0], 1, 1))
        if single:
            return lam[0], eye[0], eye[0]
        return lam, eye, eye

    def roe_state(self, UL, UR):
        return 0.5 * (np.asarray(UL, dtype=float) + np.asarray(UR, dtype=float))

    def max_speed(self, U):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        return np.full(U.shape[0], abs(self.speed))


class Euler2D(FluxModel):
    """Compressible Euler equations in two space dimensions, gamma = 1.4."""

    name = "euler2d"
    n_vars = 4
    dim = 2

    def __init__(self, gamma=GAMMA):
        self.gamma = float(gamma)

    # -- primitive/conserved conversions ------------------------------------

    def primitives(self, U):
        """Return (rho, u, v, p) columns."""
        U = np.atleast_2d(np.asarray(U, dtype=float))
        rho = U[:, 0]
        u = U[:, 1] / rho
        v = U[:, 2] / rho
        p = (self.gamma - 1.0) * (U[:, 3] - 0.5 * rho * (u * u + v * v))
        return rho, u, v, p

    def conserved(self, rho, u, v, p):
        rho, u, v, p = np.broadcast_arrays(
            *[np.asarray(x, dtype=float) for x in (rho, u, v, p)]
        )
        E = p / (self.gamma - 1.0) + 0.5 * rho * (u * u + v * v)
        return np.stack([rho, rho * u, rho * v, E], axis=-1)

    def sound_speed(self, U):
        rho, _, _, p = self.primitives(U)
        return np.sqrt(self.gamma * p / rho)

    def mach(self, U):
        rho, u, v, _ = self.primitives(U)
        return np.sqrt(u * u + v * v) / self.sound_speed(U)

    # -- flux interface ------------------------------------------------------

    def flux(self, U, normals):
        U, normals, single = _batched(U, normals, 2, 4)
        F = kernels.euler_flux(
            np.ascontiguousarray(U),
            np.ascontiguousarray(normals[:, 0]),
            np.ascontiguousarray(normals[:, 1]),
            self.gamma,
        )
        return F[0] if single else F

    def jacobian(self, U, normals):
        U, normals, single = _batched(U, normals, 2, 4)
        A = kernels.euler_jacobian(
            np.ascontiguousarray(U),
            np.ascontiguousarray(normals[:, 0]),
            np.ascontiguousarray(normals[:, 1]),
            self.gamma,
        )
        return A[0] if single else A

    def eigensystem(self, U, normals):
        U, normals, single = _batched(U, normals, 2, 4)
        lam, R, L = kernels.euler_eigensystem(
            np.ascontiguousarray(U),
            np.ascontiguousarray(normals[:, 0]),
            np.ascontiguousarray(normals[:, 1]),
            self.gamma,
        )
        if single:
            return lam[0], R[0], L[0]
        return lam, R, L

    def roe_state(self, UL, UR):
        UL = np.atleast_2d(np.asarray(UL, dtype=float))
        UR = np.atleast_2d(np.asarray(UR, dtype=float))
        g1 = self.gamma - 1.0
        rL, uL, vL, pL = self.primitives(UL)
        rR, uR, vR, pR = self.primitives(UR)
        HL = (UL[:, 3] + pL) / rL
        HR = (UR[:, 3] + pR) / rR
        sL = np.sqrt(rL)
        sR = np.sqrt(rR)
        w = sL / (sL + sR)
        u = w * uL + (1.0 - w) * uR
        v = w * vL + (1.0 - w) * vR
        H = w * HL + (1.0 - w) * HR
        rh = sL * sR
        c2 = g1 * (H - 0.5 * (u * u + v * v))
        E = rh * H - rh * c2 / self.gamma
        out = np.stack([rh, rh * u, rh * v, E], axis=1)
        return out[0] if UL.shape[0] == 1 and UR.shape[0] == 1 else out

    def max_speed(self, U):
        rho, u, v, p = self.primitives(U)
        return np.sqrt(u * u + v * v) + np.sqrt(self.gamma * p / rho)

    def check_admissible(self, U):
        rho, _, _, p = self.primitives(np.atleast_2d(np.asarray(U, dtype=float)))
        bad = (rho <= ADMISSIBILITY_FLOOR) | (p <= ADMISSIBILITY_FLOOR)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise StateError(
                f"inadmissible state at index {i}: rho={rho[i]:.3e}, p={p[i]:.3e}"
            )


# ---------------------------------------------------------------------------
# module-level wrappers (the public operation names)


def flux(model, U, direction):
    return model.flux(U, direction)


def jacobian(model, U, direction):
    return model.jacobian(U, direction)


def eigensystem(model, U, direction):
    return model.eigensystem(U, direction)


def projections(model, U, direction):
    """Characteristic projectors (P_plus, P_minus) at the given state.

    P_plus collects eigenvectors with lambda >= 0 (outgoing with respect to
    the direction), P_minus those with lambda < 0; the two sum to identity.
    """
    lam, R, L = model.eigensystem(U, direction)
    single = lam.ndim == 1
    if single:
        lam, R, L = lam[None], R[None], L[None]
    pos = (lam >= 0.0).astype(float)
    P_plus = np.einsum("mik,mk,mkj->mij", R, pos, L)
    P_minus = np.einsum("mik,mk,mkj->mij", R, 1.0 - pos, L)
    if single:
        return P_plus[0], P_minus[0]
    return P_plus, P_minus
