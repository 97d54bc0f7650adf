"""Forward finite volume solver.

Cell update over one step of size dt:

    U_i^m + (dt / |V_i|) * sum_f |f| F_f = U_i^{m-1}

with upwind (Roe) fluxes on interior faces and characteristic data on the
boundary.  Explicit steps evaluate the fluxes at the old state, implicit steps
at the new one; the implicit root problem is solved by Newton iterations with
a frozen-|A_roe| linearization (defect correction) and a preconditioned
matrix-free GMRES inner solver with cell-block preconditioning.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import kernels, numflux
from .errors import NonConvergenceError, StateError
from .physics import Euler2D

log = logging.getLogger(__name__)

MODE_EXPLICIT = 0
MODE_IMPLICIT = 1


@dataclass
class Field:
    """Cell-averaged conserved state on a mesh at one instant."""

    mesh: object
    model: object
    values: np.ndarray
    t: float = 0.0

    def copy(self):
        return Field(self.mesh, self.model, self.values.copy(), self.t)


def uniform_field(mesh, model, state, t=0.0):
    state = np.asarray(state, dtype=float).reshape(1, -1)
    return Field(mesh, model, np.repeat(state, mesh.n_cells, axis=0), t)


@dataclass
class SchemeConfig:
    theta: float = 1.0
    cfl: float = 0.5
    newton_tol: float = 1e-8
    newton_max: int = 30
    linear_tol: float = 1e-4
    linear_max: int = 200
    entropy_fix: float = 0.05
    jacobian: str = "analytic"  # "fd" switches to finite-difference matvecs


@dataclass
class StepStats:
    mode: int
    newton_iters: int = 0
    linear_iters: int = 0
    residual0: float = 0.0
    residual: float = 0.0
    boundary_flux: np.ndarray | None = None


def cfl_timestep(field, cfl):
    """cfl * min over cells of (diameter / max wave speed).

    The diameter is cell volume over largest face area; the speed is the
    direction-free bound |velocity| + sound speed of the cell state.
    """
    speed = field.model.max_speed(field.values)
    d = field.mesh.cell_diameter
    with np.errstate(divide="ignore"):
        ratio = np.where(speed > 0.0, d / np.maximum(speed, 1e-300), np.inf)
    return cfl * float(ratio.min())


class SpatialOperator:
    """Bound mesh + model + boundary conditions; assembles fluxes/residuals."""

    def __init__(self, mesh, model, boundary, entropy_fix=0.05):
        self.mesh = mesh
        self.model = model
        self.boundary = boundary
        self.entropy_fix = entropy_fix
        self.is_euler = isinstance(model, Euler2D)
        if self.is_euler:
            self._nx = np.ascontiguousarray(mesh.f_normal[:, 0])
            self._ny = np.ascontiguousarray(mesh.f_normal[:, 1])
            self._bnx = np.ascontiguousarray(mesh.b_normal[:, 0])
            self._bny = np.ascontiguousarray(mesh.b_normal[:, 1])
        self._groups = boundary.resolve_groups(mesh)

    # -- flux evaluation -----------------------------------------------------

    def face_fluxes(self, U, t):
        """Numerical fluxes on interior and boundary faces at time t."""
        mesh = self.mesh
        UL = U[mesh.f_left]
        UR = U[mesh.f_right]
        if self.is_euler:
            F = kernels.roe_flux_faces(
                UL, UR, self._nx, self._ny, self.model.gamma, self.entropy_fix
            )
        else:
            F = numflux.roe_flux(self.model, UL, UR, mesh.f_normal, self.entropy_fix)
        Fb = np.zeros((mesh.n_bfaces, U.shape[1]))
        for grp in self._groups:
            idx = grp.faces
            Ui = U[mesh.b_cell[idx]]
            if grp.kind == "wall":
                Fb[idx] = kernels.wall_flux_faces(
                    Ui, self._bnx[idx], self._bny[idx], self.model.gamma
                )
            else:
                g = grp.external(t)
                if self.is_euler:
                    Fb[idx] = kernels.farfield_flux_faces(
                        Ui, g, self._bnx[idx], self._bny[idx], self.model.gamma
                    )
                else:
                    Fb[idx] = numflux.characteristic_boundary_flux(
                        self.model, Ui, g, mesh.b_normal[idx]
                    )
        return F, Fb

    def residual(self, U, t):
        """R(U) with R_i = (1/|V_i|) sum of area-weighted outward fluxes."""
        mesh = self.mesh
        F, Fb = self.face_fluxes(U, t)
        acc = np.zeros_like(U)
        w = mesh.f_area[:, None] * F
        kernels.scatter_add(acc, mesh.f_left, w)
        kernels.scatter_add(acc, mesh.f_right, -w)
        kernels.scatter_add(acc, mesh.b_cell, mesh.b_area[:, None] * Fb)
        return acc / mesh.volumes[:, None], Fb

    def boundary_flux_integral(self, Fb):
        return (self.mesh.b_area[:, None] * Fb).sum(axis=0)

    # -- linearization -------------------------------------------------------

    def face_linearization(self, U, t):
        """Frozen-|A_roe| flux Jacobian blocks (interior DL/DR, boundary DB)."""
        mesh = self.mesh
        UL = U[mesh.f_left]
        UR = U[mesh.f_right]
        k = U.shape[1]
        if self.is_euler:
            DL, DR = kernels.face_jacobians(
                UL, UR, self._nx, self._ny, self.model.gamma, self.entropy_fix
            )
        else:
            DL, DR = numflux.roe_flux_jacobians(
                self.model, UL, UR, mesh.f_normal, self.entropy_fix
            )
        DB = np.zeros((mesh.n_bfaces, k, k))
        for grp in self._groups:
            idx = grp.faces
            Ui = U[mesh.b_cell[idx]]
            if grp.kind == "wall":
                DB[idx] = kernels.wall_jacobian_faces(
                    Ui, self._bnx[idx], self._bny[idx], self.model.gamma
                )
            elif self.is_euler:
                DB[idx] = kernels.farfield_jacobian_faces(
                    Ui, self._bnx[idx], self._bny[idx], self.model.gamma
                )
            else:
                DB[idx] = numflux.characteristic_boundary_jacobian(
                    self.model, Ui, mesh.b_normal[idx]
                )
        return DL, DR, DB


def explicit_step(field, dt, op, cfg=None):
    """One forward Euler step; warns (only) when the CFL exceeds one."""
    cfl_dt = cfl_timestep(field, 1.0)
    if dt > cfl_dt * (1.0 + 1e-12):
        log.warning("explicit step at CFL %.3f > 1", dt / cfl_dt)
    R, Fb = op.residual(field.values, field.t)
    U_new = field.values - dt * R
    field.model.check_admissible(U_new)
    stats = StepStats(
        mode=MODE_EXPLICIT, boundary_flux=dt * op.boundary_flux_integral(Fb)
    )
    return Field(field.mesh, field.model, U_new, field.t + dt), stats


def _fd_matvec(op, U, G0, t_new, dt, eps_base=1e-7):
    """Finite-difference J*v fallback around the current Newton iterate."""
    scale = np.linalg.norm(U) + 1.0

    def mv(vflat):
        v = vflat.reshape(U.shape)
        vn = np.linalg.norm(vflat)
        if vn == 0.0:
            return np.zeros_like(vflat)
        eps = eps_base * scale / vn
        R1, _ = op.residual(U + eps * v, t_new)
        return (v + dt * (R1 - G0) / eps).ravel()

    return mv


def implicit_step(field, dt, op, cfg):
    """Backward Euler step solved by Newton-GMRES; raises on nonconvergence."""
    mesh = field.mesh
    U_old = field.values
    t_new = field.t + dt
    n, k = U_old.shape
    inv_vol = dt / mesh.volumes[:, None]
    U = U_old.copy()
    scale = float(np.linalg.norm(U_old)) + 1.0
    newton_iters = 0
    linear_total = 0
    r0 = None
    Fb_last = None
    for it in range(cfg.newton_max + 1):
        R, Fb = op.residual(U, t_new)
        Fb_last = Fb
        G = U - U_old + dt * R
        rnorm = float(np.linalg.norm(G))
        if r0 is None:
            r0 = rnorm
            if r0 <= 1e-13 * scale:
                break
        if rnorm <= cfg.newton_tol * r0 or rnorm <= 1e-15 * scale:
            break
        if it == cfg.newton_max:
            raise NonConvergenceError(
                f"Newton stalled after {it} iterations: |G| = {rnorm:.3e} "
                f"(|G0| = {r0:.3e}, dt = {dt:.3e})"
            )
        if cfg.jacobian == "fd":
            Rbase = R
            mv = _fd_matvec(op, U, Rbase, t_new, dt)
            M = None
        else:
            DL, DR, DB = op.face_linearization(U, t_new)
            aw = mesh.f_area[:, None, None]
            DLw = DL * aw
            DRw = DR * aw
            DBw = DB * mesh.b_area[:, None, None]
            fl = mesh.f_left
            fr = mesh.f_right
            bc = mesh.b_cell

            def mv(vflat):
                v = vflat.reshape(n, k)
                tf = kernels.apply_blocks(DLw, v[fl]) + kernels.apply_blocks(
                    DRw, v[fr]
                )
                acc = np.zeros_like(v)
                kernels.scatter_add(acc, fl, tf)
                kernels.scatter_add(acc, fr, -tf)
                kernels.scatter_add(acc, bc, kernels.apply_blocks(DBw, v[bc]))
                return (v + inv_vol * acc).ravel()

            # cell-block preconditioner from the diagonal contributions
            blocks = np.zeros((n, k, k))
            kernels.scatter_add(blocks.reshape(n, k * k), fl, DLw.reshape(-1, k * k))
            kernels.scatter_add(blocks.reshape(n, k * k), fr, -DRw.reshape(-1, k * k))
            kernels.scatter_add(blocks.reshape(n, k * k), bc, DBw.reshape(-1, k * k))
            blocks = np.eye(k)[None] + inv_vol[:, :, None] * blocks
            binv = np.linalg.inv(blocks)

            def pre(vflat):
                v = vflat.reshape(n, k)
                return kernels.apply_blocks(binv, v).ravel()

            M = LinearOperator((n * k, n * k), matvec=pre)

        A = LinearOperator((n * k, n * k), matvec=mv)
        count = [0]

        def cb(_):
            count[0] += 1

        restart = min(30, cfg.linear_max)
        delta, info = gmres(
            A,
            -G.ravel(),
            rtol=cfg.linear_tol,
            atol=0.0,
            restart=restart,
            maxiter=max(1, cfg.linear_max // restart),
            M=M,
            callback=cb,
            callback_type="legacy",
        )
        linear_total += count[0]
        newton_iters += 1
        U = U + delta.reshape(n, k)
        try:
            field.model.check_admissible(U)
        except StateError as exc:
            raise NonConvergenceError(f"Newton produced inadmissible state: {exc}")
    stats = StepStats(
        mode=MODE_IMPLICIT,
        newton_iters=newton_iters,
        linear_iters=linear_total,
        residual0=r0,
        residual=rnorm if r0 > 1e-13 * scale else r0,
        boundary_flux=dt * op.boundary_flux_integral(Fb_last),
    )
    return Field(field.mesh, field.model, U, t_new), stats


@dataclass
class Trajectory:
    """Forward run record: snapshot sequence plus per-step metadata."""

    mesh: object
    model: object
    times: np.ndarray  # (N+1,)
    dts: np.ndarray  # (N,)
    modes: np.ndarray  # (N,) 0 explicit / 1 implicit
    states: np.ndarray | None  # (N+1, n_cells, n_vars) when stored
    newton_iters: np.ndarray
    linear_iters: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self):
        return self.dts.shape[0]

    def theta(self, m):
        return 1.0 if self.modes[m] == MODE_IMPLICIT else 0.0


def run_forward(field, T, op, cfg, plan=None, store=True, observers=()):
    """March from field.t to T and record the trajectory.

    ``plan`` is an optional sequence of (dt, mode) pairs; without it, steps
    follow cfg.cfl and cfg.theta.  A nonconverged implicit step is retried
    once as two half steps before giving up.  Observers are called as
    observer(m, field_new, stats) after every accepted step.
    """
    times = [field.t]
    dts = []
    modes = []
    nit = []
    lit = []
    states = [field.values.copy()] if store else None
    current = field

    def advance(dt, mode):
        nonlocal current
        if mode == MODE_IMPLICIT:
            try:
                new, st = implicit_step(current, dt, op, cfg)
            except NonConvergenceError:
                log.warning(
                    "implicit step failed at t=%.6g; retrying as two half steps",
                    current.t,
                )
                for _ in range(2):
                    new, st = implicit_step(current, 0.5 * dt, op, cfg)
                    _record(new, st)
                    current = new
                return
        else:
            new, st = explicit_step(current, dt, op, cfg)
        _record(new, st)
        current = new

    def _record(new, st):
        times.append(new.t)
        dts.append(new.t - times[-2])
        modes.append(st.mode)
        nit.append(st.newton_iters)
        lit.append(st.linear_iters)
        if store:
            states.append(new.values.copy())
        for obs in observers:
            obs(len(dts) - 1, new, st)

    if plan is not None:
        for dt, mode in plan:
            advance(float(dt), int(mode))
    else:
        mode = MODE_IMPLICIT if cfg.theta >= 0.5 else MODE_EXPLICIT
        while current.t < T - 1e-13 * max(T, 1.0):
            dt = cfl_timestep(current, cfg.cfl)
            dt = min(dt, T - current.t)
            if not np.isfinite(dt) or dt <= 0.0:
                dt = T - current.t
            advance(dt, mode)

    return Trajectory(
        mesh=field.mesh,
        model=field.model,
        times=np.asarray(times),
        dts=np.asarray(dts),
        modes=np.asarray(modes, dtype=np.uint8),
        states=np.asarray(states) if store else None,
        newton_iters=np.asarray(nit, dtype=np.int64),
        linear_iters=np.asarray(lit, dtype=np.int64),
        meta={},
    )
