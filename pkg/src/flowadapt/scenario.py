"""Reference experiments: perturbed Burgers shock and transonic bump channel.

The Burgers case places a stationary shock at the origin and sends a smooth
inflow wave into it; the displaced shock sweeps through the observation
window of the functional.  The channel case perturbs the inflow pressure of
a transonic steady state with two short quartic pulses and watches the wall
pressure along the bump.  Both come with everything the pipeline needs:
mesh, initial field, boundary schedule, horizon, and target functional.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import forward, mesh as meshmod, numflux
from .errors import ConfigurationError, NonConvergenceError
from .functional import (BoundaryPressureFunctional, QuarticWindow,
                         VolumeFunctional)
from .physics import Burgers1D, Euler2D

# freestream air at sea level, Mach 0.85 along the channel
RHO_INF = 1.225
P_INF = 101325.0
MACH_INF = 0.85
T_HORIZON = 0.0285

# inflow pressure schedule: (start, end, amplitude) quartic pulses
PRESSURE_WINDOWS = ((0.002, 0.006, 0.20), (0.010, 0.012, 0.02))


def quartic_bump(t, start, end):
    """C^1 bump equal to 1 at the window center, 0 outside [start, end]."""
    return QuarticWindow(0.5 * (start + end), 0.5 * (end - start))(t)


def perturbation_weight(t, windows=PRESSURE_WINDOWS):
    """w_p(t) >= 0, equal to 1 outside the perturbation windows."""
    t = np.asarray(t, dtype=float)
    w = np.ones_like(t)
    for start, end, amp in windows:
        w = w + amp * quartic_bump(t, start, end)
    return w


def inflow_pressure(t, base=P_INF, windows=PRESSURE_WINDOWS):
    return base * perturbation_weight(t, windows)


@dataclass
class Scenario:
    name: str
    model: object
    mesh: object
    T: float
    initial: np.ndarray
    boundary: numflux.BoundarySpec
    functional: object
    meta: dict = dc_field(default_factory=dict)

    def operator(self, entropy_fix=0.05):
        return forward.SpatialOperator(self.mesh, self.model, self.boundary,
                                       entropy_fix)

    def initial_field(self):
        return forward.Field(self.mesh, self.model, self.initial.copy(), 0.0)


def burgers_perturbed_shock(level, amplitude=0.5, pulse_center=0.2,
                            pulse_halfwidth=0.5):
    """Stationary shock at x=0 hit by an inflow wave; N = 40 * 2^level cells.

    The pulse carries enough mass to push the shock into the support of the
    observation window, so the functional tracks the displacement transit.
    """
    if level < 0:
        raise ConfigurationError("level must be >= 0")
    n = 40 * 2**level
    m = meshmod.build_interval_mesh(-1.0, 1.0, n)
    model = Burgers1D()
    u0 = np.where(m.centroids[:, 0] < 0.0, 1.0, -1.0)[:, None]
    pulse = QuarticWindow(pulse_center, pulse_halfwidth)

    def g_in(t, centroids):
        val = 1.0 + amplitude * pulse(t)
        return np.full((centroids.shape[0], 1), val)

    bc = numflux.BoundarySpec({
        "left": ("farfield", g_in),
        "right": ("farfield", np.array([-1.0])),
    })
    functional = VolumeFunctional(space=QuarticWindow(0.25, 0.2),
                                  time=QuarticWindow(1.25, 0.25))
    return Scenario(
        name="burgers_perturbed_shock", model=model, mesh=m, T=1.5,
        initial=u0, boundary=bc, functional=functional,
        meta={"level": int(level), "amplitude": float(amplitude),
              "pulse": (float(pulse_center), float(pulse_halfwidth))},
    )


def freestream_state(model, mach=MACH_INF, rho=RHO_INF, p=P_INF):
    c = np.sqrt(model.gamma * p / rho)
    return model.conserved(rho, mach * c, 0.0, p)


def euler_bump(level, bump_height=0.024, windows=PRESSURE_WINDOWS,
               T=T_HORIZON):
    """Transonic channel flow over a circular-arc bump, perturbed inflow."""
    if level < 0:
        raise ConfigurationError("level must be >= 0")
    model = Euler2D()
    m = meshmod.build_bump_channel_mesh(level=level, bump_height=bump_height)
    U_inf = freestream_state(model)
    u_inf = float(U_inf[1] / U_inf[0])

    def g_in(t, centroids):
        p_in = inflow_pressure(t, P_INF, windows)
        state = model.conserved(RHO_INF, u_inf, 0.0, p_in)
        return np.repeat(state.reshape(1, -1), centroids.shape[0], axis=0)

    bc = numflux.BoundarySpec({
        "inflow": ("farfield", g_in),
        "outflow": ("farfield", U_inf.copy()),
        "bottom": "wall",
        "top": "wall",
    })
    functional = BoundaryPressureFunctional(
        group="bottom", centers=tuple(float(x) for x in range(-3, 4)),
        halfwidth=0.25,
    )
    initial = np.repeat(U_inf.reshape(1, -1), m.n_cells, axis=0)
    return Scenario(
        name="euler_bump", model=model, mesh=m, T=T, initial=initial,
        boundary=bc, functional=functional,
        meta={"level": int(level), "bump_height": float(bump_height),
              "windows": tuple(tuple(w) for w in windows)},
    )


def steady_state_solve(scenario, cfg=None, seed_field=None, drop=1e-6,
                       cfl_start=5.0, cfl_max=1000.0, stall_steps=500,
                       max_steps=2000):
    """Implicit pseudo-time march to the steady state of a scenario.

    The CFL grows by switched evolution, doubling scaled by the residual
    ratio, until the space residual falls ``drop`` below its initial value.
    A plateau above target for ``stall_steps`` raises a nonconvergence error.
    """
    if cfg is None:
        cfg = forward.SchemeConfig(newton_tol=1e-3, newton_max=12,
                                   linear_tol=1e-3, linear_max=400)
    op = scenario.operator(cfg.entropy_fix)
    if seed_field is not None:
        values = meshmod.refine_structured(seed_field.values, seed_field.mesh,
                                           scenario.mesh)
    else:
        values = scenario.initial.copy()
    fld = forward.Field(scenario.mesh, scenario.model, values, 0.0)

    def res_norm(f):
        R, _ = op.residual(f.values, 0.0)
        return float(np.linalg.norm(R) / np.sqrt(f.values.shape[0]))

    # absolute floor: rounding-level residual counts as converged
    speed = float(scenario.model.max_speed(fld.values).max())
    scale = speed * float(np.abs(fld.values).max()) / float(
        scenario.mesh.cell_diameter.min()
    )
    floor = 1e-13 * scale
    r0 = res_norm(fld)
    target = max(drop * r0, floor)
    history = [r0]
    cfl = cfl_start
    best = r0
    since_best = 0
    for k in range(max_steps):
        if history[-1] <= target:
            break
        dt = forward.cfl_timestep(fld, cfl)
        try:
            cand, _ = forward.implicit_step(fld, dt, op, cfg)
        except NonConvergenceError:
            cfl = max(0.5, 0.25 * cfl)
            continue
        cand.t = 0.0
        r = res_norm(cand)
        prev = history[-1]
        # reject wild steps: a big pseudo-time step across the sonic region
        # can satisfy the implicit system yet leave a much worse steady
        # residual; retrying smaller keeps the march out of limit cycles
        if not np.isfinite(r) or r > 2.0 * prev:
            cfl = max(0.5, 0.25 * cfl)
            since_best += 1
            if since_best >= stall_steps:
                raise NonConvergenceError(
                    f"steady residual plateaued at {prev:.3e} "
                    f"(target {target:.3e}) after {k + 1} pseudo-steps"
                )
            continue
        fld = cand
        history.append(r)
        if r < best * (1.0 - 1e-12):
            best = r
            since_best = 0
        else:
            since_best += 1
            if since_best >= stall_steps:
                raise NonConvergenceError(
                    f"steady residual plateaued at {r:.3e} (target {target:.3e}) "
                    f"after {k + 1} pseudo-steps"
                )
        if r > 0.0:
            cfl = min(cfl_max, max(0.5, 2.0 * cfl * prev / r))
    else:
        raise NonConvergenceError(
            f"steady solve did not reach target {target:.3e} in {max_steps} steps"
        )
    fld.t = 0.0
    return fld, np.asarray(history)
