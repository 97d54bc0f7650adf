"""Timestep planning: equidistribution, CFL floor, and mode switching.

A coarse run leaves one temporal indicator density per step.  The planner
turns them into a new step-size profile by proportional control against a
tolerance, holds every step above the fine-grid CFL floor, integrates the
profile into an explicit list of steps, and optionally replaces every
implicit step below the switching threshold by a run of explicit steps at
the fixed explicit CFL target.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigurationError
from .forward import MODE_EXPLICIT, MODE_IMPLICIT

TOL_FACTOR = 0.125
FLOOR_CFL = 0.8
SWITCH_CFL = 5.0
EXPLICIT_CFL = 0.5
# largest step as a fraction of the horizon when indicators vanish
MAX_STEP_FRACTION = 0.1


@dataclass
class TimestepPlan:
    """Ordered steps (dt, mode) summing to the horizon T."""

    steps: list
    T: float
    tol: float = 0.0
    source: str = ""
    meta: dict = dc_field(default_factory=dict)

    @property
    def n_steps(self):
        return len(self.steps)

    @property
    def n_implicit(self):
        return sum(1 for _, mode in self.steps if mode == MODE_IMPLICIT)

    @property
    def implicit_share(self):
        return self.n_implicit / max(1, self.n_steps)

    def dts(self):
        return np.array([dt for dt, _ in self.steps])

    def modes(self):
        return np.array([mode for _, mode in self.steps], dtype=int)

    def implied_cfl(self, dt_cfl1):
        return self.dts() / float(dt_cfl1)

    def validate(self):
        dts = self.dts()
        if len(dts) == 0:
            raise ConfigurationError("plan has no steps")
        if np.any(dts <= 0.0):
            raise ConfigurationError("plan has non-positive steps")
        if abs(float(dts.sum()) - self.T) > 1e-12 * max(1.0, abs(self.T)):
            raise ConfigurationError(
                f"plan sums to {dts.sum():.15e}, horizon is {self.T:.15e}"
            )
        return self

    def as_run_plan(self):
        return [(float(dt), int(mode)) for dt, mode in self.steps]


def reference_tolerance(bar_steps, tol_factor=TOL_FACTOR):
    """Tolerance as a fraction of the worst per-step indicator density."""
    bar = np.asarray(bar_steps, dtype=float)
    peak = float(bar.max()) if bar.size else 0.0
    if peak <= 0.0:
        return 0.0
    return tol_factor * peak


def target_profile(coarse_dts, bar_steps, tol, T,
                   max_fraction=MAX_STEP_FRACTION):
    """Per coarse interval target step size by proportional control.

    target_n = dt_n * tol / bar_n, capped at max_fraction * T.  The cap is
    realized through the floor inside the division so a vanishing indicator
    (stationary window) asks for the capped step rather than infinity.
    """
    dts = np.asarray(coarse_dts, dtype=float)
    bar = np.asarray(bar_steps, dtype=float)
    if dts.shape != bar.shape:
        raise ConfigurationError("coarse dts and indicator lengths differ")
    cap = max_fraction * T
    if tol <= 0.0:
        return np.full_like(dts, cap)
    floor_val = dts * tol / cap
    return dts * tol / np.maximum(bar, floor_val)


def apply_cfl_floor(targets, dt_cfl1, floor_cfl=FLOOR_CFL):
    """Hold every target above the fine-grid CFL floor."""
    return np.maximum(np.asarray(targets, dtype=float),
                      floor_cfl * float(dt_cfl1))


def emit_plan(coarse_dts, targets, T, tol=0.0, source="",
              mode=MODE_IMPLICIT):
    """Integrate the piecewise-constant step-size profile into a plan.

    The profile holds targets[n] on the n-th coarse interval.  Steps are
    emitted left to right from the target at the cursor; the final step is
    clipped at T, and a clipped sliver shorter than half its target merges
    into the previous step so no degenerate step is produced.
    """
    dts = np.asarray(coarse_dts, dtype=float)
    targets = np.asarray(targets, dtype=float)
    edges = np.concatenate(([0.0], np.cumsum(dts)))
    span = float(edges[-1])
    if abs(span - T) > 1e-10 * max(1.0, T):
        raise ConfigurationError("coarse intervals do not cover the horizon")
    steps = []
    t = 0.0
    guard = 1e-12 * T
    while t < T - guard:
        n = min(int(np.searchsorted(edges, t, side="right")) - 1,
                len(targets) - 1)
        dt = float(targets[n])
        if t + dt > T:
            rem = T - t
            if steps and rem < 0.5 * dt:
                prev_dt, prev_mode = steps[-1]
                steps[-1] = (prev_dt + rem, prev_mode)
            else:
                steps.append((rem, mode))
            break
        steps.append((dt, mode))
        t += dt
    plan = TimestepPlan(steps=steps, T=T, tol=tol, source=source)
    # rounding drift from the additive cursor folds into the last step
    drift = T - float(plan.dts().sum())
    if steps and abs(drift) > 0.0:
        last_dt, last_mode = steps[-1]
        steps[-1] = (last_dt + drift, last_mode)
    return plan.validate()


def apply_mode_switch(plan, dt_cfl1, switch_cfl=SWITCH_CFL,
                      explicit_cfl=EXPLICIT_CFL):
    """Replace slow implicit steps by runs of fixed-CFL explicit steps.

    Every implicit step whose implied CFL is below switch_cfl is covered by
    ceil(window / dt_e) explicit steps of exactly dt_e = explicit_cfl *
    dt_cfl1.  The overshoot of such a run is absorbed by the following
    windows; explicit steps and fast implicit steps pass through, so the
    substitution is idempotent.
    """
    dt_e = explicit_cfl * float(dt_cfl1)
    thresh = switch_cfl * float(dt_cfl1)
    out = []
    covered = 0.0
    end = 0.0
    eps = 1e-12 * plan.T
    for dt, mode in plan.steps:
        end += dt
        if covered >= end - eps:
            continue
        window = end - covered
        # decide on the window actually left to cover: a carry-shortened
        # implicit step must not slip below the switching threshold
        if mode == MODE_IMPLICIT and window < thresh * (1.0 - 1e-12):
            k = int(np.ceil(window / dt_e - 1e-12))
            run_end = covered + k * dt_e
            if run_end > plan.T + eps:
                # trailing run would pass the horizon: emit whole steps and
                # hand the remainder to one implicit step to land on T
                k = int(np.floor((plan.T - covered) / dt_e + 1e-12))
                out.extend([(dt_e, MODE_EXPLICIT)] * k)
                covered += k * dt_e
                rem = plan.T - covered
                if rem > eps:
                    out.append((rem, MODE_IMPLICIT))
                    covered = plan.T
            else:
                out.extend([(dt_e, MODE_EXPLICIT)] * k)
                covered = run_end
        else:
            # keep untouched steps bit-exact; window only differs from dt
            # by cursor round-off unless an explicit run really carried over
            out.append((dt if abs(window - dt) <= eps else window, mode))
            covered = end
    switched = TimestepPlan(steps=out, T=plan.T, tol=plan.tol,
                            source=plan.source, meta=dict(plan.meta))
    drift = plan.T - float(switched.dts().sum())
    if out and abs(drift) > 0.0:
        last_dt, last_mode = out[-1]
        if last_mode == MODE_IMPLICIT or abs(drift) <= 1e-9 * dt_e:
            out[-1] = (last_dt + drift, last_mode)
    return switched.validate()


def plan_from_indicators(coarse_dts, bar_steps, T, dt_cfl1,
                         tol_factor=TOL_FACTOR, floor_cfl=FLOOR_CFL,
                         mode="implicit", switch_cfl=SWITCH_CFL,
                         explicit_cfl=EXPLICIT_CFL, source=""):
    """Full pipeline from coarse indicators to a fine-run plan."""
    if mode not in ("implicit", "mixed"):
        raise ConfigurationError(f"unknown plan mode {mode!r}")
    tol = reference_tolerance(bar_steps, tol_factor)
    targets = target_profile(coarse_dts, bar_steps, tol, T)
    targets = apply_cfl_floor(targets, dt_cfl1, floor_cfl)
    plan = emit_plan(coarse_dts, targets, T, tol=tol, source=source)
    plan.meta.update(dt_cfl1=float(dt_cfl1), floor_cfl=float(floor_cfl),
                     tol_factor=float(tol_factor), mode=mode)
    if mode == "mixed":
        plan = apply_mode_switch(plan, dt_cfl1, switch_cfl, explicit_cfl)
        plan.meta.update(switch_cfl=float(switch_cfl),
                         explicit_cfl=float(explicit_cfl))
    return plan
