"""Command-line pipeline: forward run, dual + indicators, plan, report.

Each run lives in its own directory with fixed file names (trajectory.bin,
dual.bin, indicators.csv, plan.txt, stats.csv, functional.csv).  Every
artifact carries a format version and the hash of the trajectory it was
derived from, and the commands refuse to mix artifacts from different runs.

Exit codes: 0 success, 2 configuration error, 3 solver nonconvergence,
4 artifact mismatch.
"""

import argparse
import sys
import zlib
from pathlib import Path

import numpy as np

from . import adapt, forward, indicator, mesh as meshmod, runio, scenario as scen
from .adjoint import run_adjoint
from .errors import ArtifactError, ConfigurationError, NonConvergenceError, StateError

FORMAT_VERSION = 1

TRAJECTORY = "trajectory.bin"
DUAL = "dual.bin"
INDICATORS = "indicators.csv"
PLAN = "plan.txt"
STATS = "stats.csv"
FUNCTIONAL = "functional.csv"


# -- configuration -----------------------------------------------------------

# key -> (parser, repeatable); parsers raise ValueError on bad text
_CONFIG_KEYS = {
    "model": (str, False),
    "level": (int, False),
    "T": (float, False),
    "amplitude": (float, False),
    "pulse_center": (float, False),
    "pulse_halfwidth": (float, False),
    "bump_height": (float, False),
    "window": (lambda s: tuple(float(v) for v in s.split()), True),
    "initial": (str, False),
    "steady_drop": (float, False),
    "functional_centers": (lambda s: tuple(float(v) for v in s.split()), False),
    "functional_center": (float, False),
    "functional_halfwidth": (float, False),
    "functional_time_center": (float, False),
    "functional_time_halfwidth": (float, False),
    "newton_tol": (float, False),
    "newton_max": (int, False),
    "linear_tol": (float, False),
    "linear_max": (int, False),
    "entropy_fix": (float, False),
}


def parse_config(path):
    """Read a 'key = value' scenario file into a dict of typed values."""
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    cfg = {}
    for ln, line in enumerate(p.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{ln}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigurationError(f"{path}:{ln}: unknown config key {key!r}")
        cast, repeatable = _CONFIG_KEYS[key]
        try:
            parsed = cast(val)
        except ValueError:
            raise ConfigurationError(f"{path}:{ln}: bad value for {key}: {val!r}")
        if repeatable:
            cfg.setdefault(key, []).append(parsed)
        elif key in cfg:
            raise ConfigurationError(f"{path}:{ln}: duplicate config key {key!r}")
        else:
            cfg[key] = parsed
    if "model" not in cfg:
        raise ConfigurationError(f"{path}: missing config key 'model'")
    return cfg


def build_scenario(cfg):
    """Construct the scenario a config dict describes."""
    model = cfg["model"]
    level = int(cfg.get("level", 0))
    if model == "burgers1d":
        sc = scen.burgers_perturbed_shock(
            level,
            amplitude=cfg.get("amplitude", 0.5),
            pulse_center=cfg.get("pulse_center", 0.2),
            pulse_halfwidth=cfg.get("pulse_halfwidth", 0.5),
        )
        if "T" in cfg:
            sc.T = float(cfg["T"])
        if any(k in cfg for k in ("functional_center", "functional_halfwidth",
                                  "functional_time_center",
                                  "functional_time_halfwidth")):
            from .functional import QuarticWindow, VolumeFunctional

            sc.functional = VolumeFunctional(
                space=QuarticWindow(cfg.get("functional_center", 0.25),
                                    cfg.get("functional_halfwidth", 0.2)),
                time=QuarticWindow(cfg.get("functional_time_center", 1.25),
                                   cfg.get("functional_time_halfwidth", 0.25)),
            )
    elif model == "euler2d":
        windows = tuple(cfg["window"]) if "window" in cfg else scen.PRESSURE_WINDOWS
        for w in windows:
            if len(w) != 3:
                raise ConfigurationError(
                    f"window must be 'start end amplitude', got {w!r}")
        sc = scen.euler_bump(
            level,
            bump_height=cfg.get("bump_height", 0.024),
            windows=windows,
            T=cfg.get("T", scen.T_HORIZON),
        )
        if "functional_centers" in cfg or "functional_halfwidth" in cfg:
            from .functional import BoundaryPressureFunctional

            sc.functional = BoundaryPressureFunctional(
                group="bottom",
                centers=tuple(cfg.get("functional_centers",
                                      tuple(float(x) for x in range(-3, 4)))),
                halfwidth=cfg.get("functional_halfwidth", 0.25),
            )
    else:
        raise ConfigurationError(
            f"unknown model {model!r} (expected burgers1d or euler2d)")
    return sc


def scheme_from_config(cfg, theta, cfl):
    return forward.SchemeConfig(
        theta=theta,
        cfl=cfl,
        newton_tol=cfg.get("newton_tol", 1e-8),
        newton_max=cfg.get("newton_max", 30),
        linear_tol=cfg.get("linear_tol", 1e-4),
        linear_max=cfg.get("linear_max", 200),
        entropy_fix=cfg.get("entropy_fix", 0.05),
    )


def _jsonable_config(cfg):
    out = {}
    for key, val in cfg.items():
        if isinstance(val, list):
            out[key] = [list(v) for v in val]
        elif isinstance(val, tuple):
            out[key] = list(val)
        else:
            out[key] = val
    return out


def _config_from_meta(meta):
    cfg = dict(meta.get("config", {}))
    if "window" in cfg:
        cfg["window"] = [tuple(w) for w in cfg["window"]]
    if "functional_centers" in cfg:
        cfg["functional_centers"] = tuple(cfg["functional_centers"])
    return cfg


# -- shared helpers ----------------------------------------------------------

def run_hash(run_dir):
    """Identity of a run: CRC32 of its trajectory container."""
    path = Path(run_dir) / TRAJECTORY
    if not path.is_file():
        raise ArtifactError(f"{run_dir}: no {TRAJECTORY}; run 'forward' first")
    return f"{zlib.crc32(path.read_bytes()) & 0xFFFFFFFF:08x}"


def _check_table(path, meta, expect_source=None):
    if meta.get("format") != FORMAT_VERSION:
        raise ArtifactError(
            f"{path}: format version {meta.get('format')!r}, "
            f"expected {FORMAT_VERSION}")
    if expect_source is not None and meta.get("source_run") != expect_source:
        raise ArtifactError(
            f"{path}: derived from run {meta.get('source_run')!r} but the "
            f"trajectory hashes to {expect_source!r}; rerun the earlier stage")


def load_run(run_dir):
    """Rebuild (scenario, trajectory, hash) from a run directory."""
    path = Path(run_dir) / TRAJECTORY
    if not path.is_file():
        raise ArtifactError(f"{run_dir}: no {TRAJECTORY}; run 'forward' first")
    raw = runio.read_states(path, expect_kind=runio.KIND_FORWARD)
    sc = build_scenario(_config_from_meta(raw["meta"]))
    traj = runio.read_trajectory(path, sc.mesh, sc.model)
    return sc, traj, run_hash(run_dir)


def _table_meta(sc, src_hash, **extra):
    meta = {
        "format": FORMAT_VERSION,
        "source_run": src_hash,
        "model": sc.model.name,
        "mesh_hash": int(sc.mesh.mesh_hash),
    }
    meta.update(extra)
    return meta


# -- subcommands -------------------------------------------------------------

def cmd_forward(args):
    cfg = parse_config(args.config)
    if args.level is not None:
        cfg["level"] = args.level
    sc = build_scenario(cfg)
    theta = 1.0 if args.mode == "implicit" else 0.0
    cfl = 0.5 if args.cfl is None else args.cfl
    scheme = scheme_from_config(cfg, theta=theta, cfl=cfl)
    op = sc.operator(scheme.entropy_fix)

    plan = None
    plan_meta = {}
    if args.plan is not None:
        plan, plan_meta = runio.read_plan(args.plan)
        total = sum(dt for dt, _ in plan)
        if abs(total - sc.T) > 1e-9 * max(1.0, abs(sc.T)):
            raise ArtifactError(
                f"{args.plan}: steps sum to {total:.17g} but the scenario "
                f"horizon is {sc.T:.17g}")

    field = sc.initial_field()
    if sc.model.name == "euler2d" and cfg.get("initial", "steady") == "steady":
        field, hist = scen.steady_state_solve(
            sc, cfg=None, drop=cfg.get("steady_drop", 1e-6))
        print(f"steady state: {len(hist) - 1} pseudo-steps, "
              f"residual drop {hist[-1] / hist[0]:.3e}")

    from .functional import TraceRecorder

    recorder = TraceRecorder(sc.functional, sc.mesh, sc.model, t_start=field.t)
    traj = forward.run_forward(field, sc.T, op, scheme, plan=plan,
                               store=not args.no_states,
                               observers=(recorder,))
    J, rows = recorder.J, recorder.rows

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run_meta = {
        "config": _jsonable_config(cfg),
        "mode": args.mode,
        "cfl": None if args.plan is not None else cfl,
        "plan_source": plan_meta.get("source") if plan is not None else None,
        "J": float(J),
    }
    runio.write_trajectory(out / TRAJECTORY, traj, meta=run_meta)
    src = run_hash(out)

    n = traj.n_steps
    stats_rows = [
        (m, traj.times[m + 1], traj.dts[m], int(traj.modes[m]),
         int(traj.newton_iters[m]), int(traj.linear_iters[m]))
        for m in range(n)
    ]
    runio.write_csv(
        out / STATS,
        ["step", "t_end", "dt", "mode", "newton_iters", "linear_iters"],
        stats_rows,
        meta=_table_meta(sc, src, n_steps=n,
                         n_implicit=int(np.sum(traj.modes == 1)),
                         J=float(J)),
    )
    runio.write_csv(
        out / FUNCTIONAL,
        ["step", "t_mid", "dt", "trace", "J_cum"],
        rows,
        meta=_table_meta(sc, src, J=float(J)),
    )
    print(f"forward: {n} steps ({int(np.sum(traj.modes == 1))} implicit), "
          f"J = {J:.12g} -> {out}")
    return 0


def cmd_adjoint(args):
    run_dir = Path(args.run)
    sc, traj, src = load_run(run_dir)
    if traj.states is None:
        raise ArtifactError(
            f"{run_dir}: trajectory holds no snapshots (forward --no-states); "
            "the dual solver needs them")
    op = sc.operator()
    dual = run_adjoint(traj, sc.functional, cfl_dual=args.cfl_dual)
    etak = indicator.compute_eta_k(traj, dual, sc.functional)
    etah = indicator.compute_eta_h(traj, op, dual)

    n = traj.n_steps
    nc = sc.mesh.n_cells
    w_flat = dual.w.reshape(n + 1, nc, sc.mesh.dim * sc.model.n_vars)
    runio.write_states(
        run_dir / DUAL, runio.KIND_DUAL, sc.mesh.mesh_hash, dual.times,
        traj.dts, traj.modes, dual.substeps, np.zeros(n, dtype=np.uint32),
        states=w_flat,
        meta={"source_run": src, "dim": sc.mesh.dim,
              "n_vars": sc.model.n_vars, "cfl_dual": args.cfl_dual,
              "iters_are_substeps": True},
    )
    ind_rows = [
        (m, traj.times[m] + 0.5 * traj.dts[m], traj.dts[m],
         etak.steps[m], etah.steps[m], etak.bar_steps[m], etah.bar_steps[m])
        for m in range(n)
    ]
    runio.write_csv(
        run_dir / INDICATORS,
        ["step", "t_mid", "dt", "eta_k", "eta_h", "bar_k", "bar_h"],
        ind_rows,
        meta=_table_meta(sc, src,
                         eta_k=float(etak.total), eta_h=float(etah.total),
                         eta=float(etak.total + etah.total)),
    )
    print(f"adjoint: eta_k = {etak.total:.6e}  eta_h = {etah.total:.6e}  "
          f"eta = {etak.total + etah.total:.6e}")
    return 0


def cmd_plan(args):
    run_dir = Path(args.run)
    ind_path = run_dir / INDICATORS
    if not ind_path.is_file():
        raise ArtifactError(f"{run_dir}: no {INDICATORS}; run 'adjoint' first")
    sc, traj, src = load_run(run_dir)
    header, data, meta = runio.read_csv(ind_path)
    _check_table(ind_path, meta, expect_source=src)
    cols = {name: data[:, i] for i, name in enumerate(header)}
    coarse_dts = cols["dt"]
    bar_k = cols["bar_k"]

    level = int(sc.meta.get("level", 0))
    target = args.target_level if args.target_level is not None else level
    if target < level:
        raise ConfigurationError(
            f"--target-level {target} is coarser than the run level {level}")
    start = traj.states[0] if traj.states is not None else sc.initial
    if target == level:
        fine_vals, fine_mesh = start, sc.mesh
    else:
        cfg_fine = _config_from_meta(traj.meta)
        cfg_fine["level"] = target
        fine_mesh = build_scenario(cfg_fine).mesh
        if sc.mesh.dim == 1:
            ratio = fine_mesh.n_cells // sc.mesh.n_cells
            fine_vals = np.repeat(start, ratio, axis=0)
        else:
            fine_vals = meshmod.refine_structured(start, sc.mesh, fine_mesh)
    fine_field = forward.Field(fine_mesh, sc.model, fine_vals, 0.0)
    dt_cfl1 = forward.cfl_timestep(fine_field, 1.0)

    plan = adapt.plan_from_indicators(
        coarse_dts, bar_k, sc.T, dt_cfl1,
        tol_factor=args.tol_factor, floor_cfl=args.floor_cfl,
        mode=args.mode, switch_cfl=args.switch_cfl,
        explicit_cfl=args.explicit_cfl,
        source=f"{run_dir.name}:{src}",
    )
    runio.write_plan(
        run_dir / PLAN, plan.steps,
        meta={"format": FORMAT_VERSION, "T": plan.T, "tolerance": plan.tol,
              "source": plan.source, "mode": args.mode,
              "target_level": target, "dt_cfl1": dt_cfl1,
              "n_steps": plan.n_steps, "n_implicit": plan.n_implicit},
    )
    n_exp = plan.n_steps - plan.n_implicit
    print(f"plan: {plan.n_steps} steps ({plan.n_implicit} implicit, "
          f"{n_exp} explicit) -> {run_dir / PLAN}")
    return 0


def _read_run_tables(run_dir):
    run_dir = Path(run_dir)
    out = {}
    for name in (STATS, FUNCTIONAL):
        path = run_dir / name
        if not path.is_file():
            raise ArtifactError(f"{run_dir}: no {name}; run 'forward' first")
        header, data, meta = runio.read_csv(path)
        _check_table(path, meta)
        out[name] = (header, data, meta)
    return out


def cmd_report(args):
    runs = [(Path(d), _read_run_tables(d)) for d in args.runs]
    ref_dir = Path(args.reference) if args.reference else runs[0][0]
    ref = dict(runs).get(ref_dir)
    if ref is None:
        ref = _read_run_tables(ref_dir)

    mesh_hash = ref[STATS][2]["mesh_hash"]
    for run_dir, tables in runs:
        if tables[STATS][2]["mesh_hash"] != mesh_hash:
            raise ArtifactError(
                f"{run_dir}: mesh differs from reference {ref_dir}; "
                "functional traces are not comparable")

    fh, fdata, _ = ref[FUNCTIONAL]
    fcols = {name: i for i, name in enumerate(fh)}
    t_ref = fdata[:, fcols["t_mid"]]
    tr_ref = fdata[:, fcols["trace"]]
    amp = float(np.max(np.abs(tr_ref - tr_ref[0]))) if len(tr_ref) else 0.0

    rows = []
    for run_dir, tables in runs:
        smeta = tables[STATS][2]
        sh, sdata, _ = tables[STATS]
        scols = {name: i for i, name in enumerate(sh)}
        fh2, fdata2, fmeta2 = tables[FUNCTIONAL]
        fcols2 = {name: i for i, name in enumerate(fh2)}
        tr = np.interp(t_ref, fdata2[:, fcols2["t_mid"]],
                       fdata2[:, fcols2["trace"]])
        dev = float(np.max(np.abs(tr - tr_ref))) if len(t_ref) else 0.0
        rows.append((
            run_dir.name,
            int(smeta["n_steps"]),
            int(smeta["n_implicit"]),
            int(sdata[:, scols["newton_iters"]].sum()),
            int(sdata[:, scols["linear_iters"]].sum()),
            float(fmeta2["J"]),
            dev,
            dev / amp if amp > 0.0 else 0.0,
        ))

    header = ["run", "steps", "implicit_steps", "newton_iters", "linear_iters",
              "functional", "max_deviation", "deviation_over_signal"]
    meta = {"format": FORMAT_VERSION, "reference": ref_dir.name,
            "signal_amplitude": amp}
    if args.out:
        runio.write_csv(args.out, header, rows, meta=meta)
        print(f"report: {len(rows)} runs vs {ref_dir.name} -> {args.out}")
    else:
        for key, val in sorted(meta.items()):
            print(f"# {key} = {val!r}" if isinstance(val, str)
                  else f"# {key} = {val:.17g}" if isinstance(val, float)
                  else f"# {key} = {val}")
        print(",".join(header))
        for row in rows:
            print(",".join(f"{v:.17g}" if isinstance(v, float) else str(v)
                           for v in row))
    return 0


# -- entry point -------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(
        prog="flowadapt",
        description="Adjoint-based adaptive timestep control pipeline.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("forward", help="run the forward solver")
    f.add_argument("config", help="scenario config file (key = value lines)")
    f.add_argument("--out", required=True, help="run directory to create")
    f.add_argument("--level", type=int, default=None,
                   help="override the config's refinement level")
    g = f.add_mutually_exclusive_group()
    g.add_argument("--cfl", type=float, default=None,
                   help="uniform CFL number (default 0.5)")
    g.add_argument("--plan", default=None, help="timestep plan file to follow")
    f.add_argument("--mode", choices=("explicit", "implicit"),
                   default="explicit",
                   help="time integrator for uniform-CFL runs")
    f.add_argument("--no-states", action="store_true",
                   help="record only traces, not snapshots (no adjoint later)")
    f.set_defaults(func=cmd_forward)

    a = sub.add_parser("adjoint", help="solve the dual and write indicators")
    a.add_argument("run", help="run directory with a trajectory")
    a.add_argument("--cfl-dual", type=float, default=0.45)
    a.set_defaults(func=cmd_adjoint)

    pl = sub.add_parser("plan", help="emit an adapted timestep plan")
    pl.add_argument("run", help="run directory with indicators")
    pl.add_argument("--tol-factor", type=float, default=0.125)
    pl.add_argument("--floor-cfl", type=float, default=0.8)
    pl.add_argument("--switch-cfl", type=float, default=5.0)
    pl.add_argument("--explicit-cfl", type=float, default=0.5)
    pl.add_argument("--mode", choices=("implicit", "mixed"), default="implicit")
    pl.add_argument("--target-level", type=int, default=None,
                    help="refinement level the plan will be applied at")
    pl.set_defaults(func=cmd_plan)

    r = sub.add_parser("report", help="compare completed runs")
    r.add_argument("runs", nargs="+", help="run directories to tabulate")
    r.add_argument("--reference", default=None,
                   help="reference run for trace deviations (default: first)")
    r.add_argument("--out", default=None, help="write the table here "
                   "instead of stdout")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NonConvergenceError, StateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
