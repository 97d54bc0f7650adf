"""Benchmark the compiled kernels against their numpy fallbacks.

Run without arguments to print a comparison table; the script re-executes
itself once with FLOWADAPT_NUMBA=0 to collect the fallback timings in a
fresh interpreter, since the backend is fixed at import time.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def build_inputs(n_faces, rng):
    from flowadapt.physics import Euler2D

    model = Euler2D()
    rho = rng.uniform(0.3, 3.0, n_faces)
    u = rng.uniform(-250.0, 250.0, n_faces)
    v = rng.uniform(-250.0, 250.0, n_faces)
    p = rng.uniform(1e4, 4e5, n_faces)
    U = np.stack([model.conserved(rho[i], u[i], v[i], p[i])
                  for i in range(n_faces)])
    UR = np.roll(U, 1, axis=0)
    d = rng.normal(size=(n_faces, 2))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    nx = np.ascontiguousarray(d[:, 0])
    ny = np.ascontiguousarray(d[:, 1])
    return U, UR, nx, ny


def kernel_cases(n_faces):
    from flowadapt import kernels

    U, UR, nx, ny = build_inputs(n_faces, np.random.default_rng(20240901))
    g = 1.4
    return [
        ("euler_flux", kernels.euler_flux, (U, nx, ny, g)),
        ("euler_jacobian", kernels.euler_jacobian, (U, nx, ny, g)),
        ("euler_eigensystem", kernels.euler_eigensystem, (U, nx, ny, g)),
        ("roe_flux_faces", kernels.roe_flux_faces, (U, UR, nx, ny, g, 0.05)),
        ("abs_roe_blocks", kernels.abs_roe_blocks, (U, UR, nx, ny, g, 0.05)),
        ("face_jacobians", kernels.face_jacobians, (U, UR, nx, ny, g, 0.05)),
        ("wall_flux_faces", kernels.wall_flux_faces, (U, nx, ny, g)),
        ("farfield_flux_faces", kernels.farfield_flux_faces,
         (U, UR, nx, ny, g)),
    ]


def time_call(fn, args, repeat):
    fn(*args)  # warm-up triggers compilation on the numba path
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def forward_step_time(repeat):
    """Wall time of one explicit Euler step on the level-1 channel."""
    from flowadapt import forward
    from flowadapt.scenario import euler_bump

    sc = euler_bump(1)
    op = sc.operator()
    fld = sc.initial_field()
    cfg = forward.SchemeConfig(cfl=0.5, theta=0.0)
    dt = forward.cfl_timestep(fld, 0.5)
    forward.explicit_step(fld, dt, op, cfg)  # warm-up
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fld, _ = forward.explicit_step(fld, dt, op, cfg)
        best = min(best, time.perf_counter() - t0)
    return best


def measure(n_faces, repeat):
    from flowadapt import accel

    rows = {name: time_call(fn, args, repeat)
            for name, fn, args in kernel_cases(n_faces)}
    rows["explicit_step_L1"] = forward_step_time(repeat)
    return {"numba": accel.using_numba, "times": rows}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--faces", type=int, default=50000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true",
                    help="print one backend's timings as JSON and exit")
    args = ap.parse_args()

    mine = measure(args.faces, args.repeat)
    if args.json:
        json.dump(mine, sys.stdout)
        return

    env = dict(os.environ, FLOWADAPT_NUMBA="0" if mine["numba"] else "1")
    proc = subprocess.run(
        [sys.executable, __file__, "--faces", str(args.faces),
         "--repeat", str(args.repeat), "--json"],
        env=env, capture_output=True, text=True, check=True,
    )
    other = json.loads(proc.stdout)
    compiled, fallback = (mine, other) if mine["numba"] else (other, mine)
    if not compiled["numba"]:
        print("numba is not importable; both columns use the numpy path")

    print(f"{args.faces} faces, best of {args.repeat}")
    print(f"{'kernel':<18}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>9}")
    for name, t_nb in compiled["times"].items():
        t_np = fallback["times"][name]
        print(f"{name:<18}{1e3 * t_nb:>12.3f}{1e3 * t_np:>12.3f}"
              f"{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
