"""Timing comparison of the numba and numpy kernel backends.

The backend is fixed at import time by FUNGRASP_BACKEND, so the default
mode re-runs this script in two subprocesses (one per backend) and prints
a side-by-side table. `--one` times the current process's backend only.

    python benchmarks/bench_backends.py            # compare both backends
    python benchmarks/bench_backends.py --one      # current backend only
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _hand_description(n_fingers=4, joints_per_finger=4, step=0.03):
    links = [{"name": "wrist", "parent": None,
              "joint": {"joint_type": "fixed", "axis": [0, 0, 1],
                        "origin_xyz": [0, 0, 0], "origin_rpy": [0, 0, 0]},
              "mass": 0.2, "com": [0, 0, 0], "sample_points": []}]
    fingers = []
    for f in range(n_fingers):
        chain = []
        prev = "wrist"
        origin = [0.0, -0.025 * f, 0.0]
        for j in range(joints_per_finger):
            name = f"f{f}_l{j}"
            links.append({
                "name": name, "parent": prev,
                "joint": {"joint_type": "revolute", "axis": [0, 1, 0],
                          "origin_xyz": origin if j == 0 else [step, 0, 0],
                          "origin_rpy": [0, 0, 0],
                          "limit_lower": -0.4, "limit_upper": 1.6},
                "mass": 0.05, "com": [step / 2, 0, 0],
                "sample_points": [[step / 2, 0, -0.005]],
            })
            chain.append(name)
            prev = name
        tip = f"f{f}_tip"
        links.append({"name": tip, "parent": prev,
                      "joint": {"joint_type": "fixed", "axis": [0, 0, 1],
                                "origin_xyz": [step, 0, 0], "origin_rpy": [0, 0, 0]},
                      "mass": 0.01, "com": [0, 0, 0], "sample_points": [[0, 0, 0]]})
        chain.append(tip)
        fingers.append(chain)
    return json.dumps({"name": "bench_hand", "links": links,
                       "fingers": fingers, "human_map": {}})


def _gridded_cube_obj(n=10, half=0.05):
    """Watertight cube with each face split into an n x n triangle grid."""
    verts = {}
    faces = []

    def vid(p):
        key = tuple(round(c, 9) for c in p)
        if key not in verts:
            verts[key] = len(verts) + 1
        return verts[key]

    axes = [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
    for ax, u, v in axes:
        for sign in (1.0, -1.0):
            for i in range(n):
                for j in range(n):
                    quad = []
                    for du, dv in ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)):
                        c = [0.0, 0.0, 0.0]
                        c[ax] = sign * half
                        c[u] = -half + 2 * half * du / n
                        c[v] = -half + 2 * half * dv / n
                        quad.append(vid(c))
                    if sign < 0:
                        quad = quad[::-1]
                    faces.append(quad)
    lines = [f"v {k[0]} {k[1]} {k[2]}" for k in verts]
    lines += ["f %d %d %d %d" % tuple(q) for q in faces]
    return "\n".join(lines) + "\n"


def _time(fn, reps):
    fn()  # warmup: triggers JIT compilation on the numba backend
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps


def run_current_backend():
    from fungrasp.backend import ACTIVE
    from fungrasp.dynamics import ActuatorParams, SimConfig, rollout
    from fungrasp.geometry import parse_obj
    from fungrasp.hand_model import parse_robot_description
    from fungrasp.transforms import Pose6D

    rng = np.random.default_rng(0)
    model = parse_robot_description(_hand_description())
    mesh = parse_obj(_gridded_cube_obj(10, 0.05), mesh_id="bench_cube")
    wrist = Pose6D.identity()
    q = rng.uniform(model.limits_lower, model.limits_upper)
    points = rng.normal(size=(20000, 3)) * 0.08
    params = ActuatorParams(np.full(model.dof, 3.0), np.full(model.dof, 0.2))
    cfg = SimConfig(dt=1e-3, control_hz=20.0)
    commands = rng.uniform(-0.3, 1.2, size=(40, model.dof))

    results = {"backend": ACTIVE, "timings": {}}
    results["timings"]["sdf batch (20k pts, 1200 tris)"] = _time(
        lambda: mesh.signed_distance(points), 5)
    results["timings"]["forward kinematics (16 dof)"] = _time(
        lambda: model.fk_arrays(wrist, q), 2000)
    results["timings"]["pd rollout (2 s, gravity on)"] = _time(
        lambda: rollout(model, params, cfg, np.zeros(model.dof), commands), 5)
    return results


def compare():
    runs = []
    for backend in ("numba", "numpy"):
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--one", "--json"],
            env={**os.environ, "FUNGRASP_BACKEND": backend},
            capture_output=True, text=True, check=True,
        )
        runs.append(json.loads(out.stdout))
    names = list(runs[0]["timings"])
    width = max(len(n) for n in names)
    print(f"{'workload':<{width}}  {'numba':>12}  {'numpy':>12}  {'speedup':>8}")
    print("-" * (width + 40))
    for n in names:
        a, b = runs[0]["timings"][n], runs[1]["timings"][n]
        print(f"{n:<{width}}  {a * 1e3:>10.3f} ms  {b * 1e3:>10.3f} ms  {b / a:>7.1f}x")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--one", action="store_true", help="time the active backend only")
    ap.add_argument("--json", action="store_true", help="machine-readable output")
    args = ap.parse_args()
    if not args.one:
        compare()
        return
    results = run_current_backend()
    if args.json:
        print(json.dumps(results))
    else:
        print(f"backend: {results['backend']}")
        for name, secs in results["timings"].items():
            print(f"  {name}: {secs * 1e3:.3f} ms")


if __name__ == "__main__":
    main()
