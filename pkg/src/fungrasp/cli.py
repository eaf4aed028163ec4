"""Command-line front end wiring the pipeline together.

Subcommands: retarget, simulate, sysid, gravcomp, eval, randomize.
Logs go to standard error; data goes to files or standard output.
Exit codes: 0 success, 1 input/validation error, 2 numerical
non-convergence (partial results are still written).
"""

import argparse
import json
import logging
import sys

import numpy as np

from . import backend
from .dynamics import (
    ActuatorParams,
    SimConfig,
    TrajectoryFormatError,
    gravity_torques,
    load_trajectory,
    randomization_config_from_json,
    rollout,
    sample_randomization,
    save_trajectory,
)
from .geometry import MeshError, ObjError, TablePlane, load_obj
from .grasps import human_grasp_from_json, robot_grasp_from_json, robot_grasp_to_json
from .hand_model import DescriptionError, parse_robot_description
from .retarget import RetargetConfig, RetargetWeights, optimize_grasp, write_loss_csv
from .rewards import RewardWeights, metric_contact_ratio, metric_simd, metric_success
from .sysid import (
    DEFAULT_LOG_BOUNDS,
    CmaesConfig,
    identify,
    multisine_commands,
    sysid_result_to_json,
    write_generation_csv,
)

logger = logging.getLogger("fungrasp")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NONCONVERGED = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; our contract reserves 2 for
    # non-convergence, so remap bad usage to the input-error code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _read(path):
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _write(path, text):
    if path == "-":
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _floats(text):
    return np.array([float(x) for x in text.split(",") if x.strip() != ""])


def _wrist_pose(text):
    from .transforms import Pose6D

    if text is None:
        return None
    v = _floats(text)
    if v.size != 7:
        raise ValueError("wrist pose needs 7 numbers: x,y,z,qw,qx,qy,qz")
    return Pose6D(v[:3], v[3:])


# -- defaults table -----------------------------------------------------------


def _default_rows():
    w = RetargetWeights()
    rc = RetargetConfig()
    sc = SimConfig()
    cc = CmaesConfig()
    rw = RewardWeights()
    (k_lo, k_hi), (d_lo, d_hi) = (
        np.exp(DEFAULT_LOG_BOUNDS["stiffness"]),
        np.exp(DEFAULT_LOG_BOUNDS["damping"]),
    )
    return [
        ("retarget", "--w-pen", w.w_pen, "penetration loss weight"),
        ("retarget", "--w-fc", w.w_fc, "force-closure loss weight"),
        ("retarget", "--w-pos", w.w_pos, "contact position loss weight"),
        ("retarget", "--w-joints", w.w_joints, "joint limit loss weight"),
        ("retarget", "--w-col", w.w_col, "collision loss weight"),
        ("retarget", "--tau-col", w.tau_col, "collision clearance threshold (m)"),
        ("retarget", "--lr", rc.learning_rate, "optimizer learning rate"),
        ("retarget", "--max-iters", rc.max_iters, "optimizer iteration cap"),
        ("retarget", "--tol", rc.tol, "convergence tolerance on the loss decrease"),
        ("simulate", "--dt", sc.dt, "integration step (s)"),
        ("simulate", "--control-hz", sc.control_hz, "command rate (Hz)"),
        ("simulate", "--inertia", float(np.asarray(sc.joint_inertia)), "per-joint inertia (kg m^2)"),
        ("sysid", "--max-gens", cc.max_gens, "CMA-ES generation cap"),
        ("sysid", "--population", "4 + floor(3 ln n)", "CMA-ES population size"),
        ("sysid", "--sigma0", "0.3 x widest box range", "initial CMA-ES step size"),
        ("sysid", "(search box)", f"k in [{k_lo:g}, {k_hi:g}]", "stiffness bounds (N m/rad)"),
        ("sysid", "(search box)", f"d in [{d_lo:g}, {d_hi:g}]", "damping bounds (N m s/rad)"),
        ("eval", "--lift-height", 0.1, "success lift threshold (m)"),
        ("eval", "--hold-secs", 3.0, "success/metric hold window (s)"),
        ("eval", "(reward) w_p", rw.w_p, "position reward weight"),
        ("eval", "(reward) w_s", rw.w_s, "safety reward weight"),
        ("eval", "(reward) w_q", rw.w_q, "pose reward weight"),
        ("eval", "(reward) beta_p", rw.beta_p, "position kernel sharpness (1/m)"),
        ("*", "--seed", 0, "RNG seed; equal seeds give byte-identical outputs"),
        ("*", "--threads", 1, "worker cap; FUNGRASP_THREADS is equivalent"),
    ]


def _show_defaults():
    rows = [("group", "flag", "default", "meaning")]
    for group, flag, value, note in _default_rows():
        if isinstance(value, float):
            value = f"{value:g}"
        rows.append((group, flag, str(value), note))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    for i, (group, flag, value, note) in enumerate(rows):
        print(f"{group:<{widths[0]}}  {flag:<{widths[1]}}  {value:<{widths[2]}}  {note}")
        if i == 0:
            print("-" * (sum(widths) + len(note) + 6))


# -- subcommands --------------------------------------------------------------


def cmd_retarget(args):
    model = parse_robot_description(_read(args.robot))
    human = human_grasp_from_json(_read(args.human))
    mesh = load_obj(args.object)
    weights = RetargetWeights(
        w_pen=args.w_pen, w_fc=args.w_fc, w_pos=args.w_pos,
        w_joints=args.w_joints, w_col=args.w_col, tau_col=args.tau_col,
    )
    config = RetargetConfig(
        learning_rate=args.lr, max_iters=args.max_iters, tol=args.tol,
        table=None if args.table is None else TablePlane(args.table),
    )
    result = optimize_grasp(model, human, mesh, weights, config)
    _write(args.out, robot_grasp_to_json(result.grasp))
    if args.loss_csv:
        write_loss_csv(args.loss_csv, result.loss_history)
    logger.info(
        "retarget: %d iterations, final loss %.6g, converged=%s",
        result.iterations, result.final_loss, result.converged,
    )
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


def _sim_config(args, real=None):
    hz = args.control_hz
    if hz is None and real is not None and len(real) > 1:
        hz = 1.0 / float(np.median(np.diff(real.times)))  # infer from the recording
    if hz is None:
        hz = SimConfig.control_hz
    return SimConfig(
        dt=args.dt, control_hz=hz, joint_inertia=args.inertia,
        gravity_comp=args.gravity_comp,
    )


def cmd_simulate(args):
    model = parse_robot_description(_read(args.robot))
    params = ActuatorParams.from_json(_read(args.params))
    config = _sim_config(args)
    if args.multisine is not None:
        commands = multisine_commands(model, args.multisine, config.control_hz, args.seed)
    else:
        commands = load_trajectory(args.commands).q_commanded
    q0 = model.clamp(np.zeros(model.dof) if args.q0 is None else _floats(args.q0))
    traj = rollout(model, params, config, q0, commands)
    save_trajectory(traj, args.out)
    logger.info("simulate: wrote %d ticks to %s", len(traj), args.out)
    return EXIT_OK


def cmd_sysid(args):
    model = parse_robot_description(_read(args.robot))
    real = load_trajectory(args.real)
    sim_config = _sim_config(args, real=real)
    cma = CmaesConfig(
        population=args.population, sigma0=args.sigma0,
        max_gens=args.max_gens, seed=args.seed,
    )
    result = identify(model, real, cma, sim_config, mode=args.mode)
    _write(args.out_params, sysid_result_to_json(result))
    if args.out_csv:
        write_generation_csv(args.out_csv, result.loss_per_gen)
    print(f"best_loss {result.best_loss:.17g}")
    return EXIT_OK


def cmd_gravcomp(args):
    model = parse_robot_description(_read(args.robot))
    q = _floats(args.q)
    if q.size != model.dof:
        raise ValueError(f"--q has {q.size} values, model has {model.dof} joints")
    wrist = _wrist_pose(args.wrist)
    gravity = (0.0, 0.0, -9.81) if args.gravity is None else _floats(args.gravity)
    from .transforms import Pose6D

    tau = gravity_torques(model, wrist or Pose6D.identity(), q, gravity=gravity)
    print(" ".join(f"{v:.12g}" for v in tau))
    return EXIT_OK


def cmd_eval(args):
    traj = load_trajectory(args.traj)
    reference = robot_grasp_from_json(_read(args.grasp))
    success = metric_success(traj, lift_height=args.lift_height, hold_secs=args.hold_secs)
    simd = metric_simd(traj, hold_secs=args.hold_secs)
    contact_ratio = None
    rewards = {}
    if traj.contact_flags is not None:
        contact_ratio = metric_contact_ratio(traj, reference, hold_secs=args.hold_secs)
        c_bar = np.array(list(reference.link_contacts.values()), dtype=bool)
        n_target = int(c_bar.sum())
        # final-sample contact reward; position/pose terms need wrist poses,
        # which trajectory recordings do not carry
        rewards["contact"] = (
            float((traj.contact_flags[-1] & c_bar).sum() / n_target) if n_target else 0.0
        )
    report = {
        "success": bool(success),
        "simd_mm_s": simd,
        "contact_ratio": contact_ratio,
        "rewards": rewards,
    }
    _write(args.out, json.dumps(report, indent=2))
    return EXIT_OK


def cmd_randomize(args):
    config = randomization_config_from_json(_read(args.config))
    sample = sample_randomization(config, args.seed)
    payload = {
        k: (v.tolist() if isinstance(v, np.ndarray) else float(v)) for k, v in sample.items()
    }
    _write(args.out, json.dumps(payload, indent=2))
    return EXIT_OK


# -- argument wiring ----------------------------------------------------------


def _add_sim_flags(p):
    sc = SimConfig()
    p.add_argument("--dt", type=float, default=sc.dt, help="integration step (s)")
    p.add_argument("--control-hz", type=float, default=None,
                   help="command rate (Hz); sysid infers it from the recording")
    p.add_argument("--inertia", type=float, default=float(np.asarray(sc.joint_inertia)),
                   help="per-joint inertia (kg m^2)")
    p.add_argument("--gravity-comp", action="store_true",
                   help="enable feedforward gravity compensation")


def build_parser():
    parser = _Parser(prog="fungrasp", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--show-defaults", action="store_true",
                        help="print the table of numeric defaults and exit")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker cap (FUNGRASP_THREADS is equivalent)")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for info, -vv for debug logging on stderr")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")

    w, rc = RetargetWeights(), RetargetConfig()
    p = sub.add_parser("retarget", help="map a human grasp onto a robot hand")
    p.add_argument("--human", required=True, help="human grasp JSON")
    p.add_argument("--robot", required=True, help="robot description JSON")
    p.add_argument("--object", required=True, help="object mesh OBJ")
    p.add_argument("--out", required=True, help="output robot grasp JSON")
    p.add_argument("--loss-csv", default=None, help="optional per-iteration loss CSV")
    p.add_argument("--w-pen", type=float, default=w.w_pen)
    p.add_argument("--w-fc", type=float, default=w.w_fc)
    p.add_argument("--w-pos", type=float, default=w.w_pos)
    p.add_argument("--w-joints", type=float, default=w.w_joints)
    p.add_argument("--w-col", type=float, default=w.w_col)
    p.add_argument("--tau-col", type=float, default=w.tau_col)
    p.add_argument("--lr", type=float, default=rc.learning_rate)
    p.add_argument("--max-iters", type=int, default=rc.max_iters)
    p.add_argument("--tol", type=float, default=rc.tol)
    p.add_argument("--table", type=float, default=None, help="table plane height (m)")
    p.set_defaults(func=cmd_retarget)

    p = sub.add_parser("simulate", help="roll out PD joint dynamics for a command sequence")
    p.add_argument("--robot", required=True)
    p.add_argument("--params", required=True, help="actuator stiffness/damping JSON")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--commands", help="trajectory JSONL whose q_cmd column to replay")
    src.add_argument("--multisine", type=float, metavar="SECS",
                     help="synthesize a multi-sine excitation of this duration")
    p.add_argument("--out", required=True, help="output trajectory JSONL")
    p.add_argument("--q0", default=None, help="initial joint angles, comma separated")
    p.add_argument("--seed", type=int, default=0)
    _add_sim_flags(p)
    p.set_defaults(func=cmd_simulate)

    cc = CmaesConfig()
    p = sub.add_parser("sysid", help="identify per-joint stiffness/damping from a recording")
    p.add_argument("--robot", required=True)
    p.add_argument("--real", required=True, help="recorded trajectory JSONL")
    p.add_argument("--out-params", required=True, help="output actuator params JSON")
    p.add_argument("--out-csv", default=None, help="optional per-generation loss CSV")
    p.add_argument("--mode", choices=("per_joint", "tied"), default="per_joint")
    p.add_argument("--max-gens", type=int, default=cc.max_gens)
    p.add_argument("--population", type=int, default=None)
    p.add_argument("--sigma0", type=float, default=None)
    p.add_argument("--seed", type=int, default=cc.seed)
    _add_sim_flags(p)
    p.set_defaults(func=cmd_sysid)

    p = sub.add_parser("gravcomp", help="print gravity-compensation torques for a posture")
    p.add_argument("--robot", required=True)
    p.add_argument("--q", required=True, help="joint angles, comma separated")
    p.add_argument("--wrist", default=None, help="wrist pose x,y,z,qw,qx,qy,qz")
    p.add_argument("--gravity", default=None, help="gravity vector, default 0,0,-9.81")
    p.set_defaults(func=cmd_gravcomp)

    p = sub.add_parser("eval", help="score a rollout against a reference grasp")
    p.add_argument("--traj", required=True, help="trajectory JSONL with object poses")
    p.add_argument("--grasp", required=True, help="reference robot grasp JSON")
    p.add_argument("--out", default="-", help="report JSON path, '-' for stdout")
    p.add_argument("--lift-height", type=float, default=0.1)
    p.add_argument("--hold-secs", type=float, default=3.0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("randomize", help="sample domain-randomization parameters")
    p.add_argument("--config", required=True, help="randomization ranges JSON")
    p.add_argument("--out", default="-", help="sample JSON path, '-' for stdout")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_randomize)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        n_threads = backend.get_num_threads(args.threads)
    except ValueError as e:
        print(f"fungrasp: error: {e}", file=sys.stderr)
        return EXIT_ERROR
    if backend.HAS_NUMBA and n_threads > 1:
        import numba

        numba.set_num_threads(min(n_threads, numba.config.NUMBA_NUM_THREADS))
    logger.debug("backend=%s threads=%d", backend.ACTIVE, n_threads)

    if args.show_defaults:
        _show_defaults()
        return EXIT_OK
    if args.command is None:
        parser.error("a subcommand is required (or --show-defaults)")

    try:
        return args.func(args)
    except FloatingPointError as e:
        print(f"fungrasp {args.command}: did not converge: {e}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (DescriptionError, MeshError, ObjError, TrajectoryFormatError) as e:
        print(f"fungrasp {args.command}: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as e:
        print(f"fungrasp {args.command}: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
