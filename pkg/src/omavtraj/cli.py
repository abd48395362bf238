"""Command-line pipeline: plan, check, profile, simulate, bench.

Exit codes: 0 success, 1 bad input or config, 2 no path or no corridor,
3 solver failure, 4 tracking divergence, 5 check found violations.
Machine-readable summaries go to stdout as one JSON document; diagnostics
go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import rotation
from .config import ConfigError, Resolved, dumps
from .corridor import (
    Corridor,
    DecompositionError,
    NoPathError,
    PointCloud,
    decompose,
    rrt_search,
    shortcut,
    split_long_segments,
)
from .costs import Limits, sampled_violations
from .flatness import profile_times, sample_profile, write_profile_csv
from .minco import Trajectory
from .optimizer import ProblemSpec, allocate_pieces, solve
from .polytope import Polyhedron, VehicleShape, body_hull
from .scenarios import random_boxes
from .simtrack import Gains, TrackingDivergence, track

logger = logging.getLogger("omavtraj")

EXIT_OK, EXIT_INPUT, EXIT_NO_PATH, EXIT_SOLVER, EXIT_DIVERGED, EXIT_VIOLATION = range(6)


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


# --- artifacts ------------------------------------------------------------------

def trajectory_to_json(traj: Trajectory, piece_poly) -> dict:
    obj = traj.to_json()
    for piece, k in zip(obj["pieces"], piece_poly):
        piece["poly"] = int(k)
    return obj


def load_trajectory(path: Path) -> tuple[Trajectory, list[int] | None]:
    try:
        obj = json.loads(Path(path).read_text())
        traj = Trajectory.from_json(obj)
    except FileNotFoundError as e:
        raise CliError(f"trajectory file not found: {path}") from e
    except (KeyError, ValueError, TypeError) as e:
        raise CliError(f"cannot parse trajectory {path}: {e}") from e
    polys = [p.get("poly") for p in obj["pieces"]]
    return traj, (None if any(k is None for k in polys) else [int(k) for k in polys])


def load_corridor(path: Path) -> Corridor:
    try:
        return Corridor.from_json(json.loads(Path(path).read_text()))
    except FileNotFoundError as e:
        raise CliError(f"corridor file not found: {path}") from e
    except (KeyError, ValueError, TypeError) as e:
        raise CliError(f"cannot parse corridor {path}: {e}") from e


def _write(path: Path, text: str, written: list[str]) -> None:
    path.write_text(text)
    written.append(path.name)


# --- plan -----------------------------------------------------------------------

def build_spec(rc: Resolved, corridor: Corridor, seed: int) -> ProblemSpec:
    s_p, s_Q, g_p, g_Q = rc.endpoints()
    s = int(rc.raw["s"])
    if s not in (2, 3, 4):
        raise ConfigError("config key 's' must be 2, 3 or 4")
    return ProblemSpec(
        corridor=corridor,
        shape=rc.opt_shape(),
        start_p=s_p,
        goal_p=g_p,
        start_Q=s_Q,
        goal_Q=g_Q,
        limits=rc.limits(),
        weights=rc.weights(),
        s=s,
        d_piece=cfgmod._num(rc.raw, "d_piece"),
        lbfgs=rc.lbfgs(),
        attitude_jitter=cfgmod._num(rc.raw, "attitude_jitter"),
        seed=seed,
    )


def plan_pipeline(rc: Resolved, cloud: PointCloud, seed: int):
    """RRT, shortcut, corridor and solve; returns artifacts and stage timings."""
    rrt = rc.rrt(seed)
    s_p, _, g_p, _ = rc.endpoints()
    t0 = time.perf_counter()
    raw = rrt_search(cloud, s_p, g_p, rrt)
    t_rrt = time.perf_counter() - t0
    t0 = time.perf_counter()
    sfc = rc.sfc()
    path = shortcut(raw, cloud, rrt.radius, min(rrt.check_resolution, rrt.step))
    path = split_long_segments(path, sfc.max_seg_len)
    corridor = decompose(path, cloud, sfc)
    t_sfc = time.perf_counter() - t0
    spec = build_spec(rc, corridor, seed)
    alloc = allocate_pieces(corridor, spec.d_piece)
    traj, report = solve(spec, alloc)
    # the optimizer sees an inflated body; report the true body as well
    assignment = [corridor.polys[k] for k in alloc.piece_poly]
    report.violations["corridor_true_shape"] = sampled_violations(
        traj, spec.limits, assignment, rc.true_shape()
    )["corridor"]
    timings = {"t_rrt": t_rrt, "t_sfc": t_sfc, "t_opt": report.t_opt}
    return raw, corridor, alloc, traj, report, timings


def cmd_plan(args, rc: Resolved) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = int(rc.raw["rrt"]["seed"]) if args.seed is None else args.seed
    cloud = rc.cloud()
    try:
        raw, corridor, alloc, traj, report, timings = plan_pipeline(rc, cloud, seed)
    except NoPathError as e:
        logger.error("no path: %s (%d nodes)", e, e.n_nodes)
        print(dumps({"status": "no_path", "message": str(e)}), end="")
        return EXIT_NO_PATH
    except DecompositionError as e:
        logger.error("corridor generation failed: %s", e)
        print(dumps({"status": "no_corridor", "message": str(e)}), end="")
        return EXIT_NO_PATH
    written: list[str] = []
    _write(out / "path.json", dumps({"raw": raw.tolist(), "path": corridor.path.tolist()}), written)
    _write(out / "corridor.json", dumps(corridor.to_json()), written)
    _write(out / "trajectory.json", dumps(trajectory_to_json(traj, alloc.piece_poly)), written)
    manifest = {
        "config": None if args.config is None else str(args.config),
        "resolved": rc.raw,
        "seed": seed,
        "out": str(out),
        "timings": timings,
        "artifacts": written + ["report.json"],
    }
    _write(out / "report.json", dumps({"solve": report.to_json(), "manifest": manifest}), written)
    summary = {
        "status": "ok" if report.success else "solver_failure",
        "M": report.M,
        "N_iter": report.N_iter,
        "cost": report.cost,
        "reason": report.reason,
        "violations": report.violations,
        "timings": timings,
        "out": str(out),
    }
    print(dumps(summary), end="")
    if not report.success:
        logger.error("solver failed: %s", report.reason)
        return EXIT_SOLVER
    return EXIT_OK


# --- check ----------------------------------------------------------------------

def check_trajectory(
    traj: Trajectory,
    piece_poly: list[int],
    corridor: Corridor,
    cloud: PointCloud | None,
    shape: VehicleShape,
    limits: Limits,
    dt: float,
) -> dict:
    """Dense replay of the safety and kinodynamic requirements."""
    if len(piece_poly) != traj.M:
        raise CliError(f"trajectory has {traj.M} pieces but {len(piece_poly)} polytope indices")
    if max(piece_poly) >= len(corridor.polys) or min(piece_poly) < 0:
        raise CliError("trajectory references a polytope missing from the corridor")
    t = profile_times(traj.total_duration, dt)
    if t[-1] < traj.total_duration - 1e-12:
        t = np.append(t, traj.total_duration)
    z, zd, zdd = (traj.eval(t, k) for k in range(3))
    idx, _ = traj.locate(t)
    R = rotation.rotmat_from_rotvec(z[:, 3:])
    verts = z[:, None, :3] + np.einsum("nab,lb->nla", R, shape.vertices_body)

    per_piece = np.zeros(traj.M)
    for i in range(traj.M):
        sel = idx == i
        if np.any(sel):
            P = corridor.polys[piece_poly[i]]
            per_piece[i] = float(np.max(verts[sel] @ P.A.T - P.b))

    inside: set[int] = set()
    if cloud is not None and len(cloud.points):
        H = body_hull(shape)
        grid = cloud.index(max(shape.radius, 0.1))
        for n in range(len(t)):
            near = grid.query_ball(z[n, :3], shape.radius)
            if len(near) == 0:
                continue
            xb = (cloud.points[near] - z[n, :3]) @ R[n]
            hit = np.all(xb @ H.A.T - H.b < -1e-9, axis=1)
            inside.update(int(j) for j in np.asarray(near)[hit])

    v = np.linalg.norm(zd[:, :3], axis=1)
    a = np.linalg.norm(zdd[:, :3], axis=1)
    w = np.linalg.norm(rotation.angular_velocity(z[:, 3:], zd[:, 3:]), axis=1)
    return {
        "samples": len(t),
        "corridor_violation": float(max(per_piece.max(), 0.0)),
        "corridor_violation_per_piece": [float(max(x, 0.0)) for x in per_piece],
        "cloud_points_inside": len(inside),
        "v_ratio": float(v.max() / limits.v_max),
        "a_ratio": float(a.max() / limits.a_max),
        "omega_ratio": float(w.max() / limits.omega_max),
    }


def cmd_check(args, rc: Resolved) -> int:
    out = Path(args.out)
    traj_path = Path(args.traj) if args.traj else out / "trajectory.json"
    corr_path = Path(args.corridor) if args.corridor else out / "corridor.json"
    traj, piece_poly = load_trajectory(traj_path)
    if piece_poly is None:
        raise CliError("trajectory pieces carry no polytope index")
    corridor = load_corridor(corr_path)
    cloud = rc.cloud()
    if args.map:
        cloud = PointCloud(cfgmod.read_map(args.map), cloud.lo, cloud.hi)
    limits = rc.limits()
    if args.v_max is not None:
        limits = Limits(args.v_max, limits.a_max, limits.omega_max)
    chk = rc.raw["check"]
    dt = float(chk["dt"]) if args.dt is None else args.dt
    res = check_trajectory(traj, piece_poly, corridor, cloud, rc.true_shape(), limits, dt)
    slack = 1.0 + float(chk["limit_slack"])
    flags = {
        "corridor": res["corridor_violation"] <= float(chk["corridor_tol"]),
        "cloud": res["cloud_points_inside"] == 0,
        "v": res["v_ratio"] <= slack,
        "a": res["a_ratio"] <= slack,
        "omega": res["omega_ratio"] <= slack,
    }
    res["pass"] = flags
    res["ok"] = all(flags.values())
    res["dt"] = dt
    print(dumps(res), end="")
    for k, ok in flags.items():
        if not ok:
            logger.warning("check failed: %s", k)
    return EXIT_OK if res["ok"] else EXIT_VIOLATION


# --- profile / simulate -------------------------------------------------------------

def cmd_profile(args, rc: Resolved) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    traj, _ = load_trajectory(Path(args.traj) if args.traj else out / "trajectory.json")
    dt = 0.01 if args.dt is None else args.dt
    prof = sample_profile(traj, dt, rc.inertia())
    dest = out / "profile.csv"
    write_profile_csv(prof, dest)
    print(
        dumps(
            {
                "file": str(dest),
                "rows": int(len(prof["t"])),
                "max_vnorm": float(prof["vnorm"].max()),
                "max_anorm": float(prof["anorm"].max()),
                "max_wnorm": float(prof["wnorm"].max()),
            }
        ),
        end="",
    )
    return EXIT_OK


def cmd_simulate(args, rc: Resolved) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    traj, _ = load_trajectory(Path(args.traj) if args.traj else out / "trajectory.json")
    gains = rc.gains()
    if args.gains:
        try:
            gains = Gains.from_json({**gains.to_json(), **json.loads(Path(args.gains).read_text())})
        except (OSError, json.JSONDecodeError, KeyError, ValueError, TypeError) as e:
            raise CliError(f"cannot read gains file {args.gains}: {e}") from e
    dt = 1e-3 if args.dt is None else args.dt
    dest = out / "track.csv"
    try:
        log = track(traj, gains, rc.inertia(), dt)
    except TrackingDivergence as e:
        e.log.write_csv(dest)
        logger.error("tracking diverged: %s", e)
        print(dumps({"status": "diverged", "file": str(dest), "message": str(e)}), end="")
        return EXIT_DIVERGED
    log.write_csv(dest)
    print(
        dumps(
            {
                "status": "ok",
                "file": str(dest),
                "rms_position_error": log.rms_position_error,
                "max_attitude_error_deg": float(np.degrees(log.max_attitude_error)),
            }
        ),
        end="",
    )
    return EXIT_OK


# --- bench ----------------------------------------------------------------------

BENCH_HEADER = ["M_target", "rep", "seed", "M", "N_iter", "n_eval", "t_rrt", "t_sfc", "t_opt", "t_per", "reason", "status"]


def bench_row(rc: Resolved, m_target: int, rep: int) -> dict:
    seed = 1000 * m_target + rep
    d_piece = cfgmod._num(rc.raw, "d_piece")
    cloud, start, goal = random_boxes(m_target * d_piece, seed)
    raw = json.loads(json.dumps(rc.raw))
    raw["start"]["p"], raw["goal"]["p"] = start.tolist(), goal.tolist()
    if raw["rrt"]["radius"] is None:
        # random boxes leave gaps narrower than the body; search with full-body
        # clearance so every row is a feasible whole-body problem
        raw["rrt"]["radius"] = float(np.max(rc.opt_shape().half_extents))
    rcb = Resolved(raw, rc.base_dir)
    row = {"M_target": m_target, "rep": rep, "seed": seed}
    try:
        _, _, _, _, report, tm = plan_pipeline(rcb, cloud, seed)
    except (NoPathError, DecompositionError) as e:
        logger.warning("bench M=%d rep=%d failed: %s", m_target, rep, e)
        return {**row, "M": 0, "N_iter": 0, "n_eval": 0, "t_rrt": 0.0, "t_sfc": 0.0, "t_opt": 0.0,
                "t_per": float("nan"), "reason": type(e).__name__, "status": "failed"}
    return {
        **row,
        "M": report.M,
        "N_iter": report.N_iter,
        "n_eval": report.n_eval,
        "t_rrt": tm["t_rrt"],
        "t_sfc": tm["t_sfc"],
        "t_opt": report.t_opt,
        "t_per": report.t_opt / (report.M * max(report.N_iter, 1)),
        "reason": report.reason,
        "status": "ok" if report.success else "solver_failure",
    }


def bench_summary(rows: list[dict]) -> dict:
    per_m = {}
    for m in sorted({r["M_target"] for r in rows}):
        vals = [r["t_per"] for r in rows if r["M_target"] == m and r["status"] == "ok"]
        if vals:
            per_m[str(m)] = float(np.mean(vals))
    means = list(per_m.values())
    spread = max(means) / min(means) if means else float("nan")
    return {"mean_t_per": per_m, "spread": spread, "failed": sum(r["status"] != "ok" for r in rows)}


def cmd_bench(args, rc: Resolved) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        m_list = [int(x) for x in args.m_list.split(",") if x.strip()]
    except ValueError as e:
        raise CliError(f"--m-list must be comma-separated integers: {e}") from e
    rows = []
    for m in m_list:
        for rep in range(args.reps):
            row = bench_row(rc, m, rep)
            logger.info("bench %s", row)
            rows.append(row)
    dest = out / "bench.csv"
    with open(dest, "w", newline="") as fh:
        w = csv.DictWriter(fh, BENCH_HEADER, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})
    print(dumps({"file": str(dest), **bench_summary(rows)}), end="")
    return EXIT_OK


# --- entry ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration (JSON)")
    common.add_argument("--out", default="out", help="artifact directory")
    common.add_argument("--seed", type=int, help="override the random seed")
    common.add_argument("--dt", type=float, help="sampling / integration step in seconds")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="omavtraj", description=__doc__.splitlines()[0])
    p.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    sub = p.add_subparsers(dest="command")
    sub.add_parser("plan", parents=[common], help="path search, corridor and trajectory optimization")
    c = sub.add_parser("check", parents=[common], help="dense verification of a planned trajectory")
    c.add_argument("--traj")
    c.add_argument("--corridor")
    c.add_argument("--map", help="point cloud CSV (defaults to the config's map_file)")
    c.add_argument("--v-max", type=float, help="override the velocity limit being checked")
    pr = sub.add_parser("profile", parents=[common], help="state and wrench profile CSV")
    pr.add_argument("--traj")
    s = sub.add_parser("simulate", parents=[common], help="closed-loop tracking simulation")
    s.add_argument("--traj")
    s.add_argument("--gains", help="JSON file with gain overrides")
    b = sub.add_parser("bench", parents=[common], help="timing sweep on random box maps")
    b.add_argument("--m-list", default="5,10,20,40")
    b.add_argument("--reps", type=int, default=10)
    return p


COMMANDS = {"plan": cmd_plan, "check": cmd_check, "profile": cmd_profile, "simulate": cmd_simulate, "bench": cmd_bench}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        print(dumps(cfgmod.DEFAULTS), end="")
        return EXIT_OK
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        raw, base = cfgmod.load(args.config)
        return COMMANDS[args.command](args, Resolved(raw, base))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
