"""Command-line front end: analyze, spectrum, synthesize, simulate, verify.

Exit status 0 on success, 1 on domain errors (including a failed verify),
2 on malformed input.
"""

import argparse
import csv
import io as _io
import sys

import numpy as np

from . import __version__
from .analysis import RANK_TOL, classify, seed_from_env
from .errors import DelaySteerError, InputError
from .io import dumps, load_json, load_state, load_system
from .simulator import DEFAULT_DT, Grid, Trajectory, simulate, verify_null
from .spectral import BOUNDARY_TOL, RESIDUAL_TOL, Window, branch_thresholds, find_eigenvalues, system_seeds
from .synthesis import REALNESS_TOL, SVD_CUTOFF, ControlSignal, synthesize


def _header(args, **extra):
    head = {
        "version": __version__,
        "command": args.command,
        "seed": seed_from_env(),
        "tolerances": {
            "rank": RANK_TOL, "boundary": BOUNDARY_TOL, "residual": RESIDUAL_TOL,
            "svd_cutoff": SVD_CUTOFF, "realness": REALNESS_TOL,
        },
        "window": getattr(args, "window", None),
        "truncation": getattr(args, "truncation", None),
        "grid": {"dt": getattr(args, "dt", None)},
    }
    head.update(extra)
    return head


def _emit(args, text):
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _window(args, default):
    return Window.parse(args.window) if args.window else default


def cmd_analyze(args):
    system = load_system(args.system)
    window = _window(args, Window(-3.0, 3.0, -3.0, 3.0))
    report = classify(system, window)
    out = _header(args, window=window.as_list())
    out["report"] = report.to_dict()
    _emit(args, dumps(out))
    return 0


def cmd_spectrum(args):
    system = load_system(args.system)
    window = _window(args, Window(-3.0, 3.0, -3.0, 3.0))
    seeds = system_seeds(system, window)
    eigs = find_eigenvalues(system, window, seeds=seeds)
    if args.format == "csv":
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re", "im", "multiplicity", "branch", "index", "residual"])
        for e in eigs:
            d = e.to_dict()
            w.writerow([repr(d["re"]), repr(d["im"]), d["multiplicity"], d["branch"], d["index"], repr(d["residual"])])
        _emit(args, buf.getvalue())
        return 0
    out = _header(args, window=window.as_list())
    out["eigenvalues"] = [e.to_dict() for e in eigs]
    out["count"] = sum(e.multiplicity for e in eigs)
    out["flagged_cells"] = eigs.flagged_cells
    if seeds is not None:
        out["seed_radius"] = seeds.r0
        out["membership_threshold"] = {str(k): v for k, v in branch_thresholds(eigs, seeds, window).items()}
    _emit(args, dumps(out))
    return 0


def _need(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise InputError(f"--{name} is required for {args.command}")


def cmd_synthesize(args):
    _need(args, "state", "horizon")
    system = load_system(args.system)
    dt = args.dt or DEFAULT_DT
    x0 = load_state(args.state, system.n, grid_points=int(round(1 / dt)) + 1)
    ctrl = synthesize(system, x0, args.horizon, truncation=args.truncation,
                      method=args.method, feedback=args.feedback)
    if args.format == "csv":
        t, u = ctrl.samples(dt)
        buf = _io.StringIO()
        buf.write("t,u\n")
        for ti, ui in zip(t, u):
            buf.write(f"{float(ti)!r},{float(ui)!r}\n")
        _emit(args, buf.getvalue())
        if args.out:
            with open(args.out + ".json", "w") as fh:
                fh.write(dumps({**_header(args, window=ctrl.window), "control": ctrl.to_dict()}))
        return 0
    _emit(args, dumps({**_header(args, window=ctrl.window), "control": ctrl.to_dict()}))
    return 0


def cmd_simulate(args):
    _need(args, "state")
    system = load_system(args.system)
    dt = args.dt or DEFAULT_DT
    x0 = load_state(args.state, system.n, grid_points=int(round(1 / dt)) + 1)
    control = None
    if args.control:
        data = load_json(args.control)
        control = ControlSignal.from_dict(data.get("control", data))
    horizon = args.horizon
    if horizon is None:
        if control is None:
            raise InputError("--horizon is required without --control")
        horizon = control.horizon
    traj = simulate(system, x0, control, grid=Grid(dt, float(horizon)), smooth_history=args.smooth_history)
    if args.format == "csv":
        _emit(args, traj.to_csv())
        return 0
    summary = {"grid": {"dt": dt, "horizon": float(horizon)}}
    T = control.horizon if control is not None else None
    if T is not None and horizon >= T:
        ok, res = verify_null(traj, T, args.tol)
        summary.update({"terminal_residual": res, "T": T, "tol": args.tol, "null": ok})
    out = _header(args, grid={"dt": dt, "horizon": float(horizon)})
    out["summary"] = summary
    out["trajectory"] = {"t": traj.t.tolist(), "z": traj.z.tolist(), "u": traj.u.tolist()}
    _emit(args, dumps(out))
    return 0


def _load_trajectory(path):
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        data = load_json(path)["trajectory"]
        t, z, u = np.array(data["t"]), np.array(data["z"]), np.array(data["u"])
    else:
        rows = np.loadtxt(_io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
        t, z = rows[:, 0], rows[:, 1:-1]
        u = rows[t >= -1e-12, -1]
    dt = float(t[1] - t[0])
    per_unit = round(1 / dt)
    return Trajectory(Grid(1.0 / per_unit, round(t[-1] * per_unit) / per_unit), t, z, u)


def cmd_verify(args):
    _need(args, "trajectory", "horizon")
    try:
        traj = _load_trajectory(args.trajectory)
    except OSError as exc:
        raise InputError(f"cannot read {args.trajectory}: {exc.strerror}") from exc
    except (KeyError, ValueError) as exc:
        raise InputError(f"bad trajectory file: {exc}") from exc
    ok, res = verify_null(traj, args.horizon, args.tol)
    out = _header(args, grid={"dt": traj.grid.dt, "horizon": traj.grid.horizon})
    out["verify"] = {"null": ok, "residual": res, "T": args.horizon, "tol": args.tol}
    _emit(args, dumps(out))
    return 0 if ok else 1


def build_parser():
    p = argparse.ArgumentParser(prog="delaysteer", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, state=False):
        sp.add_argument("--system", required=True)
        if state:
            sp.add_argument("--state")
        sp.add_argument("--out")
        sp.add_argument("--format", choices=("json", "csv"), default="json")

    a = sub.add_parser("analyze", help="classify controllability properties")
    common(a)
    a.add_argument("--window")

    s = sub.add_parser("spectrum", help="eigenvalues in a window")
    common(s)
    s.add_argument("--window")

    y = sub.add_parser("synthesize", help="steering control for an initial state")
    common(y, state=True)
    y.add_argument("--horizon", type=float)
    y.add_argument("--truncation", type=int, default=21)
    y.add_argument("--dt", type=float, default=DEFAULT_DT)
    y.add_argument("--method", choices=("auto", "series", "min_norm"), default="auto")
    y.add_argument("--feedback", choices=("none", "canonical", "perturb"), default="none")

    m = sub.add_parser("simulate", help="integrate the system")
    common(m, state=True)
    m.add_argument("--control")
    m.add_argument("--horizon", type=float)
    m.add_argument("--dt", type=float, default=DEFAULT_DT)
    m.add_argument("--tol", type=float, default=1e-3)
    m.add_argument("--smooth-history", action="store_true")

    v = sub.add_parser("verify", help="check that a trajectory vanishes on [T-1, T]")
    v.add_argument("--trajectory", required=True)
    v.add_argument("--horizon", type=float)
    v.add_argument("--tol", type=float, default=1e-3)
    v.add_argument("--out")
    return p


COMMANDS = {
    "analyze": cmd_analyze, "spectrum": cmd_spectrum, "synthesize": cmd_synthesize,
    "simulate": cmd_simulate, "verify": cmd_verify,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DelaySteerError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
