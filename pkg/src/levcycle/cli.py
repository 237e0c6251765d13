"""Command-line interface: config ingestion, dispatch, CSV/JSON emission.

Subcommands: skeleton, map1d, bifurcate, lyapunov, boundaries, contour,
perturb, simulate, ensemble. Every run writes its artifact plus a
`<output>.config.json` echo that re-ingests to an identical run. Floats
are serialized with 17 significant digits so reruns are byte-identical.

Exit codes: 0 success, 1 configuration error, 2 runtime error. Failures
print one machine-readable JSON object to stdout.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import analysis, montecarlo
from .errors import ConfigError, LevcycleError
from .params import ModelParams
from .skeleton import (MapKind, consistent_start, fixed_point, igarch_step,
                       iterate_skeleton, map_1d)

#: run-config keys, matching the baseline parameter table's notation
MODEL_KEYS = ("M", "N", "nim", "gamma", "sigma_eps", "sigma_f_ratio",
              "A0", "E0", "c", "alpha", "omega", "n")
_INT_KEYS = {"M", "N", "n"}

KIND_NAMES = {"skeleton3d": MapKind.SKELETON3D, "multivariate": MapKind.SKELETON3D,
              "reduced": MapKind.REDUCED1D, "reduced1d": MapKind.REDUCED1D,
              "igarch": MapKind.IGARCH}


def fmt(x) -> str:
    """17-significant-digit serialization used in every artifact."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# configuration


def default_model_config() -> dict:
    return load_config(resources.files("levcycle") / "table1.cfg")


def load_config(path) -> dict:
    """Read a [model]-section key=value file (or a JSON echo of one)."""
    text = Path(str(path)).read_text() if not hasattr(path, "read_text") else path.read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        data = json.loads(text)
        model = data.get("model", data)
    else:
        parser = configparser.ConfigParser()
        parser.optionxform = str     # N (banks) and n (rebalancings) differ
        parser.read_string(text)
        if "model" not in parser:
            raise ConfigError("config file must contain a [model] section")
        unknown_sections = set(parser.sections()) - {"model"}
        if unknown_sections:
            raise ConfigError(f"unknown sections: {sorted(unknown_sections)}")
        model = dict(parser["model"])
    unknown = set(model) - set(MODEL_KEYS)
    if unknown:
        raise ConfigError(f"unknown model keys: {sorted(unknown)}")
    out = {}
    for key, raw in model.items():
        try:
            out[key] = int(raw) if key in _INT_KEYS else float(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return out


def build_params(cfg: dict) -> ModelParams:
    sigma_eps = cfg.get("sigma_eps", 0.03)
    ratio = cfg.get("sigma_f_ratio", 0.1)
    try:
        return ModelParams(
            M=cfg.get("M", 60), N=cfg.get("N", 30), nim=cfg.get("nim", 0.08),
            gamma=cfg.get("gamma", 100.0),
            sigma_eps_slow=sigma_eps**2,
            sigma_f_slow=(ratio * sigma_eps) ** 2,
            c=cfg.get("c", 0.1), alpha=cfg.get("alpha", 1.64),
            omega=cfg.get("omega", 0.5), n=cfg.get("n", 25),
            A0=cfg.get("A0", 100.0), E0=cfg.get("E0", 10.0))
    except ConfigError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-tag as config failure
        raise ConfigError(str(exc)) from exc


def resolve_config(args) -> dict:
    cfg = default_model_config()
    if getattr(args, "config", None):
        cfg.update(load_config(Path(args.config)))
    for key in MODEL_KEYS:
        value = getattr(args, f"model_{key}", None)
        if value is not None:
            cfg[key] = int(value) if key in _INT_KEYS else float(value)
    return cfg


def write_config_echo(out_path: Path, cfg: dict, extra: dict) -> None:
    payload = {"model": {k: cfg[k] for k in MODEL_KEYS if k in cfg}, "run": extra}
    echo = out_path.with_suffix(out_path.suffix + ".config.json")
    echo.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])


# ---------------------------------------------------------------------------
# subcommand implementations


def cmd_skeleton(args, p: ModelParams) -> list[tuple]:
    if args.fixed_point:
        s = fixed_point(MapKind.SKELETON3D, p)
        return [(0, s.lam, s.sigma_d, s.sigma_u, s.m, "")]
    states, events = iterate_skeleton(consistent_start(p), p, args.T, clamp=args.clamp)
    exits = {t: name for t, name in events}
    return [(t, s.lam, s.sigma_d, s.sigma_u, s.m, exits.get(t - 1, ""))
            for t, s in enumerate(states)]


def cmd_map1d(args, p: ModelParams) -> list[tuple]:
    lams = np.linspace(args.lam_from, args.lam_to, args.steps)
    return [(lam, map_1d(lam, p)) for lam in lams]


def cmd_bifurcate(args, p: ModelParams) -> list[tuple]:
    kind = KIND_NAMES[args.kind]
    grid = np.linspace(args.start, args.stop, args.steps)
    diagram = analysis.bifurcation_sweep(
        kind, args.param, grid, p, transient=args.transient,
        record=args.record, strict=args.strict, clamp=args.clamp)
    rows = []
    for value, samples, label, exited in zip(
            diagram.grid, diagram.samples, diagram.labels, diagram.exits):
        if samples.size == 0:
            rows.append((value, math.nan, label, int(exited)))
        for s in samples:
            rows.append((value, s, label, int(exited)))
    return rows


def cmd_lyapunov(args, p: ModelParams) -> list[tuple]:
    if args.validate_logistic:
        exponent = analysis.lyapunov_logistic(iterations=args.iterations)
        print(f"logistic-map Lyapunov exponent: {exponent:.6f} (ln 2 = {math.log(2.0):.6f})")
        return [("logistic", exponent, 0)]
    kind = KIND_NAMES[args.kind]
    rows = []
    for omega in np.linspace(args.start, args.stop, args.steps):
        pv = p.with_(omega=float(omega))
        try:
            rows.append((omega, analysis.lyapunov(kind, pv, iterations=args.iterations), 0))
        except LevcycleError:
            rows.append((omega, math.nan, 1))
    return rows


def cmd_boundaries(args, p: ModelParams) -> list[tuple]:
    kind = KIND_NAMES[args.kind]
    grid = np.linspace(args.start, args.stop, args.steps)
    rows = []
    for value in grid:
        pv = analysis._set_param(p, args.param, float(value))
        try:
            omega2 = analysis.find_omega2(kind, pv)
        except LevcycleError:
            omega2 = math.nan
        try:
            omega_star = analysis.find_omega_star(kind, pv)
        except LevcycleError:
            omega_star = math.nan
        rows.append((value, omega2, omega_star))
    return rows


def cmd_contour(args, p: ModelParams) -> list[tuple]:
    kind = KIND_NAMES[args.kind]
    xs = np.linspace(args.x_from, args.x_to, args.x_steps)
    ys = np.linspace(args.y_from, args.y_to, args.y_steps)
    rows = []
    for x in xs:
        px = analysis._set_param(p, args.x_param, float(x))
        for y in ys:
            pxy = analysis._set_param(px, args.y_param, float(y))
            value = math.nan
            try:
                if args.quantity == "omega_star":
                    value = analysis.find_omega_star(kind, pxy)
                elif args.quantity == "omega2":
                    value = analysis.find_omega2(kind, pxy)
                elif args.quantity == "cv":
                    summary = montecarlo.ensemble(
                        kind, pxy, args.T, range(args.seeds), workers=args.workers)
                    value = float(np.median(summary.cv))
            except LevcycleError:
                value = math.nan
            rows.append((x, y, value))
    return rows


def cmd_perturb(args, p: ModelParams) -> list[tuple]:
    kind = KIND_NAMES[args.kind]
    rows = []
    for n in args.n_values:
        env = analysis.perturbation_envelope(int(n), p, kind=kind)
        rows.append((int(n), env.delta_sigma_eps2, env.delta_sigma_f2, env.delta_lambda))
    return rows


def cmd_simulate(args, p: ModelParams) -> list[tuple]:
    kind = KIND_NAMES[args.kind]
    traj = montecarlo.run_stochastic(kind, p, args.T, args.seed)
    events = {t: name for t, name, _ in traj.events}
    rows = []
    for t in range(traj.T):
        rows.append((t, traj.lam[t],
                     traj.sigma_d_exp[t] if traj.sigma_d_exp is not None else math.nan,
                     traj.sigma_u_exp[t] if traj.sigma_u_exp is not None else math.nan,
                     traj.sigma2_exp[t] if traj.sigma2_exp is not None else math.nan,
                     traj.A[t], traj.E[t], traj.L[t], events.get(t, "")))
    return rows


def cmd_ensemble(args, p: ModelParams) -> dict:
    kind = KIND_NAMES[args.kind]
    summary = montecarlo.ensemble(kind, p, args.T, range(args.seeds),
                                  burn_in=args.burn_in, workers=args.workers)
    return {
        "kind": args.kind,
        "T": summary.T,
        "burn_in": summary.burn_in,
        "seeds": summary.seeds,
        "delta_lambda": [fmt(v) for v in summary.delta_lambda],
        "cv": [fmt(v) for v in summary.cv],
        "delta_lambda_mean": fmt(summary.delta_lambda_mean),
        "delta_lambda_std": fmt(summary.delta_lambda_std),
        "cv_mean": fmt(summary.cv_mean),
        "cv_std": fmt(summary.cv_std),
        "failed_seeds": summary.failed_seeds,
        "n_events": summary.n_events,
    }


CSV_HEADERS = {
    "skeleton": ["t", "lambda", "sigma_d", "sigma_u", "m", "domain_exit"],
    "map1d": ["lambda", "f_lambda"],
    "bifurcate": None,     # first column named after the swept parameter
    "lyapunov": ["omega", "lyapunov", "domain_exit"],
    "boundaries": None,
    "contour": None,
    "perturb": ["n", "delta_sigma_eps2", "delta_sigma_f2", "delta_lambda"],
    "simulate": ["t", "lambda", "sigma_d", "sigma_u", "sigma2", "A", "E", "L", "event"],
}


def _add_model_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="key=value config file or a JSON echo")
    for key in MODEL_KEYS:
        sub.add_argument(f"--{key}", dest=f"model_{key}", type=float, default=None,
                         help=f"override model.{key}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="levcycle",
        description="Leverage-cycle dynamics: deterministic maps, stability "
                    "analytics and stochastic slow-fast simulation.")
    subs = parser.add_subparsers(dest="command", required=True)

    def sub(name, **kw):
        s = subs.add_parser(name, **kw)
        _add_model_flags(s)
        s.add_argument("--output", "-o", default=None, help="artifact path")
        return s

    s = sub("skeleton", help="iterate the deterministic 3D map")
    s.add_argument("--T", type=int, default=200)
    s.add_argument("--clamp", action="store_true")
    s.add_argument("--fixed-point", action="store_true",
                   help="emit only the self-consistent state")

    s = sub("map1d", help="tabulate the 1D leverage map")
    s.add_argument("--lam-from", type=float, default=1.0)
    s.add_argument("--lam-to", type=float, default=None)
    s.add_argument("--steps", type=int, default=200)

    s = sub("bifurcate", help="attractor samples over a parameter grid")
    s.add_argument("--kind", choices=sorted(KIND_NAMES), default="skeleton3d")
    s.add_argument("--param", required=True,
                   choices=["omega", "alpha", "c", "M", "Sigma_eps"])
    s.add_argument("--from", dest="start", type=float, required=True)
    s.add_argument("--to", dest="stop", type=float, required=True)
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--transient", type=int, default=analysis.TRANSIENT)
    s.add_argument("--record", type=int, default=analysis.RECORD)
    s.add_argument("--strict", action="store_true", help="10x transient")
    s.add_argument("--clamp", action="store_true")

    s = sub("lyapunov", help="largest Lyapunov exponent over a memory grid")
    s.add_argument("--kind", choices=sorted(KIND_NAMES), default="skeleton3d")
    s.add_argument("--from", dest="start", type=float, default=0.02)
    s.add_argument("--to", dest="stop", type=float, default=0.98)
    s.add_argument("--steps", type=int, default=40)
    s.add_argument("--iterations", type=int, default=4000)
    s.add_argument("--validate-logistic", action="store_true",
                   help="run the logistic-map oracle instead")

    s = sub("boundaries", help="omega2 / omega_star over a parameter grid")
    s.add_argument("--kind", choices=sorted(KIND_NAMES), default="skeleton3d")
    s.add_argument("--param", required=True,
                   choices=["alpha", "c", "M", "Sigma_eps", "gamma"])
    s.add_argument("--from", dest="start", type=float, required=True)
    s.add_argument("--to", dest="stop", type=float, required=True)
    s.add_argument("--steps", type=int, default=8)

    s = sub("contour", help="2D grid of omega_star / omega2 / cv")
    s.add_argument("--kind", choices=sorted(KIND_NAMES), default="skeleton3d")
    s.add_argument("--quantity", choices=["omega_star", "omega2", "cv"],
                   required=True)
    s.add_argument("--x-param", required=True)
    s.add_argument("--x-from", type=float, required=True)
    s.add_argument("--x-to", type=float, required=True)
    s.add_argument("--x-steps", type=int, default=8)
    s.add_argument("--y-param", required=True)
    s.add_argument("--y-from", type=float, required=True)
    s.add_argument("--y-to", type=float, required=True)
    s.add_argument("--y-steps", type=int, default=8)
    s.add_argument("--T", type=int, default=1000)
    s.add_argument("--seeds", type=int, default=50)
    s.add_argument("--workers", type=int, default=None)

    s = sub("perturb", help="finite-n leverage envelope")
    s.add_argument("--kind", choices=sorted(KIND_NAMES), default="reduced")
    s.add_argument("--n-values", dest="n_values", type=int, nargs="+",
                   required=True, help="window sizes to evaluate")

    s = sub("simulate", help="one stochastic trajectory")
    s.add_argument("--kind", choices=sorted(KIND_NAMES), default="reduced")
    s.add_argument("--T", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)

    s = sub("ensemble", help="amplitude statistics across seeds")
    s.add_argument("--kind", choices=sorted(KIND_NAMES), default="reduced")
    s.add_argument("--T", type=int, default=2000)
    s.add_argument("--seeds", type=int, default=50)
    s.add_argument("--burn-in", type=int, default=None)
    s.add_argument("--workers", type=int, default=None)
    return parser


def run_command(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
        p = build_params(cfg)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}))
        return 1
    try:
        if args.command == "map1d" and args.lam_to is None:
            args.lam_to = p.lambda_max - 1e-6
        out = Path(args.output) if args.output else Path(f"levcycle_{args.command}.csv")
        run_echo = {k: v for k, v in vars(args).items()
                    if k not in ("config", "output", "command")
                    and not k.startswith("model_") and v is not None}
        run_echo["command"] = args.command

        if args.command == "ensemble":
            payload = cmd_ensemble(args, p)
            out = out if out.suffix == ".json" else out.with_suffix(".json")
            out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        else:
            rows = {"skeleton": cmd_skeleton, "map1d": cmd_map1d,
                    "bifurcate": cmd_bifurcate, "lyapunov": cmd_lyapunov,
                    "boundaries": cmd_boundaries, "contour": cmd_contour,
                    "perturb": cmd_perturb, "simulate": cmd_simulate,
                    }[args.command](args, p)
            header = CSV_HEADERS.get(args.command)
            if args.command == "bifurcate":
                header = [args.param, "lambda_sample", "attractor_label", "domain_exit"]
            elif args.command == "boundaries":
                header = [args.param, "omega2", "omega_star"]
            elif args.command == "contour":
                header = [args.x_param, args.y_param, args.quantity]
            write_csv(out, header, rows)
        write_config_echo(out, cfg, run_echo)
        print(json.dumps({"status": "ok", "output": str(out)}))
        return 0
    except LevcycleError as exc:
        print(json.dumps({"error": "domain", "message": str(exc)}))
        return 2
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}))
        return 2


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
