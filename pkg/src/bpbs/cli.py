"""Command-line entry point: ``bpbs fit``, ``bpbs simulate``, ``bpbs summarize``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from . import __version__, baselines, simbench
from .model import ModelConfig
from .posterior import curve_summary, derivative_summary, model_size_summary
from .sampler import PosteriorDraws

log = logging.getLogger("bpbs")

DRAWS_MAGIC = "bpbs-draws"
DRAWS_VERSION = 1


class CLIError(Exception):
    pass


# ---------------------------------------------------------------- config files


def _convert(name: str, raw: str, typ):
    raw = raw.strip()
    if typ is int:
        if raw.lower() in ("none", ""):
            return None
        return int(raw)
    return float(raw)


def read_config_file(path) -> dict:
    """Parse flat ``key = value`` lines (``#`` comments) into ModelConfig overrides."""
    types = ModelConfig.field_types()
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CLIError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in types:
            raise CLIError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            out[key] = _convert(key, value, types[key])
        except ValueError:
            raise CLIError(f"{path}:{lineno}: field {key!r}: cannot parse {value!r}") from None
    return out


def _add_config_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("model configuration (override --config)")
    for f in fields(ModelConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name == "seed":
            continue
        typ = int if f.name == "J_max" else type(f.default)
        g.add_argument(flag, dest=f"cfg_{f.name}", type=typ, default=None)
    p.add_argument("--config", type=Path, help="flat key = value configuration file")
    p.add_argument("--seed", type=int, default=None, help="base seed (env BPBS_SEED if unset)")


def build_config(args, **base) -> ModelConfig:
    values = dict(base)
    if args.config is not None:
        values.update(read_config_file(args.config))
    env = os.environ.get("BPBS_SEED")
    if env is not None:
        try:
            values["seed"] = int(env)
        except ValueError:
            raise CLIError(f"BPBS_SEED must be an integer, got {env!r}") from None
    for f in fields(ModelConfig):
        v = getattr(args, f"cfg_{f.name}", None)
        if v is not None:
            values[f.name] = v
    if args.seed is not None:
        values["seed"] = args.seed
    try:
        return ModelConfig(**values)
    except (TypeError, ValueError) as exc:
        raise CLIError(f"invalid configuration: {exc}") from None


# ---------------------------------------------------------------- CSV / draws I/O


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            values = [r[h] for h in header] if isinstance(r, dict) else r
            w.writerow([_fmt(v) for v in values])


def write_draws(path: Path, draws: PosteriorDraws, method: str) -> None:
    lines = [f"{DRAWS_MAGIC} {DRAWS_VERSION}", f"degree {draws.degree}", f"method {method}",
             f"accepted {draws.accepted} proposed {draws.proposed}",
             "x " + " ".join(repr(float(v)) for v in draws.x),
             f"snapshots {len(draws)}"]
    for i in range(len(draws)):
        vals = [draws.sigma2[i], draws.lam[i], draws.tau[i], draws.theta1[i], *draws.theta[i]]
        lines.append(f"{int(draws.J[i])} " + " ".join(repr(float(v)) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_draws(path) -> tuple[PosteriorDraws, str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    head = lines[0].split() if lines else []
    if len(head) != 2 or head[0] != DRAWS_MAGIC:
        raise CLIError(f"{path}: not a draws file")
    if head[1] != str(DRAWS_VERSION):
        raise CLIError(f"{path}: draws file version {head[1]} is not supported (expected {DRAWS_VERSION})")
    try:
        degree = int(lines[1].split()[1])
        method = lines[2].split()[1]
        acc = lines[3].split()
        x = np.array([float(v) for v in lines[4].split()[1:]])
        m = int(lines[5].split()[1])
        J, s2, lam, tau, t1, th = [], [], [], [], [], []
        for k, line in enumerate(lines[6:6 + m], 7):
            parts = line.split()
            j = int(parts[0])
            if len(parts) != j + 4:
                raise CLIError(f"{path}:{k}: row length {len(parts)} does not match J={j}")
            vals = [float(v) for v in parts[1:]]
            J.append(j)
            s2.append(vals[0])
            lam.append(vals[1])
            tau.append(vals[2])
            t1.append(vals[3])
            th.append(np.array(vals[4:]))
    except (IndexError, ValueError) as exc:
        raise CLIError(f"{path}: malformed draws file ({exc})") from None
    if len(J) != m:
        raise CLIError(f"{path}: expected {m} snapshots, found {len(J)}")
    draws = PosteriorDraws(x=x, degree=degree, J=np.array(J, dtype=int), sigma2=np.array(s2),
                           lam=np.array(lam), tau=np.array(tau), theta1=np.array(t1), theta=th,
                           accepted=int(acc[1]), proposed=int(acc[3]))
    return draws, method


def write_summaries(out: Path, draws: PosteriorDraws, grid, level: float) -> None:
    cs = curve_summary(draws, grid, level)
    write_csv(out / "curve.csv", ["x", "mean", "lower", "upper"],
              zip(cs.eval_grid, cs.mean, cs.lower, cs.upper))
    d1 = derivative_summary(draws, grid, 1, level)
    d2 = derivative_summary(draws, grid, 2, level)
    write_csv(out / "derivatives.csv",
              ["x", "d1_mean", "d1_lower", "d1_upper", "d2_mean", "d2_lower", "d2_upper"],
              zip(grid, d1.mean, d1.lower, d1.upper, d2.mean, d2.lower, d2.upper))
    mean_J, hist = model_size_summary(draws)
    write_csv(out / "model_size.csv", ["J", "probability"], sorted(hist.items()))


def _grid(args) -> np.ndarray:
    if getattr(args, "grid", None):
        try:
            g = np.array([float(v) for v in args.grid.split(",")])
        except ValueError:
            raise CLIError(f"cannot parse --grid {args.grid!r}") from None
        if g.min() < 0 or g.max() > 1:
            raise CLIError("--grid values must lie in [0, 1]")
        return g
    if args.grid_size < 2:
        raise CLIError("--grid-size must be at least 2")
    return np.linspace(0.0, 1.0, args.grid_size)


def _level(args) -> float:
    if not 0.0 < args.level < 1.0:
        raise CLIError("--level must lie in (0, 1)")
    return args.level


# ---------------------------------------------------------------- fit


def _read_columns(path: Path, xcol: str, ycol: str):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise CLIError(f"{path}: empty file")
        for c in (xcol, ycol):
            if c not in reader.fieldnames:
                raise CLIError(f"{path}: missing column {c!r} (have {', '.join(reader.fieldnames)})")
        xs, ys = [], []
        for lineno, row in enumerate(reader, 2):
            try:
                xs.append(float(row[xcol]))
                ys.append(float(row[ycol]))
            except (TypeError, ValueError):
                raise CLIError(f"{path}:{lineno}: non-numeric value in {xcol!r} or {ycol!r}") from None
    x, y = np.array(xs), np.array(ys)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise CLIError(f"{path}: non-finite values")
    return x, y


def cmd_fit(args) -> int:
    method = args.method.lower()
    if method not in baselines.METHOD_TAGS:
        raise CLIError(f"unknown method {args.method!r}; valid tags: {', '.join(baselines.METHOD_TAGS)}")
    level = _level(args)
    grid = _grid(args)
    cfg = build_config(args)
    x_raw, y = _read_columns(args.input, args.x, args.y)
    n = len(y)
    if n < cfg.J_min + 2:
        raise CLIError(f"need at least J_min + 2 = {cfg.J_min + 2} rows, got {n}")
    x_min, x_max = float(x_raw.min()), float(x_raw.max())
    if x_max == x_min:
        raise CLIError(f"predictor column {args.x!r} is constant")
    x = np.clip((x_raw - x_min) / (x_max - x_min), 0.0, 1.0)
    if args.log_response:
        if np.any(y <= 0):
            raise CLIError("--log-response needs a strictly positive response")
        y = np.log(y)
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    y_shift, y_scale = 0.0, 1.0
    if args.standardize:
        y_shift, y_scale = float(y.mean()), float(y.std(ddof=1))
        if not y_scale > 0:
            raise CLIError("cannot standardize a constant response")
        y = (y - y_shift) / y_scale

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    spec = baselines.BaselineSpec.from_tag(method)
    t0 = time.perf_counter()
    meta = {"version": __version__, "method": method, "n": n, "seed": cfg.seed,
            "config": asdict(cfg), "x_column": args.x, "y_column": args.y,
            "x_min": x_min, "x_max": x_max, "log_response": bool(args.log_response),
            "standardized": bool(args.standardize), "y_shift": y_shift, "y_scale": y_scale,
            "level": level, "grid_size": len(grid)}
    try:
        if spec.method == "PS":
            if args.save_draws:
                raise CLIError("--save-draws is not available for the frequentist ps methods")
            fit = baselines.fit_ps_gcv(y, x, knots=spec.knots_or_Jmax, degree=cfg.degree)
            _write_ps(out, fit, grid, level, y_shift, y_scale)
            meta.update(lambda_gcv=fit.lam, edf=fit.edf)
        else:
            draws = _fit_bayes(spec, x, y, cfg)
            if args.standardize:
                draws = _rescale_draws(draws, y_shift, y_scale)
            write_summaries(out, draws, grid, level)
            if args.save_draws:
                write_draws(out / "draws.txt", draws, method)
            meta.update(acceptance_rate=draws.acceptance_rate, snapshots=len(draws),
                        posterior_mean_J=model_size_summary(draws)[0], draws_meta=draws.meta)
    except CLIError:
        raise
    except Exception as exc:
        raise CLIError(f"fit failed: {type(exc).__name__}: {exc}") from exc
    meta["wall_time_s"] = time.perf_counter() - t0
    (out / "meta.json").write_text(json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n",
                                   encoding="utf-8")
    log.info("wrote outputs to %s", out)
    return 0


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _fit_bayes(spec, x, y, cfg: ModelConfig) -> PosteriorDraws:
    seed = cfg.seed
    if spec.method == "BPS":
        return baselines.fit_bps(y, x, knots=spec.knots_or_Jmax, degree=cfg.degree,
                                 iterations=cfg.iterations, burnin=cfg.burnin, thin=cfg.thin, seed=seed)
    if spec.method == "BTP":
        return baselines.fit_btp(y, x, knots=spec.knots_or_Jmax, cfg=cfg, seed=seed)
    if spec.method == "BBS_ZS":
        return baselines.fit_bbs_zs(y, x, cfg=cfg, seed=seed)
    if spec.method == "BPSWBS":
        return baselines.fit_bpswbs(y, x, cfg=cfg, eta=spec.eta, seed=seed)
    return baselines.fit_proposed(y, x, cfg=cfg, seed=seed)


def _rescale_draws(d: PosteriorDraws, shift: float, scale: float) -> PosteriorDraws:
    return replace(d, theta1=shift + scale * d.theta1, theta=[scale * t for t in d.theta],
                   sigma2=scale**2 * d.sigma2, meta={**d.meta, "rescaled_from_standardized": True})


def _write_ps(out: Path, fit, grid, level, shift, scale):
    cs = fit.curve(grid, level)
    write_csv(out / "curve.csv", ["x", "mean", "lower", "upper"],
              zip(grid, shift + scale * cs.mean, shift + scale * cs.lower, shift + scale * cs.upper))
    d1 = fit.curve(grid, level, order=1)
    d2 = fit.curve(grid, level, order=2)
    write_csv(out / "derivatives.csv",
              ["x", "d1_mean", "d1_lower", "d1_upper", "d2_mean", "d2_lower", "d2_upper"],
              zip(grid, *(scale * a for a in (d1.mean, d1.lower, d1.upper, d2.mean, d2.lower, d2.upper))))


# ---------------------------------------------------------------- simulate


def _split(value: str, conv, name: str):
    try:
        return [conv(v) for v in str(value).split(",") if v.strip()]
    except ValueError:
        raise CLIError(f"cannot parse {name} {value!r}") from None


SPEC_KEYS = {"functions", "n", "sigma", "reps", "methods", "seed", "iterations", "burnin"}


def read_scenario_spec(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CLIError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SPEC_KEYS:
            raise CLIError(f"{path}:{lineno}: unknown field {key!r} (allowed: {', '.join(sorted(SPEC_KEYS))})")
        out[key] = (lineno, value)
    return out


def scenarios_from_args(args) -> tuple[list, dict]:
    functions, ns, sigmas = ["f2"], [200], [0.5]
    reps, methods, seed = 20, ["proposed"], 2024
    overrides = {}
    if args.preset in ("desk", "full"):
        functions, ns, sigmas = list(simbench.FUNCTION_TAGS), [200, 500, 1000], [0.1, 0.5]
        methods = list(baselines.METHOD_TAGS)
        reps = 500 if args.preset == "full" else 20
    if args.spec is not None:
        spec = read_scenario_spec(args.spec)
        conv = {"functions": str, "n": int, "sigma": float, "methods": str}
        parsed = {}
        for key, (lineno, value) in spec.items():
            try:
                if key in conv:
                    parsed[key] = [conv[key](v.strip()) for v in value.split(",") if v.strip()]
                else:
                    parsed[key] = int(value)
            except ValueError:
                raise CLIError(f"{args.spec}:{lineno}: field {key!r}: cannot parse {value!r}") from None
        functions = parsed.get("functions", functions)
        ns = parsed.get("n", ns)
        sigmas = parsed.get("sigma", sigmas)
        methods = parsed.get("methods", methods)
        reps = parsed.get("reps", reps)
        seed = parsed.get("seed", seed)
        for k in ("iterations", "burnin"):
            if k in parsed:
                overrides[k] = parsed[k]
    if args.function:
        functions = _split(args.function, str, "--function")
    if args.n:
        ns = _split(args.n, int, "--n")
    if args.sigma:
        sigmas = _split(args.sigma, float, "--sigma")
    if args.methods:
        methods = _split(args.methods, str, "--methods")
    if args.reps is not None:
        reps = args.reps
    env = os.environ.get("BPBS_SEED")
    if env is not None:
        seed = int(env)
    if args.seed is not None:
        seed = args.seed
    methods = [m.lower() for m in methods]
    for m in methods:
        if m not in baselines.METHOD_TAGS:
            raise CLIError(f"unknown method {m!r}; valid tags: {', '.join(baselines.METHOD_TAGS)}")
    scenarios = []
    try:
        for f in functions:
            for s in sigmas:
                for n in ns:
                    scenarios.append(simbench.Scenario(f, n, s, reps, tuple(methods), seed))
    except ValueError as exc:
        raise CLIError(f"invalid scenario: {exc}") from None
    return scenarios, overrides


def cmd_simulate(args) -> int:
    scenarios, overrides = scenarios_from_args(args)
    cfg = build_config(args, **overrides)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    res = simbench.run_benchmark(scenarios, parallelism=args.parallelism, cfg=cfg,
                                 grid_size=args.grid_size)
    write_csv(out / "results.csv", simbench.RESULT_COLUMNS, res.rows)
    if res.aggregate:
        write_csv(out / "aggregate.csv", list(res.aggregate[0].keys()), res.aggregate)
    write_csv(out / "long.csv", ["scenario", "method", "metric", "value"], simbench.long_format(res.aggregate))
    write_csv(out / "timings.csv", ["scenario", "method", "replication", "seconds"], res.timings)
    for r in res.failures:
        log.warning("failed: %s %s rep %s: %s", r["scenario"], r["method"], r["replication"], r["error"])
    log.info("%d result rows, %d failed", len(res.rows), len(res.failures))
    return 0


# ---------------------------------------------------------------- summarize


def cmd_summarize(args) -> int:
    draws, method = read_draws(args.draws)
    level = _level(args)
    grid = _grid(args)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_summaries(out, draws, grid, level)
    return 0


# ---------------------------------------------------------------- entry


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bpbs", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a method to two columns of a CSV file")
    f.add_argument("input", type=Path)
    f.add_argument("--x", required=True, help="predictor column")
    f.add_argument("--y", required=True, help="response column")
    f.add_argument("--method", default="proposed", help=f"one of {', '.join(baselines.METHOD_TAGS)}")
    f.add_argument("--output", "-o", default="fit_out")
    f.add_argument("--grid-size", type=int, default=1001)
    f.add_argument("--grid", help="comma-separated evaluation points in [0, 1]")
    f.add_argument("--level", type=float, default=0.95)
    f.add_argument("--log-response", action="store_true")
    f.add_argument("--standardize", action="store_true", help="standardize y before fitting")
    f.add_argument("--save-draws", action="store_true")
    _add_config_flags(f)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="run the simulation benchmark")
    s.add_argument("--spec", type=Path, help="scenario file (key = value)")
    s.add_argument("--preset", choices=["desk", "full"])
    s.add_argument("--function")
    s.add_argument("--n")
    s.add_argument("--sigma")
    s.add_argument("--reps", type=int)
    s.add_argument("--methods")
    s.add_argument("--parallelism", type=int, default=None)
    s.add_argument("--grid-size", type=int, default=1001)
    s.add_argument("--output", "-o", default="sim_out")
    _add_config_flags(s)
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("summarize", help="recompute summaries from a saved draws file")
    m.add_argument("draws", type=Path)
    m.add_argument("--output", "-o", default="summary_out")
    m.add_argument("--grid-size", type=int, default=1001)
    m.add_argument("--grid")
    m.add_argument("--level", type=float, default=0.95)
    m.set_defaults(func=cmd_summarize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"bpbs {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
