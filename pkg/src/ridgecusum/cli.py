"""Command-line interface.

Each command writes ``results.json``, ``manifest.json`` and ``tables/*.csv``
into ``--out``.  ``results.json`` depends only on the inputs and the seed; the
wall-clock timestamp lives in the manifest.  Exit codes: 0 ok, 2 validation
error, 3 numeric degeneracy, 4 I/O.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, bench, gplimit, power, tuning
from ._backend import BACKEND
from .baselines import (
    calibrate_block_bootstrap,
    calibrate_mc,
    calibrate_pivotal,
    l2_cusum,
    linf_cusum,
    make_statistic,
    zhang_lavitas,
)
from .datamodel import ObservationMatrix, load_csv
from .detect import recursive_detect, relative_lambda
from .exceptions import CacheIOError, DegenerateDataError, RidgeCusumError, ValidationError
from .scan import scan
from .spectral import RidgeContext, eigendecompose, pooled_covariance

log = logging.getLogger("ridgecusum")

QMODE = {"SC": "SC", "MC_GRID": "MC_GRID", "MC": "MC_DENSE"}


# ---------------------------------------------------------------- helpers


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _write_outputs(args, argv, results: dict, tables: dict[str, list[dict]]) -> None:
    out = Path(args.out)
    try:
        (out / "tables").mkdir(parents=True, exist_ok=True)
        (out / "results.json").write_text(_dump(results))
        for name, rows in tables.items():
            bench.write_csv(rows, out / "tables" / f"{name}.csv")
        manifest = {
            "command": args.command,
            "argv": _strip_out(argv),
            "config": {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")},
            "version": __version__,
            "backend": BACKEND,
            "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        }
        (out / "manifest.json").write_text(_dump(manifest))
    except OSError as exc:
        raise CacheIOError(f"cannot write outputs to {out}: {exc}") from exc


def _strip_out(argv: list[str]) -> list[str]:
    res, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        res.append(a)
    return res


def _load(args) -> ObservationMatrix:
    return load_csv(args.input, has_header=args.header, orientation=args.orientation,
                    label_column=args.label_column)


def _quantile_table(mode: str, epsilon: float, n: int, args, alphas=None) -> gplimit.QuantileTable:
    qmode = QMODE[mode]
    res = None
    if qmode == "MC_DENSE":
        res = args.resolution if args.resolution is not None else min(n, gplimit.DEFAULT_DENSE_RESOLUTION)
    return gplimit.simulate_sup_quantiles(
        qmode, epsilon, B=args.paths, alphas=alphas or (args.alpha,), seed=args.seed,
        cache_dir=args.quantile_cache, resolution=res, workers=args.workers,
    )


def _resolve_lambda(obs: ObservationMatrix, args) -> tuple[float, dict]:
    if args.tune is not None:
        grid = tuning.default_grid(obs)
        ctxs = tuning.contexts_on_grid(obs, grid)
        if args.tune == "bayes":
            lam = tuning.select_bayes(ctxs, tuning.parse_prior(args.prior))
        else:
            lam = tuning.select_minimax(ctxs)
        return lam, {"rule": args.tune, "prior": args.prior, "grid": grid.points.tolist()}
    if args.lam is not None:
        return args.lam, {"rule": "absolute"}
    rel = 0.1 if args.lambda_rel is None else args.lambda_rel
    return rel * obs.gamma_n, {"rule": "relative", "lambda_rel": rel}


# ---------------------------------------------------------------- commands


def cmd_quantiles(args):
    alphas = tuple(args.alphas)
    table = gplimit.simulate_sup_quantiles(
        args.mode, args.epsilon, m=args.m, B=args.paths, alphas=alphas, seed=args.seed,
        cache_dir=args.quantile_cache, resolution=args.resolution, workers=args.workers,
    )
    rec = table.to_record()
    rows = [{"mode": table.mode, "epsilon": table.epsilon, "alpha": a, "level": 1 - a, "quantile": q}
            for a, q in sorted(table.quantiles.items())]
    for r in rows:
        print(f"xi({r['level']:.3f}) = {r['quantile']:.4f}")
    return rec, {"quantiles": rows}


def _baseline_cv(method, obs, args, fn) -> tuple[float, str]:
    calib = args.calibration or ("pivotal" if method == "zl" else "bootstrap")
    if calib == "pivotal":
        return calibrate_pivotal(fn, obs.p, obs.n, args.reps, args.alpha, args.seed, args.workers), calib
    if calib == "mc":
        S = pooled_covariance(obs)
        return calibrate_mc(fn, S, obs.p, obs.n, args.reps, args.alpha, args.seed, args.workers), calib
    block = args.block_len if args.block_len is not None else max(1, int(round(obs.n ** (1 / 3))))
    cv = calibrate_block_bootstrap(obs, block, args.reps, args.alpha, fn, args.seed, args.workers)
    return cv, f"bootstrap(block_len={block})"


def cmd_test(args):
    obs = _load(args)
    if args.method == "ridge":
        lam, how = _resolve_lambda(obs, args)
        ctx = RidgeContext.build(obs, lam)
        res = scan(ctx, args.mode, args.epsilon)
        if args.calibration in (None, "gp"):
            cv = _quantile_table(args.mode, args.epsilon, obs.n, args).critical_value(args.alpha)
            calib = "gaussian_process"
        else:
            fn = make_statistic("ridge", args.epsilon, args.mode, lam / obs.gamma_n)
            cv, calib = _baseline_cv("ridge", obs, args, fn)
        out = {
            "method": "ridge", "mode": args.mode, "statistic": res.statistic, "critical_value": cv,
            "reject": bool(res.statistic > cv), "argmax": res.argmax.to_dict(), "lambda_used": lam,
            "lambda_selection": how, "calibration": calib, "epsilon": args.epsilon, "alpha": args.alpha,
            "n": obs.n, "p": obs.p,
        }
    else:
        if args.mode == "MC_GRID" and args.method == "zl":
            raise ValidationError("the ZL statistic has no grid mode")
        f = {"l2": l2_cusum, "linf": linf_cusum, "zl": zhang_lavitas}[args.method]
        res = f(obs, args.epsilon, args.mode)
        if args.calibration == "gp":
            raise ValidationError("Gaussian-process calibration applies to the ridge statistic only")
        fn = make_statistic(args.method, args.epsilon, args.mode)
        cv, calib = _baseline_cv(args.method, obs, args, fn)
        res = res.with_critical_value(cv, calib)
        out = {
            "method": args.method, "mode": args.mode, "statistic": res.statistic, "critical_value": cv,
            "reject": res.reject, "argmax": res.argmax.to_dict() if res.argmax else None,
            "calibration": calib, "epsilon": args.epsilon, "alpha": args.alpha, "n": obs.n, "p": obs.p,
        }
    if obs.labels is not None:
        k1, k2, k3 = out["argmax"]["k1"], out["argmax"]["k2"], out["argmax"]["k3"]
        out["argmax_labels"] = [obs.labels[k - 1] if k <= obs.n else None for k in (k1, k2, k3)]
    print(f"{out['method']}:{out['mode']} statistic={out['statistic']:.4f} "
          f"cv={out['critical_value']:.4f} reject={out['reject']}")
    row = {k: out[k] for k in ("method", "mode", "statistic", "critical_value", "reject", "calibration")}
    return out, {"decision": [row]}


def cmd_tune(args):
    obs = _load(args)
    decomp = eigendecompose(pooled_covariance(obs))
    lower = tuning.lambda_floor(pooled_covariance(obs))
    grid = tuning.LambdaGrid.log_spaced(lower, args.grid_ratio, args.grid_points)
    ctxs = tuning.contexts_on_grid(obs, grid, decomp)
    rows = []
    if args.tune == "bayes":
        prior = tuning.parse_prior(args.prior)
        lam = tuning.select_bayes(ctxs, prior)
        for c in ctxs:
            rows.append({"lambda": c.lam, "lambda_rel": c.lam / obs.gamma_n, "asnr": tuning.asnr_hat(c, prior)})
    else:
        family = tuning.linear_family()
        table = tuning.minimax_table(ctxs, family)
        lam = tuning.select_minimax(ctxs, family)
        for c, vals in zip(ctxs, table):
            rows.append({"lambda": c.lam, "lambda_rel": c.lam / obs.gamma_n, "worst_asnr": float(vals.min())})
    print(f"selected lambda = {lam:.6g} (lambda/gamma_n = {lam / obs.gamma_n:.4g})")
    out = {
        "rule": args.tune, "prior": args.prior if args.tune == "bayes" else "linear_family",
        "lambda": lam, "lambda_rel": lam / obs.gamma_n, "grid": grid.points.tolist(),
        "is_grid_floor": bool(lam == grid.lower), "n": obs.n, "p": obs.p,
    }
    return out, {"asnr": rows}


def cmd_simulate(args):
    try:
        raw = json.loads(Path(args.spec).read_text())
    except OSError as exc:
        raise CacheIOError(f"cannot read experiment spec {args.spec}: {exc}") from exc
    except ValueError as exc:
        raise ValidationError(f"experiment spec {args.spec} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ValidationError("experiment spec must be a JSON object")
    c_grid = raw.pop("c_grid", None)
    if args.reps is not None:
        raw["reps"] = args.reps
    if "seed" not in raw:
        raw["seed"] = args.seed
    try:
        cfg = bench.ExperimentConfig.from_dict(raw)
    except TypeError as exc:
        raise ValidationError(f"bad experiment spec: {exc}") from None
    if cfg.alternative == "NONE":
        table = bench.run_size_experiment(cfg, cache_dir=args.quantile_cache, workers=args.workers)
        rows = bench.tidy_rows(cfg, table, "size")
        kind = "size"
    else:
        grid = c_grid if c_grid is not None else [cfg.signal.c]
        table = bench.run_power_experiment(cfg, grid, cache_dir=args.quantile_cache, workers=args.workers)
        rows = bench.tidy_rows(cfg, table, "power")
        kind = "power"
    for r in rows:
        print(", ".join(f"{k}={v}" for k, v in r.items()))
    return {"kind": kind, "config": cfg.to_dict(), "rows": rows}, {kind: rows}


def _array(spec: dict, key: str, p: int, kind: str):
    v = spec.get(key)
    if v is None:
        return None
    if isinstance(v, (int, float)):
        return float(v) * (np.ones(p) if kind == "vector" else np.eye(p))
    return np.asarray(v, dtype=float)


def power_spec_from_json(spec: dict) -> tuple[power.AlternativeSpec, dict]:
    """Build an alternative from a JSON object.

    Keys: ``kind``, ``p``, ``n`` (``gamma = p/(n-1)``) or ``gamma``, ``lambda``
    or ``lambda_rel``, ``cov`` (a bench covariance model), ``locations`` and
    ``delta`` / ``B`` / ``U`` / ``Omega``.  A number for ``delta`` means a
    constant vector and for ``B`` a multiple of the identity.
    """
    try:
        p = int(spec["p"])
        gamma = float(spec["gamma"]) if "gamma" in spec else p / (int(spec["n"]) - 1)
        lam = float(spec["lambda"]) if "lambda" in spec else float(spec.get("lambda_rel", 0.1)) * gamma
        cov = dict(spec.get("cov", {"kind": "ID"}))
        cov["p"] = p
        Sigma = bench.make_sigma(bench.CovarianceModel(**cov))
        alt = power.AlternativeSpec(
            kind=spec["kind"], lam=lam, gamma=gamma, Sigma=Sigma,
            locations=tuple(spec.get("locations", (0.5,))),
            delta=_array(spec, "delta", p, "vector"), B=_array(spec, "B", p, "matrix"),
            U=_array(spec, "U", p, "matrix"), Omega=_array(spec, "Omega", p, "matrix"),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"bad power spec: missing or invalid {exc}") from None
    opts = {k: spec[k] for k in ("epsilon", "alpha", "B_paths", "m") if k in spec}
    return alt, opts


def cmd_power(args):
    try:
        raw = json.loads(Path(args.spec).read_text())
    except OSError as exc:
        raise CacheIOError(f"cannot read power spec {args.spec}: {exc}") from exc
    except ValueError as exc:
        raise ValidationError(f"power spec {args.spec} is not valid JSON: {exc}") from None
    alt, opts = power_spec_from_json(raw)
    res = power.asymptotic_power(
        alt, epsilon=float(opts.get("epsilon", args.epsilon)), alpha=float(opts.get("alpha", args.alpha)),
        B_paths=int(opts.get("B_paths", args.paths)), seed=args.seed, m=int(opts.get("m", 1000)),
        cache_dir=args.quantile_cache, workers=args.workers,
    )
    out = res.to_dict()
    print(f"power = {res.power:.4f} (MC s.e. {res.mc_stderr:.4f})")
    return out, {"power": [{"kind": alt.kind, "power": res.power, "mc_stderr": res.mc_stderr,
                            "critical_value": res.critical_value, "max_drift": res.drift_summary["max"]}]}


def cmd_detect(args):
    obs = _load(args)
    table = _quantile_table(args.mode, args.epsilon, min(obs.n, 600), args)
    rel = 0.1 if args.lambda_rel is None else args.lambda_rel
    res = recursive_detect(obs, table, relative_lambda(rel), args.epsilon, args.min_len, args.mode, args.alpha)
    out = res.to_dict()
    out["critical_value"] = table.critical_value(args.alpha)
    rows = []
    for k in res.change_points:
        row = {"index": k, "primary": k in res.primary}
        if obs.labels is not None:
            row["label"] = obs.labels[k - 1]
        rows.append(row)
    print("change points:", ", ".join(str(k) for k in res.change_points) or "none")
    return out, {"changes": rows}


# ---------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--quantile-cache", default=None, metavar="DIR")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--paths", type=int, default=20000, help="Gaussian-process paths for quantiles")
    p.add_argument("--resolution", type=int, default=None, help="dense MC grid resolution")


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="CSV file")
    p.add_argument("--header", action="store_true", help="first row is a header")
    p.add_argument("--orientation", choices=("rows-as-time", "rows-as-variables"), default="rows-as-time")
    p.add_argument("--label-column", action="store_true", help="first column holds time labels")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ridgecusum", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quantiles", help="simulate null quantile tables")
    _common(q)
    q.add_argument("--mode", choices=("SC", "MC_GRID", "MC_DENSE"), default="SC")
    q.add_argument("--m", type=int, default=None, help="SC grid size (default 1000)")
    q.add_argument("--alphas", type=float, nargs="+", default=[0.1, 0.05, 0.01])
    q.set_defaults(func=cmd_quantiles)

    t = sub.add_parser("test", help="test a panel for a change")
    _common(t)
    _data_args(t)
    t.add_argument("--mode", choices=("SC", "MC_GRID", "MC"), default="SC")
    t.add_argument("--method", choices=("ridge", "l2", "linf", "zl"), default="ridge")
    lam = t.add_mutually_exclusive_group()
    lam.add_argument("--lambda", dest="lam", type=float, default=None)
    lam.add_argument("--lambda-rel", type=float, default=None, help="lambda / gamma_n (default 0.1)")
    lam.add_argument("--tune", choices=("bayes", "minimax"), default=None)
    t.add_argument("--prior", default="identity")
    t.add_argument("--calibration", choices=("gp", "pivotal", "mc", "bootstrap"), default=None)
    t.add_argument("--block-len", type=int, default=None)
    t.add_argument("--reps", type=int, default=500)
    t.set_defaults(func=cmd_test)

    u = sub.add_parser("tune", help="select lambda")
    _common(u)
    _data_args(u)
    u.add_argument("--tune", choices=("bayes", "minimax"), default="minimax")
    u.add_argument("--prior", default="identity")
    u.add_argument("--grid-points", type=int, default=tuning.DEFAULT_GRID_POINTS)
    u.add_argument("--grid-ratio", type=float, default=tuning.DEFAULT_GRID_RATIO)
    u.set_defaults(func=cmd_tune)

    s = sub.add_parser("simulate", help="run a size or power experiment")
    _common(s)
    s.add_argument("--spec", required=True, help="JSON experiment spec")
    s.add_argument("--reps", type=int, default=None)
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("power", help="asymptotic power of a local alternative")
    _common(w)
    w.add_argument("--spec", required=True, help="JSON alternative spec")
    w.set_defaults(func=cmd_power)

    d = sub.add_parser("detect", help="recursive multiple change-point detection")
    _common(d)
    _data_args(d)
    d.add_argument("--mode", choices=("MC", "MC_GRID"), default="MC")
    d.add_argument("--min-len", type=int, default=100)
    d.add_argument("--lambda-rel", type=float, default=None)
    d.set_defaults(func=cmd_detect)
    return ap


def _validate(args) -> None:
    if not 0 < args.alpha < 1:
        raise ValidationError(f"alpha must lie in (0, 1), got {args.alpha}")
    if args.workers < 1:
        raise ValidationError("workers must be positive")


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _validate(args)
        results, tables = args.func(args)
        _write_outputs(args, argv, results, tables)
    except RidgeCusumError as exc:
        return _fail(exc, exc.exit_code)
    except OSError as exc:
        return _fail(exc, CacheIOError.exit_code)
    return 0


def _fail(exc: Exception, code: int) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, DegenerateDataError):
        err["hint"] = "the data are numerically degenerate for this lambda; check for constant columns or increase lambda"
    print(json.dumps(err), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
