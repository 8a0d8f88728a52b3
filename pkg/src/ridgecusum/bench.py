"""Synthetic designs, size and power experiments.

Covariance models are rescaled to ``tr Sigma = p``.  Replicate ``r`` of an
experiment draws its signal and noise from substream ``(seed, "bench", r)``,
so tables are reproducible and independent of the worker count.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import gplimit
from .baselines import calibrate_mc, calibrate_pivotal, make_statistic, sqrt_psd
from .datamodel import ObservationMatrix, ifloor
from .exceptions import CacheIOError, ValidationError
from .scan import scan
from .seeds import substream
from .spectral import RidgeContext

COV_KINDS = ("ID", "TOEPLITZ", "POLY_DECAY", "EXP_DECAY", "CUSTOM")
SIGNAL_KINDS = ("IID_GAUSS", "SIGMA_GAUSS", "SPARSE")
ALTERNATIVES = ("NONE", "SINGLE", "EPIDEMIC")
SPARSE_NONZEROS = 3
SPARSE_MULTIPLIER = 5.0


@dataclass(frozen=True)
class CovarianceModel:
    kind: str = "ID"
    p: int = 100
    rho: float = 0.3
    matrix: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in COV_KINDS:
            raise ValidationError(f"unknown covariance model {self.kind!r}; expected one of {COV_KINDS}")
        if self.p < 1:
            raise ValidationError("p must be positive")
        if self.kind == "CUSTOM" and self.matrix is None:
            raise ValidationError("CUSTOM covariance needs a matrix")


def make_sigma(model: CovarianceModel) -> np.ndarray:
    """Covariance matrix of ``model`` rescaled to trace ``p``.

    The decay models are diagonal with the listed eigenvalues; the test
    statistics are rotation invariant, so the eigenbasis is immaterial.
    """
    p = model.p
    if model.kind == "ID":
        S = np.eye(p)
    elif model.kind == "TOEPLITZ":
        idx = np.arange(p)
        S = model.rho ** np.abs(idx[:, None] - idx[None, :])
    elif model.kind == "POLY_DECAY":
        j = np.arange(1, p + 1)
        S = np.diag(0.01 + (p - j + 0.1) ** 2)
    elif model.kind == "EXP_DECAY":
        j = np.arange(1, p + 1)
        S = np.diag(np.exp(-3.0 * j / p))
    else:
        S = np.asarray(model.matrix, dtype=float)
        if S.shape != (p, p):
            raise ValidationError(f"custom covariance must be {p}x{p}")
    return S * (p / np.trace(S))


@dataclass(frozen=True)
class SignalModel:
    kind: str = "IID_GAUSS"
    c: float = 0.0

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise ValidationError(f"unknown signal model {self.kind!r}; expected one of {SIGNAL_KINDS}")
        if self.c < 0:
            raise ValidationError("signal strength c must be nonnegative")


def draw_signal(model: SignalModel, Sigma: np.ndarray | None, p: int, rng: np.random.Generator,
                sigma_root: np.ndarray | None = None) -> np.ndarray:
    """Jump vector: ``N(0, c I)``, ``N(0, c Sigma)`` or 3 coordinates at ``+-5c``."""
    if model.kind == "IID_GAUSS":
        return math.sqrt(model.c) * rng.standard_normal(p)
    if model.kind == "SIGMA_GAUSS":
        root = sigma_root if sigma_root is not None else sqrt_psd(np.asarray(Sigma, dtype=float))
        return math.sqrt(model.c) * (root @ rng.standard_normal(p))
    k = min(SPARSE_NONZEROS, p)
    delta = np.zeros(p)
    idx = rng.choice(p, size=k, replace=False)
    delta[idx] = SPARSE_MULTIPLIER * model.c * rng.choice([-1.0, 1.0], size=k)
    return delta


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulation design.

    ``methods`` entries are ``"ridge:SC"``, ``"ridge:MC_GRID"``, ``"ridge:MC"``,
    ``"l2:SC"``, ``"linf:MC"``, ``"zl:SC"`` and so on.
    """

    cov: CovarianceModel = CovarianceModel()
    signal: SignalModel = SignalModel()
    alternative: str = "NONE"
    k0: float = 0.5
    tau: tuple = (0.35, 0.65)
    p: int = 100
    n: int = 200
    lambda_rel: float = 0.1
    epsilon: float = 0.1
    alpha: float = 0.05
    reps: int = 500
    methods: tuple = ("ridge:SC", "ridge:MC_GRID")
    seed: int = 1
    calibration_reps: int = 500
    quantile_paths: int = 20000
    dense_resolution: int | None = None

    def __post_init__(self):
        if self.alternative not in ALTERNATIVES:
            raise ValidationError(f"unknown alternative {self.alternative!r}")
        t1, t2 = self.tau
        if self.alternative == "EPIDEMIC" and not 0 < t1 < t2 < 1:
            raise ValidationError(f"epidemic window needs 0 < tau1 < tau2 < 1, got {self.tau}")
        if self.alternative == "SINGLE" and not 0 < self.k0 < 1:
            raise ValidationError(f"change fraction must lie in (0, 1), got {self.k0}")
        if self.cov.p != self.p:
            object.__setattr__(self, "cov", replace(self.cov, p=self.p))
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "tau", tuple(float(x) for x in self.tau))
        for m in self.methods:
            _parse_method(m)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cov"].pop("matrix", None)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        cov = dict(d.pop("cov", {}))
        if cov.get("matrix") is not None:
            cov["matrix"] = np.asarray(cov["matrix"], dtype=float)
        sig = d.pop("signal", {})
        p = int(d.get("p", cov.get("p", 100)))
        cov.setdefault("p", p)
        return cls(cov=CovarianceModel(**cov), signal=SignalModel(**sig), **d)


def _parse_method(name: str) -> tuple[str, str]:
    try:
        method, mode = name.split(":")
    except ValueError:
        raise ValidationError(f"method {name!r} must look like 'ridge:SC'") from None
    if method not in ("ridge", "l2", "linf", "zl"):
        raise ValidationError(f"unknown method {method!r}")
    if mode not in ("SC", "MC", "MC_GRID"):
        raise ValidationError(f"unknown mode {mode!r}")
    if method == "zl" and mode == "MC_GRID":
        raise ValidationError("the ZL statistic has no grid mode")
    return method, mode


def change_columns(cfg: ExperimentConfig) -> tuple[np.ndarray, dict]:
    """Boolean mask of shifted columns (0-based) and the truth record."""
    n = cfg.n
    col = np.arange(1, n + 1)
    if cfg.alternative == "NONE":
        return np.zeros(n, bool), {"alternative": "NONE", "changes": []}
    if cfg.alternative == "SINGLE":
        k = ifloor(cfg.k0 * n)
        return col > k, {
            "alternative": "SINGLE",
            "changes": [k + 1],
            "convention": "columns with 1-based index > floor(k0 n) are shifted",
        }
    a, b = cfg.tau
    mask = (col > a * n + 1e-9) & (col <= b * n + 1e-9)
    first, last = int(col[mask][0]), int(col[mask][-1])
    return mask, {
        "alternative": "EPIDEMIC",
        "changes": [first, last + 1],
        "convention": "columns t with tau1 n < t <= tau2 n are shifted",
    }


class Design:
    """A configuration with its covariance root computed once."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.Sigma = make_sigma(cfg.cov)
        self.root = sqrt_psd(self.Sigma)
        self.mask, self.truth = change_columns(cfg)

    def panel(self, r: int) -> tuple[ObservationMatrix, dict]:
        cfg = self.cfg
        rng = substream(cfg.seed, "bench", r)
        delta = draw_signal(cfg.signal, self.Sigma, cfg.p, rng, self.root)
        X = self.root @ rng.standard_normal((cfg.p, cfg.n))
        X[:, self.mask] += delta[:, None]
        return ObservationMatrix(X), dict(self.truth, replicate=r)


def generate_panel(cfg: ExperimentConfig, replicate: int = 0) -> tuple[ObservationMatrix, dict]:
    """``X_j = mu_j + Sigma^{1/2} Z_j`` for replicate ``replicate`` of ``cfg``."""
    return Design(cfg).panel(replicate)


@dataclass
class Method:
    """A statistic and its critical value; ``fn`` overrides the built-in evaluation."""

    name: str
    critical_value: float
    fn: Callable[[ObservationMatrix], float] | None = None


def ridge_critical_value(mode: str, cfg: ExperimentConfig, cache_dir=None) -> float:
    qmode = {"SC": "SC", "MC_GRID": "MC_GRID", "MC": "MC_DENSE"}[mode]
    res = cfg.dense_resolution if cfg.dense_resolution is not None else min(cfg.n, 100)
    table = gplimit.simulate_sup_quantiles(
        qmode, cfg.epsilon, B=cfg.quantile_paths, alphas=(cfg.alpha,), seed=cfg.seed,
        cache_dir=cache_dir, resolution=res if qmode == "MC_DENSE" else None,
    )
    return table.critical_value(cfg.alpha)


def resolve_methods(cfg: ExperimentConfig, cache_dir=None, design: Design | None = None) -> list[Method]:
    """Critical values for ``cfg.methods``.

    Ridge uses the Gaussian-process tables; ``l2``/``linf`` are calibrated by
    Monte Carlo under the design covariance and ``zl`` pivotally under ``I``.
    """
    design = design or Design(cfg)
    out = []
    for name in cfg.methods:
        method, mode = _parse_method(name)
        if method == "ridge":
            cv = ridge_critical_value(mode, cfg, cache_dir)
        elif method == "zl":
            cv = calibrate_pivotal(make_statistic("zl", cfg.epsilon, mode), cfg.p, cfg.n,
                                   cfg.calibration_reps, cfg.alpha, seed=cfg.seed + 1)
        else:
            cv = calibrate_mc(make_statistic(method, cfg.epsilon, mode), design.Sigma, cfg.p, cfg.n,
                              cfg.calibration_reps, cfg.alpha, seed=cfg.seed + 1)
        out.append(Method(name, cv))
    return out


def evaluate(obs: ObservationMatrix, methods: Sequence[Method], cfg: ExperimentConfig) -> dict:
    """Statistic per method on one panel; ridge methods share one context."""
    ctx = None
    out = {}
    for m in methods:
        if m.fn is not None:
            out[m.name] = float(m.fn(obs))
            continue
        method, mode = _parse_method(m.name)
        if method == "ridge":
            if ctx is None:
                ctx = RidgeContext.build(obs, cfg.lambda_rel * obs.gamma_n)
            out[m.name] = scan(ctx, mode, cfg.epsilon).statistic
        else:
            out[m.name] = make_statistic(method, cfg.epsilon, mode)(obs)
    return out


def _rejections(cfg: ExperimentConfig, methods: Sequence[Method], design: Design, workers: int) -> np.ndarray:
    def one(r):
        obs, _ = design.panel(r)
        stats = evaluate(obs, methods, cfg)
        return [stats[m.name] > m.critical_value for m in methods]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(one, range(cfg.reps)))
    else:
        rows = [one(r) for r in range(cfg.reps)]
    return np.asarray(rows, dtype=bool).reshape(cfg.reps, len(methods))


def run_size_experiment(
    cfg: ExperimentConfig, methods: Sequence[Method] | None = None, cache_dir=None, workers: int = 1
) -> dict:
    """Rejection frequency per method under the null."""
    if cfg.alternative != "NONE":
        raise ValidationError("size experiments need alternative NONE")
    if cfg.reps < 100:
        raise ValidationError(f"size experiments need at least 100 replications, got {cfg.reps}")
    design = Design(cfg)
    methods = list(methods) if methods is not None else resolve_methods(cfg, cache_dir, design)
    rej = _rejections(cfg, methods, design, workers)
    return {m.name: float(rej[:, i].mean()) for i, m in enumerate(methods)}


def run_power_experiment(
    cfg: ExperimentConfig,
    c_grid: Sequence[float],
    methods: Sequence[Method] | None = None,
    cache_dir=None,
    workers: int = 1,
) -> dict:
    """Power per ``(c, method)``.  Replicates share seeds across ``c``."""
    c_grid = [float(c) for c in c_grid]
    if any(b < a for a, b in zip(c_grid, c_grid[1:])):
        raise ValidationError("signal grid must be ascending")
    base = Design(cfg)
    methods = list(methods) if methods is not None else resolve_methods(cfg, cache_dir, base)
    out = {}
    for c in c_grid:
        cc = replace(cfg, signal=replace(cfg.signal, c=c))
        rej = _rejections(cc, methods, Design(cc), workers)
        out[c] = {m.name: float(rej[:, i].mean()) for i, m in enumerate(methods)}
    return out


def binomial_se(rate: float, reps: int) -> float:
    return math.sqrt(max(rate * (1 - rate), 1e-12) / reps)


def tidy_rows(cfg: ExperimentConfig, table: dict, kind: str) -> list[dict]:
    base = {
        "cov": cfg.cov.kind, "signal": cfg.signal.kind, "alternative": cfg.alternative,
        "p": cfg.p, "n": cfg.n, "lambda_rel": cfg.lambda_rel, "epsilon": cfg.epsilon,
        "alpha": cfg.alpha, "reps": cfg.reps,
    }
    rows = []
    if kind == "size":
        for m, v in table.items():
            rows.append(dict(base, c=cfg.signal.c, method=m, size=v, se=binomial_se(v, cfg.reps)))
    else:
        for c, per in table.items():
            for m, v in per.items():
                rows.append(dict(base, c=c, method=m, power=v, se=binomial_se(v, cfg.reps)))
    return rows


def write_csv(rows: Sequence[dict], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CacheIOError(f"cannot read experiment spec {path}: {exc}") from exc
    except ValueError as exc:
        raise ValidationError(f"experiment spec {path} is not valid JSON: {exc}") from None
    try:
        return ExperimentConfig.from_dict(raw)
    except TypeError as exc:
        raise ValidationError(f"bad experiment spec: {exc}") from None
