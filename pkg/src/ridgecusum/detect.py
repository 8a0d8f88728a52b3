"""Recursive localization of multiple change points with the MC test.

If the test rejects on a segment, its argmax triple ``(t1, t2, t3)`` marks a
change at ``t2`` inside the window ``[t1, t3)``.  The segment is cut into
before / inside-left / inside-right / after at ``t1, t2, t3`` and each part
of at least ``min_len`` observations is tested again with its own pooled
covariance and ridge level.  Every test uses the same critical value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

from .datamodel import ObservationMatrix
from .exceptions import DegenerateDataError, ValidationError
from .gplimit import QuantileTable
from .scan import DEFAULT_MAX_N, mc_min_gap, scan
from .spectral import RidgeContext

DEFAULT_MIN_LEN = 100


def relative_lambda(rel: float = 0.1) -> Callable[[ObservationMatrix], float]:
    """Rule ``lambda = rel * p/(n_seg - 1)`` for a segment."""
    if not rel > 0:
        raise ValidationError("relative lambda must be positive")
    return lambda obs: rel * obs.gamma_n


@dataclass
class DetectionNode:
    """One tested segment ``[a, b)`` (1-based, absolute indices)."""

    a: int
    b: int
    depth: int
    statistic: float | None = None
    critical_value: float | None = None
    lam: float | None = None
    argmax: tuple[int, int, int] | None = None
    rejected: bool = False
    min_gap: int = 1
    note: str | None = None
    children: list["DetectionNode"] = field(default_factory=list)
    skipped: list[tuple[int, int]] = field(default_factory=list)

    @property
    def length(self) -> int:
        return self.b - self.a

    def change_points(self) -> list[int]:
        """``t2`` plus window ends leaving at least ``min_gap`` columns outside."""
        if not self.rejected:
            return []
        k1, k2, k3 = self.argmax
        out = [k2]
        if k1 - self.a >= self.min_gap:
            out.append(k1)
        if self.b - k3 >= self.min_gap:
            out.append(k3)
        return sorted(out)

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def to_dict(self, labels=None) -> dict:
        d = {
            "segment": [self.a, self.b],
            "n": self.length,
            "depth": self.depth,
            "statistic": self.statistic,
            "critical_value": self.critical_value,
            "lambda": self.lam,
            "rejected": self.rejected,
            "argmax": list(self.argmax) if self.argmax else None,
            "children": [c.to_dict(labels) for c in self.children],
        }
        if self.note:
            d["note"] = self.note
        if self.skipped:
            d["skipped_short_segments"] = [list(s) for s in self.skipped]
        if labels is not None and self.argmax:
            d["argmax_labels"] = [_label(labels, k) for k in self.argmax]
        return d


def _label(labels, k):
    return labels[k - 1] if 1 <= k <= len(labels) else None


@dataclass
class DetectionResult:
    tree: DetectionNode
    change_points: list[int]
    primary: list[int]
    labels: tuple[str, ...] | None = None

    def to_dict(self) -> dict:
        d = {
            "change_points": self.change_points,
            "primary_change_points": self.primary,
            "tree": self.tree.to_dict(self.labels),
        }
        if self.labels is not None:
            d["change_point_labels"] = [_label(self.labels, k) for k in self.change_points]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def recursive_detect(
    X: ObservationMatrix,
    critical_value: float | QuantileTable,
    lambda_rule: Callable[[ObservationMatrix], float] | None = None,
    epsilon: float = 0.1,
    min_len: int = DEFAULT_MIN_LEN,
    mode: str = "MC",
    alpha: float = 0.05,
    max_n: int | None = DEFAULT_MAX_N,
) -> DetectionResult:
    """Recursive MC detection.

    Parameters
    ----------
    X : ObservationMatrix
    critical_value : float or QuantileTable
        Shared by every test in the tree (a table is read at ``alpha``).
    lambda_rule : callable, optional
        Segment -> ridge level; default ``0.1 p/(n_seg - 1)``.
    mode : {"MC", "MC_GRID"}
        Full index scan or the grid scan.

    Returns
    -------
    DetectionResult
        ``change_points`` is the sorted set of ``t2`` and of window ends with
        at least ``ceil(eps n_seg)`` columns outside the window, over rejecting
        nodes; ``primary`` holds the ``t2`` indices only.
    """
    if mode not in ("MC", "MC_GRID"):
        raise ValidationError(f"detection uses the MC or MC_GRID scan, got {mode!r}")
    if X.n < min_len:
        raise ValidationError(f"n={X.n} is below the minimum segment length {min_len}")
    cv = critical_value.critical_value(alpha) if isinstance(critical_value, QuantileTable) else float(critical_value)
    rule = lambda_rule or relative_lambda(0.1)

    def visit(a: int, b: int, depth: int) -> DetectionNode:
        node = DetectionNode(a, b, depth, critical_value=cv)
        seg = X.segment(a, b)
        node.lam = float(rule(seg))
        try:
            ctx = RidgeContext.build(seg, node.lam)
            kw = {"max_n": max_n} if mode == "MC" else {}
            res = scan(ctx, mode, epsilon, **kw)
        except DegenerateDataError as exc:
            if depth == 0:
                raise
            node.note = f"degenerate segment: {exc}"
            return node
        node.statistic = res.statistic
        node.min_gap = mc_min_gap(seg.n, epsilon)
        t = res.argmax
        node.argmax = (a + t.k1 - 1, a + t.k2 - 1, a + t.k3 - 1)
        node.rejected = res.statistic > cv
        if node.rejected:
            cuts = [a, *node.argmax, b]
            for lo, hi in zip(cuts, cuts[1:]):
                if hi - lo <= 0:
                    continue
                if hi - lo < min_len:
                    node.skipped.append((lo, hi))
                    continue
                node.children.append(visit(lo, hi, depth + 1))
        return node

    root = visit(1, X.n + 1, 0)
    all_cp = sorted({k for nd in root.walk() for k in nd.change_points()})
    primary = sorted({nd.argmax[1] for nd in root.walk() if nd.rejected})
    return DetectionResult(root, all_cp, primary, X.labels)
