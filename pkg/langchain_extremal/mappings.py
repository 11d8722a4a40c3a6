"""Nonexpansive self-mappings of the unit ball as immutable expression trees.

A mapping is one of six node kinds: ``Linear``, ``Affine``, ``Grid`` (defined
only on its sample points, never interpolated), ``ConvexCombo``,
``RetractCompose`` (``inner o R_{eta,x0}``) and ``Translate``. Every node
carries the ``SpaceContext`` it acts on; children must share it.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    CertificateError,
    DimensionMismatchError,
    ExtremalError,
    HypothesisError,
    OutsideBallError,
)
from .normed import (
    DEFAULT_TOL,
    NormTag,
    SpaceContext,
    ball_samples,
    batch_norm,
    check_in_ball,
    classify_point,
    make_rng,
    matrix_norm,
)

logger = logging.getLogger(__name__)

GRID_MATCH_TOL = 1e-12
MEMBERSHIP_TOL = 1e-10


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


def _finite_matrix(space: SpaceContext, matrix: np.ndarray, node: str) -> None:
    if matrix.shape != (space.dim, space.dim):
        raise DimensionMismatchError(
            f"{node} node needs a {space.dim}x{space.dim} matrix, got {matrix.shape}"
        )
    if not np.all(np.isfinite(matrix)):
        raise ExtremalError(f"{node} matrix entries must be finite")


class NodeKind(str, Enum):
    LINEAR = "linear"
    AFFINE = "affine"
    GRID = "grid"
    COMBO = "combo"
    RETRACT = "retract"
    TRANSLATE = "translate"


@dataclass(frozen=True, eq=False)
class MappingExpr:
    space: SpaceContext

    kind = None  # type: Optional[NodeKind]

    def __call__(self, x: Sequence[float]) -> np.ndarray:
        return evaluate(self, x)

    def _same_space(self, *children: "MappingExpr") -> None:
        for child in children:
            if child.space != self.space:
                raise DimensionMismatchError(
                    f"sub-expression acts on {child.space}, expected {self.space}"
                )


@dataclass(frozen=True, eq=False)
class Linear(MappingExpr):
    matrix: np.ndarray

    kind = NodeKind.LINEAR

    def __post_init__(self) -> None:
        matrix = _frozen(self.matrix)
        _finite_matrix(self.space, matrix, "linear")
        object.__setattr__(self, "matrix", matrix)


@dataclass(frozen=True, eq=False)
class Affine(MappingExpr):
    matrix: np.ndarray
    offset: np.ndarray

    kind = NodeKind.AFFINE

    def __post_init__(self) -> None:
        matrix = _frozen(self.matrix)
        _finite_matrix(self.space, matrix, "affine")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "offset", _frozen(self.space.vector(self.offset)))


@dataclass(frozen=True, eq=False)
class Grid(MappingExpr):
    points: np.ndarray
    values: np.ndarray

    kind = NodeKind.GRID

    def __post_init__(self) -> None:
        points = _frozen(self.space.points(self.points))
        values = _frozen(self.space.points(self.values))
        if points.shape != values.shape:
            raise DimensionMismatchError("grid needs one value per sample point")
        if points.shape[0] == 0:
            raise ExtremalError("grid needs at least one sample point")
        for name, arr in (("sample point", points), ("value", values)):
            norms = batch_norm(self.space.norm_tag, arr)
            bad = np.flatnonzero(norms > 1 + DEFAULT_TOL)
            if bad.size:
                raise OutsideBallError(
                    f"grid {name} {int(bad[0])} lies outside the ball (norm {norms[bad[0]]})"
                )
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class ConvexCombo(MappingExpr):
    """``(1 - lam) * left + lam * right``."""

    lam: float
    left: MappingExpr
    right: MappingExpr

    kind = NodeKind.COMBO

    def __post_init__(self) -> None:
        lam = float(self.lam)
        if not 0.0 <= lam <= 1.0:
            raise ExtremalError(f"lambda out of [0,1]: {lam}")
        object.__setattr__(self, "lam", lam)
        self._same_space(self.left, self.right)


@dataclass(frozen=True, eq=False)
class RetractCompose(MappingExpr):
    """``inner o R_{eta,x0}``."""

    inner: MappingExpr
    eta: float
    x0: np.ndarray

    kind = NodeKind.RETRACT

    def __post_init__(self) -> None:
        eta = float(self.eta)
        if not eta > 0.0:
            raise ExtremalError(f"eta must be positive, got {eta}")
        x0 = self.space.vector(self.x0)
        check_in_ball(self.space, x0, DEFAULT_TOL)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "x0", _frozen(x0))
        self._same_space(self.inner)


@dataclass(frozen=True, eq=False)
class Translate(MappingExpr):
    inner: MappingExpr
    offset: np.ndarray

    kind = NodeKind.TRANSLATE

    def __post_init__(self) -> None:
        object.__setattr__(self, "offset", _frozen(self.space.vector(self.offset)))
        self._same_space(self.inner)


def identity(space: SpaceContext) -> Linear:
    return Linear(space, np.eye(space.dim))


def zero_map(space: SpaceContext) -> Linear:
    return Linear(space, np.zeros((space.dim, space.dim)))


def constant_map(space: SpaceContext, value: Sequence[float]) -> Affine:
    return Affine(space, np.zeros((space.dim, space.dim)), np.asarray(value, dtype=float))


def children(f: MappingExpr) -> List[MappingExpr]:
    if isinstance(f, ConvexCombo):
        return [f.left, f.right]
    if isinstance(f, (RetractCompose, Translate)):
        return [f.inner]
    return []


def same_expr(a: MappingExpr, b: MappingExpr) -> bool:
    """Structural equality of two expression trees."""
    if a is b:
        return True
    if type(a) is not type(b) or a.space != b.space:
        return False
    if isinstance(a, Linear):
        return np.array_equal(a.matrix, b.matrix)
    if isinstance(a, Affine):
        return np.array_equal(a.matrix, b.matrix) and np.array_equal(a.offset, b.offset)
    if isinstance(a, Grid):
        return np.array_equal(a.points, b.points) and np.array_equal(a.values, b.values)
    if isinstance(a, ConvexCombo):
        return a.lam == b.lam and same_expr(a.left, b.left) and same_expr(a.right, b.right)
    if isinstance(a, RetractCompose):
        return (
            a.eta == b.eta
            and np.array_equal(a.x0, b.x0)
            and same_expr(a.inner, b.inner)
        )
    if isinstance(a, Translate):
        return np.array_equal(a.offset, b.offset) and same_expr(a.inner, b.inner)
    return False


# evaluation


def radial_retraction(
    xs: np.ndarray, eta: float, x0: np.ndarray, tag: NormTag
) -> np.ndarray:
    """``R_{eta,x0}`` on a batch of points.

    Points with ``||x - x0|| <= eta`` collapse to ``x0``; the others move
    ``eta`` towards ``x0`` along their ray.
    """
    diff = xs - x0
    dist = batch_norm(tag, diff)
    out = np.broadcast_to(x0, xs.shape).copy()
    far = dist > eta
    out[far] = xs[far] - eta * diff[far] / dist[far, np.newaxis]
    return out


def _grid_lookup(grid: Grid, xs: np.ndarray) -> np.ndarray:
    gaps = np.max(np.abs(xs[:, np.newaxis, :] - grid.points[np.newaxis, :, :]), axis=-1)
    nearest = np.argmin(gaps, axis=1)
    misses = gaps[np.arange(xs.shape[0]), nearest] > GRID_MATCH_TOL
    if np.any(misses):
        first = xs[np.flatnonzero(misses)[0]]
        raise ExtremalError(
            f"grid mapping is only defined on its sample set; {first.tolist()} is not a sample"
        )
    return grid.values[nearest]


def evaluate_batch(f: MappingExpr, xs: np.ndarray) -> np.ndarray:
    """Evaluate ``f`` on the rows of ``xs`` (no ball check)."""
    if isinstance(f, Linear):
        return xs @ f.matrix.T
    if isinstance(f, Affine):
        return xs @ f.matrix.T + f.offset
    if isinstance(f, Grid):
        return _grid_lookup(f, xs)
    if isinstance(f, ConvexCombo):
        return (1.0 - f.lam) * evaluate_batch(f.left, xs) + f.lam * evaluate_batch(f.right, xs)
    if isinstance(f, RetractCompose):
        return evaluate_batch(
            f.inner, radial_retraction(xs, f.eta, f.x0, f.space.norm_tag)
        )
    if isinstance(f, Translate):
        return evaluate_batch(f.inner, xs) + f.offset
    raise ExtremalError(f"unknown mapping node {type(f).__name__}")


def evaluate(f: MappingExpr, x: Sequence[float], tol: float = DEFAULT_TOL) -> np.ndarray:
    vec = f.space.vector(x)
    check_in_ball(f.space, vec, tol)
    return evaluate_batch(f, vec[np.newaxis, :])[0]


# structure helpers


def affine_parts(f: MappingExpr) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """``(A, b)`` with ``f(x) = A x + b`` when the tree is affine, else None."""
    if isinstance(f, Linear):
        return np.array(f.matrix), np.zeros(f.space.dim)
    if isinstance(f, Affine):
        return np.array(f.matrix), np.array(f.offset)
    if isinstance(f, Translate):
        inner = affine_parts(f.inner)
        if inner is None:
            return None
        return inner[0], inner[1] + f.offset
    if isinstance(f, ConvexCombo):
        left, right = affine_parts(f.left), affine_parts(f.right)
        if left is None or right is None:
            return None
        return (
            (1.0 - f.lam) * left[0] + f.lam * right[0],
            (1.0 - f.lam) * left[1] + f.lam * right[1],
        )
    return None


def from_affine(space: SpaceContext, A: np.ndarray, b: np.ndarray) -> MappingExpr:
    if not np.any(b):
        return Linear(space, A)
    return Affine(space, A, b)


def top_grid(f: MappingExpr) -> Optional[Grid]:
    """The first grid reached without passing through a retraction."""
    if isinstance(f, Grid):
        return f
    if isinstance(f, RetractCompose):
        return None
    for child in children(f):
        found = top_grid(child)
        if found is not None:
            return found
    return None


@dataclass(frozen=True)
class SamplingBudget:
    samples: int = 256
    seed: int = 0


def domain_samples(f: MappingExpr, budget: Optional[SamplingBudget] = None) -> np.ndarray:
    """Points on which ``f`` can be evaluated."""
    grid = top_grid(f)
    if grid is not None:
        return np.array(grid.points)
    budget = budget or SamplingBudget()
    return ball_samples(f.space, budget.samples, make_rng(budget.seed))


def _same_sample_set(a: np.ndarray, b: np.ndarray) -> Optional[np.ndarray]:
    """Permutation ``p`` with ``b[p] == a`` if the sets coincide, else None."""
    if a.shape != b.shape:
        return None
    gaps = np.max(np.abs(a[:, np.newaxis, :] - b[np.newaxis, :, :]), axis=-1)
    order = np.argmin(gaps, axis=1)
    if np.any(gaps[np.arange(a.shape[0]), order] > GRID_MATCH_TOL):
        return None
    if np.unique(order).size != order.size:
        return None
    return order


def post_compose_affine(f: MappingExpr, M: np.ndarray, c: np.ndarray) -> MappingExpr:
    """The mapping ``x -> M f(x) + c``."""
    space = f.space
    M = np.asarray(M, dtype=float)
    c = np.asarray(c, dtype=float)
    if isinstance(f, Grid):
        return Grid(space, f.points, f.values @ M.T + c)
    if isinstance(f, ConvexCombo):
        return ConvexCombo(
            space, f.lam, post_compose_affine(f.left, M, c), post_compose_affine(f.right, M, c)
        )
    if isinstance(f, RetractCompose):
        return RetractCompose(space, post_compose_affine(f.inner, M, c), f.eta, f.x0)
    if isinstance(f, Translate):
        return Translate(
            space, post_compose_affine(f.inner, M, np.zeros(space.dim)), M @ f.offset + c
        )
    parts = affine_parts(f)
    if parts is None:
        raise ExtremalError(f"cannot compose with node {type(f).__name__}")
    return from_affine(space, M @ parts[0], M @ parts[1] + c)


def combine(
    space: SpaceContext,
    coeffs: Sequence[float],
    exprs: Sequence[MappingExpr],
    samples: Optional[np.ndarray] = None,
) -> MappingExpr:
    """The linear combination ``sum_i coeffs[i] * exprs[i]``.

    Affine trees fold into one node and grids on a shared sample set fold into
    one grid; two non-negative weights summing to one give a ``ConvexCombo``.
    Anything else is materialised as a grid on ``samples``.
    """
    if len(coeffs) != len(exprs) or not exprs:
        raise ExtremalError("combine needs one coefficient per mapping")
    coeffs = [float(c) for c in coeffs]
    parts = [affine_parts(e) for e in exprs]
    if all(p is not None for p in parts):
        A = sum(c * p[0] for c, p in zip(coeffs, parts))
        b = sum(c * p[1] for c, p in zip(coeffs, parts))
        return from_affine(space, A, b)
    if all(isinstance(e, Grid) for e in exprs):
        base = exprs[0].points
        values = np.zeros_like(exprs[0].values)
        for c, e in zip(coeffs, exprs):
            order = _same_sample_set(base, e.points)
            if order is None:
                break
            values = values + c * e.values[order]
        else:
            return Grid(space, base, values)
    if len(exprs) == 2 and min(coeffs) >= 0.0 and abs(sum(coeffs) - 1.0) <= 1e-15:
        return ConvexCombo(space, coeffs[1], exprs[0], exprs[1])
    if samples is None:
        grids = [grid for grid in map(top_grid, exprs) if grid is not None]
        if not grids:
            raise ExtremalError("combination is not representable without a sample set")
        samples = np.array(grids[0].points)
    values = sum(c * evaluate_batch(e, samples) for c, e in zip(coeffs, exprs))
    return Grid(space, samples, values)


# Lipschitz constants


@dataclass(frozen=True, eq=False)
class LipschitzReport:
    lower: float
    upper: float
    exact: bool
    witness_pair: Tuple[np.ndarray, np.ndarray]
    method: str


def _pair_ratios(
    tag: NormTag, xs: np.ndarray, ys: np.ndarray, fx: np.ndarray, fy: np.ndarray
) -> np.ndarray:
    dx = batch_norm(tag, xs - ys)
    df = batch_norm(tag, fx - fy)
    safe = np.where(dx > 0, dx, 1.0)
    return np.where(dx > 0, df / safe, 0.0)


def _all_pairs(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    i, j = np.triu_indices(points.shape[0], 1)
    return i, j


def _linear_witness(space: SpaceContext, A: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if space.norm_tag == NormTag.LINF:
        row = A[int(np.argmax(np.sum(np.abs(A), axis=1)))]
        x = np.where(row >= 0, 1.0, -1.0)
    elif space.norm_tag == NormTag.L1:
        x = np.zeros(space.dim)
        x[int(np.argmax(np.sum(np.abs(A), axis=0)))] = 1.0
    else:
        x = np.linalg.svd(A)[2][0]
    return x, -x


def _lipschitz_upper(f: MappingExpr) -> float:
    parts = affine_parts(f)
    if parts is not None:
        return matrix_norm(f.space, parts[0])
    if isinstance(f, Grid):
        i, j = _all_pairs(f.points)
        if i.size == 0:
            return 0.0
        ratios = _pair_ratios(
            f.space.norm_tag, f.points[i], f.points[j], f.values[i], f.values[j]
        )
        return float(np.max(ratios))
    if isinstance(f, ConvexCombo):
        return (1.0 - f.lam) * _lipschitz_upper(f.left) + f.lam * _lipschitz_upper(f.right)
    if isinstance(f, (RetractCompose, Translate)):
        # lip(R_{eta,x0}) <= 1 and translations are isometries
        return _lipschitz_upper(f.inner)
    raise ExtremalError(f"unknown mapping node {type(f).__name__}")


def _candidate_pairs(f: MappingExpr, samples: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    i, j = _all_pairs(samples)
    xs, ys = [samples[i]], [samples[j]]
    stack = [f]
    while stack:
        node = stack.pop()
        stack.extend(children(node))
        parts = affine_parts(node)
        if parts is not None and top_grid(f) is None:
            x, y = _linear_witness(f.space, parts[0])
            xs.append(x[np.newaxis, :])
            ys.append(y[np.newaxis, :])
        if isinstance(node, RetractCompose) and top_grid(f) is None:
            diff = samples - node.x0
            dist = batch_norm(f.space.norm_tag, diff)
            far = dist > node.eta
            if np.any(far):
                scale = (node.eta + (dist[far] - node.eta) / 2) / dist[far]
                xs.append(samples[far])
                ys.append(node.x0 + diff[far] * scale[:, np.newaxis])
    return np.vstack(xs), np.vstack(ys)


def lipschitz_bounds(f: MappingExpr, budget: Optional[SamplingBudget] = None) -> LipschitzReport:
    """Certified lower bound (with its witness pair) and an upper bound for lip(f).

    Affine trees and grids are exact. Other trees get the calculus upper
    bound and a sampled lower bound.
    """
    tag = f.space.norm_tag
    parts = affine_parts(f)
    if parts is not None:
        value = matrix_norm(f.space, parts[0])
        return LipschitzReport(value, value, True, _linear_witness(f.space, parts[0]), "EXACT")
    if isinstance(f, Grid):
        if f.points.shape[0] < 2:
            raise ExtremalError("a grid mapping needs at least 2 samples for a Lipschitz bound")
        i, j = _all_pairs(f.points)
        ratios = _pair_ratios(tag, f.points[i], f.points[j], f.values[i], f.values[j])
        k = int(np.argmax(ratios))
        value = float(ratios[k])
        return LipschitzReport(
            value, value, True, (np.array(f.points[i[k]]), np.array(f.points[j[k]])), "EXACT"
        )

    upper = _lipschitz_upper(f)
    samples = domain_samples(f, budget)
    xs, ys = _candidate_pairs(f, samples)
    ratios = _pair_ratios(tag, xs, ys, evaluate_batch(f, xs), evaluate_batch(f, ys))
    k = int(np.argmax(ratios))
    sampled = float(ratios[k])
    if sampled > upper + DEFAULT_TOL * max(1.0, upper):
        raise CertificateError(
            f"sampled ratio {sampled:.12g} exceeds the calculus upper bound {upper:.12g}"
        )
    lower = min(sampled, upper)
    logger.debug("lipschitz bounds [%g, %g] from %d pairs", lower, upper, ratios.size)
    return LipschitzReport(lower, upper, False, (xs[k], ys[k]), f"SAMPLED({samples.shape[0]})")


class ContractionClass(str, Enum):
    STRICT_CONTRACTION = "STRICT_CONTRACTION"
    LIP_ONE = "LIP_ONE"
    EXPANSIVE = "EXPANSIVE"
    UNDETERMINED = "UNDETERMINED"


def classify_contraction(
    f: MappingExpr, budget: Optional[SamplingBudget] = None, tol: float = DEFAULT_TOL
) -> ContractionClass:
    report = lipschitz_bounds(f, budget)
    if report.upper < 1 - tol:
        return ContractionClass.STRICT_CONTRACTION
    if report.lower > 1 + tol:
        return ContractionClass.EXPANSIVE
    if report.lower >= 1 - tol and report.upper <= 1 + tol:
        return ContractionClass.LIP_ONE
    return ContractionClass.UNDETERMINED


# self-map verification


def affine_sup(space: SpaceContext, A: np.ndarray, b: np.ndarray) -> Optional[float]:
    """``sup_{x in C} ||A x + b||`` in closed form, None where unavailable."""
    if space.norm_tag == NormTag.LINF:
        return float(np.max(np.sum(np.abs(A), axis=1) + np.abs(b)))
    if space.norm_tag == NormTag.L1:
        cols = np.vstack([A.T + b, -A.T + b])
        return float(np.max(np.sum(np.abs(cols), axis=1)))
    if not np.any(b):
        return matrix_norm(space, A)
    return None


@dataclass(frozen=True)
class SelfMapReport:
    ok: bool
    lipschitz: float
    max_norm: float
    method: str


def verify_self_map(
    f: MappingExpr,
    samples: Optional[np.ndarray] = None,
    tol: float = MEMBERSHIP_TOL,
    budget: Optional[SamplingBudget] = None,
) -> SelfMapReport:
    """Check that ``f`` is a nonexpansive self-map of C."""
    parts = affine_parts(f)
    if parts is not None:
        lip = matrix_norm(f.space, parts[0])
        sup = affine_sup(f.space, parts[0], parts[1])
        if sup is not None:
            return SelfMapReport(lip <= 1 + tol and sup <= 1 + tol, lip, sup, "EXACT")
    if samples is None:
        samples = domain_samples(f, budget)
    values = evaluate_batch(f, samples)
    max_norm = float(np.max(batch_norm(f.space.norm_tag, values)))
    i, j = _all_pairs(samples)
    dx = batch_norm(f.space.norm_tag, samples[i] - samples[j])
    df = batch_norm(f.space.norm_tag, values[i] - values[j])
    excess = float(np.max(df - dx)) if i.size else 0.0
    ratios = _pair_ratios(f.space.norm_tag, samples[i], samples[j], values[i], values[j])
    lip = float(np.max(ratios)) if i.size else 0.0
    method = "EXACT" if isinstance(f, Grid) else f"SAMPLED({samples.shape[0]})"
    return SelfMapReport(excess <= tol and max_norm <= 1 + tol, lip, max_norm, method)


# d_infinity


@dataclass(frozen=True, eq=False)
class DistanceReport:
    value: float
    exact: bool
    attaining_point: Optional[np.ndarray]
    upper: float
    method: str


def _distance_upper(f: MappingExpr, g: MappingExpr) -> float:
    if same_expr(f, g):
        return 0.0
    bounds = [2.0]
    for a, b in ((f, g), (g, f)):
        if isinstance(a, RetractCompose) and same_expr(a.inner, b):
            # ||g(R x) - g(x)|| <= lip(g) ||R x - x|| <= lip(g) eta
            bounds.append(a.eta * _lipschitz_upper(b))
        if isinstance(a, Translate) and same_expr(a.inner, b):
            bounds.append(float(batch_norm(a.space.norm_tag, a.offset)))
        if isinstance(a, ConvexCombo):
            bounds.append(
                (1.0 - a.lam) * _distance_upper(a.left, b) + a.lam * _distance_upper(a.right, b)
            )
    pf, pg = affine_parts(f), affine_parts(g)
    if pf is not None and pg is not None:
        D, c = pf[0] - pg[0], pf[1] - pg[1]
        bounds.append(matrix_norm(f.space, D) + float(batch_norm(f.space.norm_tag, c)))
    return min(bounds)


def _affine_argsup(space: SpaceContext, D: np.ndarray, c: np.ndarray) -> np.ndarray:
    if space.norm_tag == NormTag.LINF:
        i = int(np.argmax(np.sum(np.abs(D), axis=1) + np.abs(c)))
        direction = 1.0 if c[i] >= 0 else -1.0
        return np.where(D[i] >= 0, direction, -direction)
    if space.norm_tag == NormTag.L1:
        cols = np.vstack([D.T + c, -D.T + c])
        k = int(np.argmax(np.sum(np.abs(cols), axis=1)))
        x = np.zeros(space.dim)
        x[k % space.dim] = 1.0 if k < space.dim else -1.0
        return x
    return _linear_witness(space, D)[0]


def distance_infty(
    f: MappingExpr,
    g: MappingExpr,
    budget: Optional[SamplingBudget] = None,
    samples: Optional[np.ndarray] = None,
) -> DistanceReport:
    """``d_inf(f, g) = sup_{x in C} ||f(x) - g(x)||``.

    Exact for affine pairs (closed form) and for mappings restricted to a grid
    sample set; otherwise a sampled lower bound plus a structural upper bound.
    """
    if f.space != g.space:
        raise DimensionMismatchError("mappings act on different spaces")
    space = f.space
    pf, pg = affine_parts(f), affine_parts(g)
    if pf is not None and pg is not None and samples is None:
        D, c = pf[0] - pg[0], pf[1] - pg[1]
        value = affine_sup(space, D, c)
        if value is not None:
            return DistanceReport(value, True, _affine_argsup(space, D, c), value, "EXACT")

    grid_f, grid_g = top_grid(f), top_grid(g)
    if samples is None and grid_f is not None and grid_g is not None:
        if _same_sample_set(grid_f.points, grid_g.points) is None:
            raise ExtremalError("incompatible grids: the sample sets have no common refinement")
    exact = False
    if samples is None:
        domain = grid_f if grid_f is not None else grid_g
        if domain is not None:
            samples, exact = np.array(domain.points), True
        else:
            samples = domain_samples(f, budget)
    gaps = batch_norm(space.norm_tag, evaluate_batch(f, samples) - evaluate_batch(g, samples))
    k = int(np.argmax(gaps))
    value = float(gaps[k])
    if exact:
        return DistanceReport(value, True, np.array(samples[k]), value, "EXACT")
    upper = max(_distance_upper(f, g), value)
    return DistanceReport(value, False, np.array(samples[k]), upper, f"SAMPLED({samples.shape[0]})")


# isometry and rigidity probes


class PairCheck(NamedTuple):
    ok: bool
    violation: Optional[Tuple[np.ndarray, np.ndarray]]
    gap: float


def is_isometry_on_pairs(
    f: MappingExpr,
    pairs: Sequence[Tuple[Sequence[float], Sequence[float]]],
    tol: float = DEFAULT_TOL,
) -> PairCheck:
    """Check ``||f(x) - f(y)|| == ||x - y||`` on every pair; report the first violation."""
    if not pairs:
        return PairCheck(True, None, 0.0)
    xs = f.space.points([p[0] for p in pairs])
    ys = f.space.points([p[1] for p in pairs])
    for arr in (xs, ys):
        bad = np.flatnonzero(batch_norm(f.space.norm_tag, arr) > 1 + tol)
        if bad.size:
            raise OutsideBallError(f"pair point {arr[bad[0]].tolist()} lies outside the ball")
    gaps = np.abs(
        batch_norm(f.space.norm_tag, evaluate_batch(f, xs) - evaluate_batch(f, ys))
        - batch_norm(f.space.norm_tag, xs - ys)
    )
    worst = float(np.max(gaps))
    violating = np.flatnonzero(gaps > tol)
    if violating.size:
        k = int(violating[0])
        return PairCheck(False, (xs[k], ys[k]), worst)
    return PairCheck(True, None, worst)


@dataclass(frozen=True, eq=False)
class RigidityViolation:
    base_point: np.ndarray
    t: float
    magnitude: float


def directional_rigidity_check(
    g: MappingExpr,
    e: Sequence[float],
    base_points: Sequence[Sequence[float]],
    t_values: Sequence[float],
    tol: float = DEFAULT_TOL,
) -> List[RigidityViolation]:
    """All probes ``(x, t)`` with ``||g(x + t e) - g(x) - t e|| > tol``.

    ``e`` must be an almost exposed point of C; an empty result certifies the
    translation identity ``g(x + t e) = g(x) + t e`` on the probe set.
    """
    space = g.space
    direction = space.vector(e)
    if not classify_point(space, direction, tol).almost_exposed:
        raise HypothesisError(f"{direction.tolist()} is not an almost exposed point")
    bases = space.points(base_points)
    violations: List[RigidityViolation] = []
    for x in bases:
        for t in t_values:
            moved = x + float(t) * direction
            if batch_norm(space.norm_tag, moved) > 1 + tol:
                raise OutsideBallError(f"probe point {moved.tolist()} escapes the ball")
            images = evaluate_batch(g, np.vstack([moved, x]))
            magnitude = float(
                batch_norm(space.norm_tag, images[0] - images[1] - float(t) * direction)
            )
            if magnitude > tol:
                violations.append(RigidityViolation(np.array(x), float(t), magnitude))
    return violations


def materialize(f: MappingExpr, points: np.ndarray) -> Grid:
    """Restrict ``f`` to a sample set."""
    return Grid(f.space, points, evaluate_batch(f, points))


__all__ = [
    "Affine",
    "ConvexCombo",
    "ContractionClass",
    "DistanceReport",
    "Grid",
    "Linear",
    "LipschitzReport",
    "MappingExpr",
    "NodeKind",
    "PairCheck",
    "RetractCompose",
    "RigidityViolation",
    "SamplingBudget",
    "SelfMapReport",
    "Translate",
    "affine_parts",
    "affine_sup",
    "classify_contraction",
    "combine",
    "constant_map",
    "directional_rigidity_check",
    "distance_infty",
    "domain_samples",
    "evaluate",
    "evaluate_batch",
    "identity",
    "is_isometry_on_pairs",
    "lipschitz_bounds",
    "materialize",
    "post_compose_affine",
    "radial_retraction",
    "same_expr",
    "verify_self_map",
    "zero_map",
]
