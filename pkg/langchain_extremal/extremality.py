"""Extremality of nonexpansive mappings on ``linf^n``.

A linear map of the cube is extremal exactly when every row is a signed unit
vector. ``classify_linear_extremal`` decides this and, for non-extremal maps,
hands back a machine-checked decomposition. The remaining helpers cover the
boundary-pinning side: Urysohn pairs, pinning checks, the contradiction
witness for maps that pin the boundary without being the identity, and a
brute-force extremality oracle for grid mappings.
"""
import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.csgraph import csgraph_from_dense, shortest_path

from .errors import (
    DimensionMismatchError,
    ExtremalError,
    HypothesisError,
    NotNonexpansiveError,
    OutsideBallError,
    WitnessFailureError,
)
from .mappings import (
    Affine,
    Grid,
    Linear,
    MappingExpr,
    affine_parts,
    affine_sup,
    distance_infty,
    evaluate_batch,
    identity,
    post_compose_affine,
)
from .normed import (
    DEFAULT_TOL,
    NormTag,
    SpaceContext,
    batch_norm,
    check_in_ball,
    is_extreme_point,
    matrix_norm,
)
from .pf_geometry import RESIDUAL_TOL, DecompositionCertificate

logger = logging.getLogger(__name__)

ORACLE_MAX_DIM = 12


def _require_linf(space: SpaceContext) -> None:
    if space.norm_tag != NormTag.LINF:
        raise ExtremalError(f"this construction lives on linf^n, got {space.norm_tag.value}")


@dataclass(frozen=True, eq=False)
class RowAnalysis:
    index: int
    functional: np.ndarray
    norm: float
    support: Tuple[int, ...]
    extreme: bool


@dataclass(frozen=True)
class Form7Data:
    """Rows ``signs[i] * e_{perm[i]}``; ``fibers[k]`` lists the rows reading coordinate ``k``."""

    perm: Tuple[int, ...]
    signs: Tuple[int, ...]
    fibers: Dict[int, Tuple[int, ...]]


@dataclass(frozen=True, eq=False)
class LinearExtremalityVerdict:
    extremal: bool
    row_analyses: List[RowAnalysis]
    certificate: Optional[DecompositionCertificate] = None
    form7_data: Optional[Form7Data] = None


def _with_row(A: np.ndarray, i: int, row: np.ndarray) -> np.ndarray:
    out = np.array(A, dtype=float)
    out[i] = row
    return out


def classify_linear_extremal(
    space: SpaceContext, A: Sequence[Sequence[float]], tol: float = DEFAULT_TOL
) -> LinearExtremalityVerdict:
    """Decide whether the linear map ``A`` is an extreme point of M on ``linf^n``.

    Extremal iff every row is a signed standard unit vector. Otherwise the
    first offending row yields a decomposition ``A = (1 - lam) g + lam h``:

    * zero row: ``g``/``h`` carry ``+e_1``/``-e_1`` there, ``lam = 1/2``;
    * ``||row||_1 = mu < 1``: ``g`` carries ``row / mu``, ``h`` a zero row, ``lam = 1 - mu``;
    * unit row with two or more nonzero entries, ``xi = row[j]`` the first one:
      ``h`` carries ``sgn(xi) e_j``, ``g`` carries ``(row - xi e_j) / (1 - |xi|)``,
      ``lam = |xi|``.
    """
    _require_linf(space)
    matrix = np.asarray(A, dtype=float)
    if matrix.shape != (space.dim, space.dim):
        raise DimensionMismatchError(
            f"expected a {space.dim}x{space.dim} matrix, got {matrix.shape}"
        )
    op = matrix_norm(space, matrix)
    if op > 1 + tol:
        raise NotNonexpansiveError(f"operator norm {op} exceeds 1")

    row_space = SpaceContext(space.dim, NormTag.L1)
    rows = [
        RowAnalysis(
            index=i,
            functional=np.array(phi),
            norm=float(np.sum(np.abs(phi))),
            support=tuple(int(j) for j in np.flatnonzero(np.abs(phi) > tol)),
            extreme=is_extreme_point(row_space, phi, tol),
        )
        for i, phi in enumerate(matrix)
    ]

    offending = next((row for row in rows if not row.extreme), None)
    if offending is None:
        perm = tuple(row.support[0] for row in rows)
        signs = tuple(int(np.sign(row.functional[row.support[0]])) for row in rows)
        fibers = {
            k: tuple(i for i, p in enumerate(perm) if p == k) for k in sorted(set(perm))
        }
        logger.info("linear map is extremal")
        return LinearExtremalityVerdict(True, rows, None, Form7Data(perm, signs, fibers))

    # rows inside the tolerance band above 1 are scaled back onto the l1 sphere;
    # the scaling defect is added to the residual budget
    scale = np.maximum(np.sum(np.abs(matrix), axis=1), 1.0)
    base = matrix / scale[:, np.newaxis]
    excess = float(np.max(scale)) - 1.0
    i = offending.index
    phi = base[i]
    mu = float(np.sum(np.abs(phi)))
    unit = np.zeros(space.dim)
    if mu == 0.0:
        unit[0] = 1.0
        lam, g_row, h_row = 0.5, unit, -unit
    elif mu < 1 - tol:
        lam, g_row, h_row = 1.0 - mu, phi / mu, np.zeros(space.dim)
    else:
        j = offending.support[0]
        xi = float(phi[j])
        unit[j] = 1.0
        lam = abs(xi)
        h_row = np.sign(xi) * unit
        g_row = (phi - xi * unit) / (1.0 - lam)

    certificate = DecompositionCertificate.build(
        Linear(space, matrix),
        lam,
        Linear(space, _with_row(base, i, g_row)),
        Linear(space, _with_row(base, i, h_row)),
        residual_tol=RESIDUAL_TOL + excess,
    )
    logger.info("row %d is not extreme; certificate with lam=%g", i, lam)
    return LinearExtremalityVerdict(False, rows, certificate, None)


def row_polytope_oracle(A: Sequence[Sequence[float]], tol: float = DEFAULT_TOL) -> bool:
    """Extremality of ``A`` in the product of row l1-balls, by active-facet rank."""
    matrix = np.asarray(A, dtype=float)
    n = matrix.shape[1]
    if n > ORACLE_MAX_DIM:
        raise ExtremalError(f"facet enumeration is limited to dim {ORACLE_MAX_DIM}")
    facets = np.array(list(itertools.product((-1.0, 1.0), repeat=n)))
    for phi in matrix:
        active = facets[facets @ phi >= 1 - tol]
        if active.shape[0] < n or np.linalg.matrix_rank(active) < n:
            return False
    return True


def make_rotation(
    space: SpaceContext, perm: Sequence[int], signs: Sequence[float]
) -> Linear:
    """The signed permutation ``x -> (signs[i] * x[perm[i]])_i``."""
    perm = [int(p) for p in perm]
    if sorted(perm) != list(range(space.dim)):
        raise ExtremalError(f"perm {perm} is not a bijection of 0..{space.dim - 1}")
    signs_arr = np.asarray(signs, dtype=float)
    if signs_arr.shape != (space.dim,) or not np.all(np.abs(signs_arr) == 1.0):
        raise ExtremalError("signs must be a vector of +1/-1")
    matrix = np.zeros((space.dim, space.dim))
    matrix[np.arange(space.dim), perm] = signs_arr
    return Linear(space, matrix)


# boundary pinning


@dataclass(frozen=True, eq=False)
class PinViolation:
    f: np.ndarray
    x: int
    value: float
    expected: float


def verify_pinning(
    F: MappingExpr,
    boundary_samples: Sequence[Tuple[Sequence[float], int]],
    tol: float = DEFAULT_TOL,
) -> List[PinViolation]:
    """Samples ``(f, x)`` with ``|f(x)| = 1`` where ``F(f)(x)`` moves away from ``f(x)``."""
    _require_linf(F.space)
    if not boundary_samples:
        return []
    points = F.space.points([sample[0] for sample in boundary_samples])
    coords = np.array([int(sample[1]) for sample in boundary_samples])
    if np.any(coords < 0) or np.any(coords >= F.space.dim):
        raise DimensionMismatchError("pinning coordinate out of range")
    pinned = points[np.arange(coords.size), coords]
    loose = np.flatnonzero(np.abs(np.abs(pinned) - 1.0) > tol)
    if loose.size:
        raise HypothesisError(
            f"sample {int(loose[0])} has |f(x)| = {abs(pinned[loose[0]])}, not 1"
        )
    images = evaluate_batch(F, points)[np.arange(coords.size), coords]
    return [
        PinViolation(points[k], int(coords[k]), float(images[k]), float(pinned[k]))
        for k in np.flatnonzero(np.abs(images - pinned) > tol)
    ]


def identity_pinning_samples(
    space: SpaceContext, count: int, rng: np.random.Generator
) -> List[Tuple[np.ndarray, int]]:
    """Random cube points with one coordinate pushed to +-1."""
    points = rng.uniform(-1.0, 1.0, size=(count, space.dim))
    coords = rng.integers(0, space.dim, size=count)
    points[np.arange(count), coords] = rng.choice((-1.0, 1.0), size=count)
    return [(points[k], int(coords[k])) for k in range(count)]


class Profile(str, Enum):
    INDICATOR = "INDICATOR"
    TENT = "TENT"


@dataclass(frozen=True, eq=False)
class UrysohnPair:
    f: np.ndarray
    x0: int
    gamma: float
    profile: Profile
    neighbourhood: Tuple[int, ...]
    r: np.ndarray
    g_plus: np.ndarray
    g_minus: np.ndarray

    def defects(self) -> Tuple[float, float, float, float]:
        """Violations of the four defining properties (all zero for a valid pair)."""
        f0 = float(self.f[self.x0])
        off = np.setdiff1d(np.arange(self.f.size), self.neighbourhood)
        drift = np.abs(np.concatenate([self.g_plus[off], self.g_minus[off]]) - np.tile(self.f[off], 2))
        return (
            max(abs(self.g_plus[self.x0] - 1.0), abs(self.g_minus[self.x0] + 1.0)),
            float(np.max(drift, initial=0.0)),
            max(0.0, float(np.max(np.abs(self.f - self.g_plus))) - (1.0 - f0 + self.gamma)),
            max(0.0, float(np.max(np.abs(self.f - self.g_minus))) - (1.0 + f0 + self.gamma)),
        )


def urysohn_pair(
    f: Sequence[float],
    x0: int,
    gamma: float,
    profile: Profile = Profile.INDICATOR,
) -> UrysohnPair:
    """Two perturbations of ``f`` hitting ``+1`` and ``-1`` at ``x0``.

    ``g_plus = f + r (1 - f)`` and ``g_minus = f - r (1 + f)``, where ``r`` is
    supported on ``U = {x : |f(x) - f(x0)| < gamma}`` with ``r(x0) = 1``.
    """
    vec = np.asarray(f, dtype=float)
    if vec.ndim != 1 or not 0 <= x0 < vec.size:
        raise DimensionMismatchError(f"x0={x0} is not an index of f")
    if np.max(np.abs(vec)) > 1.0:
        raise OutsideBallError(f"f has sup norm {np.max(np.abs(vec))} > 1")
    f0 = float(vec[x0])
    if abs(f0) == 1.0:
        raise HypothesisError("f(x0) must not be +-1")
    bound = min(1.0 + f0, 1.0 - f0)
    if not 0.0 < gamma < bound:
        raise HypothesisError(f"gamma must lie in (0, {bound}), got {gamma}")

    spread = np.abs(vec - f0)
    neighbourhood = tuple(int(k) for k in np.flatnonzero(spread < gamma))
    if Profile(profile) == Profile.INDICATOR:
        r = np.zeros(vec.size)
        r[x0] = 1.0
    else:
        r = np.maximum(0.0, 1.0 - spread / gamma)
    g_plus = vec + r * (1.0 - vec)
    g_minus = vec - r * (1.0 + vec)
    full = r == 1.0
    g_plus[full], g_minus[full] = 1.0, -1.0
    return UrysohnPair(vec, int(x0), float(gamma), Profile(profile), neighbourhood, r, g_plus, g_minus)


class Direction(str, Enum):
    PLUS = "PLUS"
    MINUS = "MINUS"


@dataclass(frozen=True, eq=False)
class PinViolationWitness:
    f0: np.ndarray
    x0: int
    gamma: float
    perturbation: UrysohnPair
    member: np.ndarray
    direction: Direction
    lhs: float
    rhs: float


def pin_violation_witness(
    G: MappingExpr, f0: Sequence[float], x0: int, tol: float = DEFAULT_TOL
) -> PinViolationWitness:
    """Pair ``(f0, g)`` on which a boundary-pinning ``G`` with ``G(f0)(x0) != f0(x0)`` expands.

    ``g`` is the Urysohn perturbation of ``f0`` pushed to the pinned value on the
    side opposite to ``G(f0)(x0)``; the returned distances satisfy ``lhs > rhs``.
    """
    _require_linf(G.space)
    vec = G.space.vector(f0)
    check_in_ball(G.space, vec, tol)
    if not 0 <= x0 < vec.size:
        raise DimensionMismatchError(f"x0={x0} is not an index of f0")
    f0x = float(vec[x0])
    if abs(f0x) >= 1.0:
        raise HypothesisError("f0(x0) must lie strictly inside (-1, 1)")
    image = evaluate_batch(G, vec[np.newaxis, :])[0]
    shift = float(image[x0]) - f0x
    if abs(shift) <= tol:
        raise HypothesisError("G agrees with the identity at (f0, x0)")

    gamma = min(abs(shift), 1.0 - f0x, 1.0 + f0x) / 2.0
    pair = urysohn_pair(vec, x0, gamma, Profile.INDICATOR)
    if shift > 0:
        member, direction = pair.g_minus, Direction.MINUS
    else:
        member, direction = pair.g_plus, Direction.PLUS
    moved = evaluate_batch(G, member[np.newaxis, :])[0]
    lhs = float(np.max(np.abs(image - moved)))
    rhs = float(np.max(np.abs(vec - member)))
    if not lhs > rhs:
        raise WitnessFailureError(
            f"expected an expansion but |G(f0) - G(g)| = {lhs} <= {rhs}; "
            "G does not pin the boundary"
        )
    return PinViolationWitness(vec, int(x0), gamma, pair, member, direction, lhs, rhs)


# brute-force oracle for grid mappings


@dataclass(frozen=True, eq=False)
class OracleResult:
    extreme: bool
    direction: Optional[np.ndarray]
    coordinate_slack: np.ndarray


def _coordinate_slack(
    distances: np.ndarray, values: np.ndarray, tol: float
) -> np.ndarray:
    count = values.size
    reach = 1.0 - np.abs(values)
    pair = distances - np.abs(values[:, np.newaxis] - values[np.newaxis, :])
    if np.any(reach < -tol) or np.any(pair < -tol):
        raise NotNonexpansiveError("negative slack: the grid mapping is not nonexpansive")
    dense = np.full((count + 1, count + 1), np.inf)
    dense[:count, :count] = np.maximum(pair, 0.0)
    dense[count, :count] = np.maximum(reach, 0.0)
    graph = csgraph_from_dense(dense, null_value=np.inf)
    dist = shortest_path(graph, method="D", directed=True, indices=count)
    return np.asarray(dist[:count])


def grid_extreme_oracle(f: Grid, tol: float = DEFAULT_TOL) -> OracleResult:
    """Is the grid mapping ``f`` an extreme point of M on its sample set?

    Per coordinate, admissible perturbations ``d`` obey ``|d(x)| <= 1 - |f(x)|``
    and ``|d(x) - d(y)| <= ||x - y|| - |f(x) - f(y)|``. The largest such ``d`` is
    the shortest-path distance from a virtual source linked to every sample by
    its range slack; ``f`` is extreme iff it vanishes for every coordinate.
    """
    if not isinstance(f, Grid):
        raise ExtremalError("the oracle decides grid mappings only")
    _require_linf(f.space)
    distances = batch_norm(
        NormTag.LINF, f.points[:, np.newaxis, :] - f.points[np.newaxis, :, :]
    )
    slack = np.column_stack(
        [_coordinate_slack(distances, f.values[:, k], tol) for k in range(f.space.dim)]
    )
    extreme = bool(np.all(slack <= tol))
    return OracleResult(extreme, None if extreme else slack, slack.max(axis=0))


def perturbation_admissible(f: Grid, d: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
    """Exhaustive check that ``f + d`` and ``f - d`` are nonexpansive self-maps on the samples."""
    i, j = np.triu_indices(f.points.shape[0], 1)
    dx = batch_norm(f.space.norm_tag, f.points[i] - f.points[j])
    for values in (f.values + d, f.values - d):
        if np.any(batch_norm(f.space.norm_tag, values) > 1 + tol):
            return False
        if np.any(batch_norm(f.space.norm_tag, values[i] - values[j]) > dx + tol):
            return False
    return True


# reduction to the identity


def reduce_to_identity(
    iso: MappingExpr,
    cert: DecompositionCertificate,
    samples: Optional[np.ndarray] = None,
    tol: float = DEFAULT_TOL,
) -> DecompositionCertificate:
    """Turn a decomposition of a surjective isometry into one of the identity."""
    parts = affine_parts(iso)
    if parts is None:
        raise HypothesisError("the isometry must be affine")
    A, b = parts
    try:
        inverse = np.linalg.inv(A)
    except np.linalg.LinAlgError as e:
        raise HypothesisError(f"isometry is not invertible: {str(e)}")
    space = iso.space
    forward = affine_sup(space, A, b)
    if (
        matrix_norm(space, A) > 1 + tol
        or matrix_norm(space, inverse) > 1 + tol
        or (forward is not None and forward > 1 + tol)
    ):
        raise HypothesisError("map is not an isometry of the ball onto itself")
    if distance_infty(cert.target, iso, samples=samples).value > RESIDUAL_TOL:
        raise HypothesisError("certificate does not decompose the given isometry")

    shift = -inverse @ b
    return DecompositionCertificate.build(
        identity(space),
        cert.lam,
        post_compose_affine(cert.g, inverse, shift),
        post_compose_affine(cert.h, inverse, shift),
        samples,
    )


# fixtures


def head_scaled_map(space: SpaceContext, lam: float) -> Linear:
    """``x -> (lam x_1, x_1, ..., x_{n-1})``."""
    matrix = np.eye(space.dim, k=-1)
    matrix[0, 0] = lam
    return Linear(space, matrix)


def constant_head_map(space: SpaceContext, lam: float) -> Affine:
    """``x -> (lam, x_1, ..., x_{n-1})``."""
    if abs(lam) > 1.0:
        raise OutsideBallError(f"|lam| = {abs(lam)} > 1")
    offset = np.zeros(space.dim)
    offset[0] = lam
    return Affine(space, np.eye(space.dim, k=-1), offset)


def constant_head_certificate(space: SpaceContext, lam: float) -> DecompositionCertificate:
    """``T_lam = ((1 - lam) / 2) T_{-1} + ((1 + lam) / 2) T_{+1}`` for ``|lam| < 1``."""
    if abs(lam) >= 1.0:
        raise HypothesisError("T_lam is extremal for |lam| = 1")
    return DecompositionCertificate.build(
        constant_head_map(space, lam),
        (1.0 + lam) / 2.0,
        constant_head_map(space, -1.0),
        constant_head_map(space, 1.0),
    )


def duplicate_rows_map(space: SpaceContext) -> Linear:
    """Rows ``(e_1, e_1, e_3, e_3, ...)``: extremal, with two-row fibres, not injective."""
    matrix = np.zeros((space.dim, space.dim))
    matrix[np.arange(space.dim), 2 * (np.arange(space.dim) // 2)] = 1.0
    return Linear(space, matrix)


__all__ = [
    "Direction",
    "Form7Data",
    "LinearExtremalityVerdict",
    "OracleResult",
    "PinViolation",
    "PinViolationWitness",
    "Profile",
    "RowAnalysis",
    "UrysohnPair",
    "classify_linear_extremal",
    "constant_head_certificate",
    "constant_head_map",
    "duplicate_rows_map",
    "grid_extreme_oracle",
    "head_scaled_map",
    "identity_pinning_samples",
    "make_rotation",
    "perturbation_admissible",
    "pin_violation_witness",
    "reduce_to_identity",
    "row_polytope_oracle",
    "urysohn_pair",
    "verify_pinning",
]
