"""Finite-dimensional normed-space kernel.

Norms, operator norms, extreme points and normal cones of the unit balls of
``l1^n``, ``l2^n`` and ``linf^n``, plus the exposed / almost-exposed taxonomy of
ball points. Everything here is a pure function of immutable inputs.
"""
import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import svdvals

from .errors import (
    DimensionMismatchError,
    ExtremalError,
    HypothesisError,
    OutsideBallError,
)

DEFAULT_TOL = 1e-9
L1_CONE_MAX_DIM = 20
CUBE_VERTEX_MAX_DIM = 12


class NormTag(str, Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"


@dataclass(frozen=True)
class SpaceContext:
    """A space ``(R^dim, ||.||_p)`` together with its closed unit ball C."""

    dim: int
    norm_tag: NormTag

    def __post_init__(self) -> None:
        if int(self.dim) != self.dim or self.dim < 1:
            raise DimensionMismatchError(f"dim must be a positive integer, got {self.dim}")
        object.__setattr__(self, "norm_tag", NormTag(self.norm_tag))

    @property
    def dual_tag(self) -> NormTag:
        return {NormTag.L1: NormTag.LINF, NormTag.LINF: NormTag.L1}.get(
            self.norm_tag, NormTag.L2
        )

    def vector(self, x: Sequence[float]) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        if arr.shape != (self.dim,):
            raise DimensionMismatchError(
                f"expected a vector of length {self.dim}, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ExtremalError("vector entries must be finite")
        return arr

    def points(self, xs: Sequence[Sequence[float]]) -> np.ndarray:
        arr = np.asarray(xs, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != self.dim:
            raise DimensionMismatchError(
                f"expected points of dimension {self.dim}, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ExtremalError("point entries must be finite")
        return arr


def batch_norm(tag: NormTag, xs: np.ndarray) -> np.ndarray:
    """Norm along the last axis."""
    if tag == NormTag.L1:
        return np.sum(np.abs(xs), axis=-1)
    if tag == NormTag.LINF:
        return np.max(np.abs(xs), axis=-1)
    return np.sqrt(np.sum(xs * xs, axis=-1))


def norm(space: SpaceContext, x: Sequence[float]) -> float:
    return float(batch_norm(space.norm_tag, space.vector(x)))


def dual_norm(space: SpaceContext, phi: Sequence[float]) -> float:
    """``sup_{z in C} phi(z)`` for the standard pairing."""
    return float(batch_norm(space.dual_tag, space.vector(phi)))


def check_in_ball(space: SpaceContext, x: np.ndarray, tol: float) -> float:
    nx = float(batch_norm(space.norm_tag, x))
    if nx > 1 + tol:
        raise OutsideBallError(f"point {x.tolist()} has norm {nx} > 1")
    return nx


def operator_norm(
    space_in: SpaceContext, space_out: SpaceContext, A: Sequence[Sequence[float]]
) -> float:
    """Induced norm of ``A`` as a map ``space_in -> space_out``.

    L1 and LINF are exact (max column / row l1 sums). L2 is the largest
    singular value from LAPACK, which stays accurate when the top singular
    values are clustered.
    """
    matrix = np.asarray(A, dtype=float)
    if matrix.shape != (space_out.dim, space_in.dim):
        raise DimensionMismatchError(
            f"matrix of shape {matrix.shape} does not map dim {space_in.dim} "
            f"to dim {space_out.dim}"
        )
    if space_in.norm_tag != space_out.norm_tag:
        raise ExtremalError("operator norms are only supported between equal norm tags")
    tag = space_in.norm_tag
    if tag == NormTag.LINF:
        return float(np.max(np.sum(np.abs(matrix), axis=1)))
    if tag == NormTag.L1:
        return float(np.max(np.sum(np.abs(matrix), axis=0)))
    if not np.all(np.isfinite(matrix)):
        raise ExtremalError("matrix entries must be finite")
    return float(svdvals(matrix)[0]) if matrix.size else 0.0


def matrix_norm(space: SpaceContext, A: np.ndarray) -> float:
    return operator_norm(space, space, A)


def is_extreme_point(space: SpaceContext, x: Sequence[float], tol: float = DEFAULT_TOL) -> bool:
    vec = space.vector(x)
    nx = check_in_ball(space, vec, tol)
    magnitudes = np.abs(vec)
    if space.norm_tag == NormTag.L1:
        support = magnitudes > tol
        return bool(np.count_nonzero(support) == 1 and magnitudes.max() >= 1 - tol)
    if space.norm_tag == NormTag.LINF:
        return bool(np.all(magnitudes >= 1 - tol))
    return abs(nx - 1.0) <= tol


def extreme_points(space: SpaceContext) -> np.ndarray:
    """The extreme points of C (signed unit vectors / cube vertices).

    For L2 the sphere is infinite; the signed unit vectors are returned as
    representatives.
    """
    if space.norm_tag == NormTag.LINF:
        if space.dim > CUBE_VERTEX_MAX_DIM:
            raise ExtremalError(
                f"cube vertices are enumerated up to dim {CUBE_VERTEX_MAX_DIM}"
            )
        return np.array(list(itertools.product((-1.0, 1.0), repeat=space.dim)))
    eye = np.eye(space.dim)
    return np.vstack([eye, -eye])


@dataclass(frozen=True, eq=False)
class NormalCone:
    base_point: np.ndarray
    generators: np.ndarray

    def rank(self, tol: float = DEFAULT_TOL) -> int:
        return int(np.linalg.matrix_rank(self.generators, tol=tol))

    def support_gap(self, space: SpaceContext) -> float:
        """Largest ``|phi(x) - sup_C phi|`` over the generators."""
        values = self.generators @ self.base_point
        sups = batch_norm(space.dual_tag, self.generators)
        return float(np.max(np.abs(values - sups)))


def normal_cone_generators(
    space: SpaceContext, x: Sequence[float], tol: float = DEFAULT_TOL
) -> NormalCone:
    vec = space.vector(x)
    nx = check_in_ball(space, vec, tol)
    if nx < 1 - tol:
        raise HypothesisError(f"{vec.tolist()} is an interior point: no supporting hyperplane")

    if space.norm_tag == NormTag.LINF:
        active = np.flatnonzero(np.abs(vec) >= 1 - tol)
        gens = np.zeros((active.size, space.dim))
        gens[np.arange(active.size), active] = np.sign(vec[active])
    elif space.norm_tag == NormTag.L1:
        if space.dim > L1_CONE_MAX_DIM:
            raise ExtremalError(f"l1 normal cones are enumerated up to dim {L1_CONE_MAX_DIM}")
        free = np.flatnonzero(np.abs(vec) <= tol)
        base = np.where(np.abs(vec) > tol, np.sign(vec), 0.0)
        rows = []
        for signs in itertools.product((-1.0, 1.0), repeat=free.size):
            psi = base.copy()
            psi[free] = signs
            rows.append(psi)
        gens = np.array(rows)
    else:
        gens = (vec / nx)[np.newaxis, :]
    return NormalCone(base_point=vec, generators=gens)


class PointTag(str, Enum):
    INTERIOR = "INTERIOR"
    EXPOSED = "EXPOSED"
    ALMOST_EXPOSED_ONLY = "ALMOST_EXPOSED_ONLY"
    BOUNDARY_NOT_ALMOST_EXPOSED = "BOUNDARY_NOT_ALMOST_EXPOSED"


@dataclass(frozen=True, eq=False)
class PointClass:
    tag: PointTag
    extreme: bool
    exposed: bool
    almost_exposed: bool
    cone: Optional[NormalCone] = field(default=None)


def classify_point(
    space: SpaceContext, x: Sequence[float], tol: float = DEFAULT_TOL
) -> PointClass:
    """Classify a point of C as interior, exposed or (almost) exposed.

    The two predicates are computed independently; exposed implies almost
    exposed but the converse is never assumed.
    """
    vec = space.vector(x)
    nx = check_in_ball(space, vec, tol)
    extreme = is_extreme_point(space, vec, tol)
    if nx < 1 - tol:
        return PointClass(PointTag.INTERIOR, extreme, False, False)

    cone = normal_cone_generators(space, vec, tol)
    if space.norm_tag == NormTag.L2:
        # strictly convex: the supporting hyperplane meets C in x alone
        exposed = almost_exposed = True
    else:
        exposed = extreme
        almost_exposed = cone.rank(tol) == space.dim
    if exposed:
        tag = PointTag.EXPOSED
    elif almost_exposed:
        tag = PointTag.ALMOST_EXPOSED_ONLY
    else:
        tag = PointTag.BOUNDARY_NOT_ALMOST_EXPOSED
    return PointClass(tag, extreme, exposed, almost_exposed, cone)


# sampling


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; the only source of randomness in the package."""
    return np.random.Generator(np.random.Philox(int(seed)))


def _random_directions(space: SpaceContext, count: int, rng: np.random.Generator) -> np.ndarray:
    raw = rng.standard_normal((count, space.dim))
    norms = batch_norm(space.norm_tag, raw)
    norms[norms == 0.0] = 1.0
    return raw / norms[:, np.newaxis]


def boundary_samples(space: SpaceContext, count: int, rng: np.random.Generator) -> np.ndarray:
    return _random_directions(space, count, rng)


def ball_samples(
    space: SpaceContext,
    count: int,
    rng: np.random.Generator,
    boundary_fraction: float = 0.5,
) -> np.ndarray:
    """Sample points of C: extreme points first, then boundary and interior points."""
    try:
        extremes = extreme_points(space)
    except ExtremalError:
        extremes = np.vstack([np.eye(space.dim), -np.eye(space.dim)])
    extremes = np.vstack([extremes, np.zeros((1, space.dim))])
    remaining = max(count - extremes.shape[0], 0)
    n_boundary = int(round(remaining * boundary_fraction))
    boundary = _random_directions(space, n_boundary, rng)
    interior = _random_directions(space, remaining - n_boundary, rng)
    radii = rng.random(remaining - n_boundary) ** (1.0 / space.dim)
    interior = interior * radii[:, np.newaxis]
    return np.vstack([extremes, boundary, interior])[: max(count, 2)]


def probe_grid(space: SpaceContext) -> np.ndarray:
    """Fixed evaluation grid used for linear-independence checks of mappings."""
    eye = np.eye(space.dim)
    rows: List[np.ndarray] = [np.zeros((1, space.dim)), eye, -eye]
    if space.norm_tag == NormTag.LINF and space.dim <= CUBE_VERTEX_MAX_DIM:
        rows.append(extreme_points(space))
    for i, j in itertools.combinations(range(space.dim), 2):
        rows.append(((eye[i] + eye[j]) / 2)[np.newaxis, :])
        rows.append(((eye[i] - eye[j]) / 2)[np.newaxis, :])
    return np.vstack(rows)


def lattice_grid(space: SpaceContext, points_per_axis: int) -> np.ndarray:
    """Uniform lattice of ``[-1, 1]^dim`` restricted to C."""
    if points_per_axis < 2:
        raise ExtremalError("a lattice needs at least two points per axis")
    axis = np.linspace(-1.0, 1.0, points_per_axis)
    grid = np.array(list(itertools.product(axis, repeat=space.dim)))
    inside = batch_norm(space.norm_tag, grid) <= 1 + 1e-12
    return grid[inside]
