"""Holes in ``P_{f,q}``: porosity witnesses built from the radial retraction.

For ``f`` with Lipschitz constant close to 1 there are nearby points
``x0``, ``y`` on which ``f`` is almost isometric. Composing ``g`` with the
retraction that collapses the ``eta``-ball around ``x0`` gives ``g~`` with
``g~(y) = g~(x0)``, and no mapping within ``alpha * d(g~, g)`` of ``g~`` can take
part in a decomposition of ``f`` with weight in ``[q, 1 - q]``.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .errors import (
    CertificationError,
    DegenerateWitnessError,
    ExtremalError,
    HypothesisError,
    NoPairFoundError,
)
from .mappings import (
    MappingExpr,
    RetractCompose,
    SamplingBudget,
    distance_infty,
    domain_samples,
    evaluate_batch,
    lipschitz_bounds,
    top_grid,
    verify_self_map,
)
from .normed import batch_norm, make_rng, matrix_norm

logger = logging.getLogger(__name__)

PARAM_TOL = 1e-14
CENTER_TOL = 1e-12
MAX_WITNESS_RETRIES = 8
MAX_UNIFORM_REJECTIONS = 16
DEFAULT_PROBES = 1000
DEFAULT_LAMBDA_STEP = 1e-3


@dataclass(frozen=True)
class PorosityParams:
    q: float
    epsilon: float
    delta: float
    alpha: float

    @property
    def threshold(self) -> float:
        """Lower bound ``(2 - q) / 2`` on any admissible weight."""
        return (2.0 - self.q) / 2.0


def porosity_params(q: float, epsilon: float) -> PorosityParams:
    if not 0.0 < q < 0.5:
        raise ExtremalError(f"q must lie in (0, 1/2), got {q}")
    if not epsilon > 0.0:
        raise ExtremalError(f"epsilon must be positive, got {epsilon}")
    delta = alpha = q / (2.0 * (1.0 + q))
    rearranged = (1.0 - delta - 2.0 * alpha) / (1.0 - 2.0 * alpha)
    if abs(rearranged - (2.0 - q) / 2.0) > PARAM_TOL or not rearranged > 1.0 - q:
        raise ExtremalError(f"parameter identity fails for q={q}")
    return PorosityParams(q, epsilon, delta, alpha)


def theoretical_margin(params: PorosityParams, eta: float, lam: float) -> float:
    """Guaranteed excess of ``||h(y) - h(x0)||`` over ``eta`` at weight ``lam``."""
    return eta * (1.0 - 2.0 * params.alpha) * (params.threshold - lam) / lam


@dataclass(frozen=True, eq=False)
class NearIsometricPair:
    x0: np.ndarray
    y: np.ndarray
    eta: float
    ratio: float


@dataclass(frozen=True)
class SearchBudget:
    samples: int = 256
    seed: int = 0
    max_iter: int = 64
    candidates: int = MAX_WITNESS_RETRIES


def _grid_pairs(f: MappingExpr, delta: float, epsilon: float, count: int) -> List[NearIsometricPair]:
    grid = top_grid(f)
    assert grid is not None
    tag = f.space.norm_tag
    points = grid.points
    values = evaluate_batch(f, points)
    i, j = np.triu_indices(points.shape[0], 1)
    dist = batch_norm(tag, points[i] - points[j])
    close = (dist > 0) & (dist < epsilon)
    if not np.any(close):
        raise NoPairFoundError(f"no sample pair closer than {epsilon}", 0.0)
    i, j, dist = i[close], j[close], dist[close]
    ratios = batch_norm(tag, values[i] - values[j]) / dist
    best = float(ratios.max())
    keep = ratios > 1.0 - delta
    if not np.any(keep):
        raise NoPairFoundError(f"best ratio {best} does not exceed {1.0 - delta}", best)
    order = np.lexsort((j[keep], i[keep], -dist[keep], -ratios[keep]))[:count]
    return [
        NearIsometricPair(
            np.array(points[i[keep][k]]),
            np.array(points[j[keep][k]]),
            float(dist[keep][k]),
            float(ratios[keep][k]),
        )
        for k in order
    ]


def _shrink(
    f: MappingExpr, a: np.ndarray, b: np.ndarray, epsilon: float, max_iter: int
) -> Optional[NearIsometricPair]:
    tag = f.space.norm_tag

    def ratio(u: np.ndarray, v: np.ndarray) -> float:
        images = evaluate_batch(f, np.vstack([u, v]))
        return float(batch_norm(tag, images[0] - images[1]) / batch_norm(tag, u - v))

    for _ in range(max_iter):
        eta = float(batch_norm(tag, a - b))
        if eta < epsilon:
            return NearIsometricPair(a, b, eta, ratio(a, b))
        mid = 0.5 * (a + b)
        # one half keeps at least the ratio of the whole segment
        if ratio(a, mid) >= ratio(mid, b):
            b = mid
        else:
            a = mid
    return None


def near_isometric_pairs(
    f: MappingExpr, delta: float, epsilon: float, budget: Optional[SearchBudget] = None
) -> List[NearIsometricPair]:
    """Candidate pairs ``(x0, y)`` with ratio ``> 1 - delta`` and ``||y - x0|| < epsilon``, best first."""
    budget = budget or SearchBudget()
    if top_grid(f) is not None:
        return _grid_pairs(f, delta, epsilon, budget.candidates)

    report = lipschitz_bounds(f, SamplingBudget(budget.samples, budget.seed))
    if report.upper <= 1.0 - delta:
        raise NoPairFoundError(
            f"lip(f) <= {report.upper} rules out ratios above {1.0 - delta}", report.lower
        )
    starts = [report.witness_pair]
    samples = domain_samples(f, SamplingBudget(budget.samples, budget.seed))
    i, j = np.triu_indices(samples.shape[0], 1)
    tag = f.space.norm_tag
    values = evaluate_batch(f, samples)
    dist = batch_norm(tag, samples[i] - samples[j])
    ratios = np.where(dist > 0, batch_norm(tag, values[i] - values[j]) / np.where(dist > 0, dist, 1.0), 0.0)
    for k in np.argsort(-ratios, kind="stable")[: budget.candidates]:
        starts.append((samples[i[k]], samples[j[k]]))

    found: List[NearIsometricPair] = []
    best = 0.0
    for a, b in starts:
        pair = _shrink(f, np.array(a, dtype=float), np.array(b, dtype=float), epsilon, budget.max_iter)
        if pair is None:
            continue
        best = max(best, pair.ratio)
        if pair.ratio > 1.0 - delta:
            found.append(pair)
        if len(found) >= budget.candidates:
            break
    if not found:
        raise NoPairFoundError(f"search exhausted with best ratio {best}", best)
    logger.debug("found %d near-isometric pairs", len(found))
    return found


def find_near_isometric_pair(
    f: MappingExpr, delta: float, epsilon: float, budget: Optional[SearchBudget] = None
) -> NearIsometricPair:
    return near_isometric_pairs(f, delta, epsilon, budget)[0]


@dataclass(frozen=True, eq=False)
class PorosityWitness:
    params: PorosityParams
    pair: NearIsometricPair
    g: MappingExpr
    g_tilde: MappingExpr
    center_distance: float
    center_exact: bool
    radius: float
    samples: np.ndarray
    pair_index: Tuple[int, int]


def _witness_samples(f: MappingExpr, budget: SearchBudget) -> np.ndarray:
    grid = top_grid(f)
    if grid is not None:
        return np.array(grid.points)
    return domain_samples(f, SamplingBudget(budget.samples, budget.seed))


def _with_points(samples: np.ndarray, *extra: np.ndarray) -> Tuple[np.ndarray, List[int]]:
    indices = []
    for point in extra:
        gaps = np.max(np.abs(samples - point), axis=1)
        k = int(np.argmin(gaps))
        if gaps[k] > CENTER_TOL:
            samples = np.vstack([samples, point])
            k = samples.shape[0] - 1
        indices.append(k)
    return samples, indices


def build_porosity_witness(
    f: MappingExpr,
    g: MappingExpr,
    q: float,
    epsilon: float,
    budget: Optional[SearchBudget] = None,
) -> PorosityWitness:
    """Center ``g~ = g o R_{eta,x0}`` of a ball around ``g`` that misses ``P_{f,q}``."""
    budget = budget or SearchBudget()
    params = porosity_params(q, epsilon)
    if f.space != g.space:
        raise ExtremalError("mappings act on different spaces")
    if top_grid(g) is not None:
        raise ExtremalError("a grid mapping cannot be composed with the retraction")
    samples = _witness_samples(f, budget)
    for name, mapping in (("f", f), ("g", g)):
        report = verify_self_map(mapping, samples)
        if not report.ok:
            raise HypothesisError(
                f"{name} is not a nonexpansive self-map "
                f"(lip {report.lipschitz:.6g}, sup norm {report.max_norm:.6g})"
            )

    tried: List[Dict[str, Any]] = []
    for pair in near_isometric_pairs(f, params.delta, epsilon, budget):
        if not pair.eta < epsilon:
            raise HypothesisError(f"pair distance eta={pair.eta:.6g} is not below epsilon={epsilon:g}")
        g_tilde = RetractCompose(f.space, g, pair.eta, pair.x0)
        collapsed = evaluate_batch(g_tilde, np.vstack([pair.y, pair.x0]))
        if not np.array_equal(collapsed[0], collapsed[1]):
            raise ExtremalError("retraction failed to identify y with x0")
        points, (ix0, iy) = _with_points(samples, pair.x0, pair.y)
        distance = distance_infty(g_tilde, g, samples=points)
        tried.append({"x0": pair.x0.tolist(), "eta": pair.eta, "center": distance.value})
        if distance.value > pair.eta + CENTER_TOL:
            raise HypothesisError(
                f"center distance {distance.value:.6g} exceeds eta={pair.eta:.6g}"
            )
        if distance.value > CENTER_TOL:
            logger.info(
                "porosity witness: eta=%g, center distance=%g", pair.eta, distance.value
            )
            return PorosityWitness(
                params=params,
                pair=pair,
                g=g,
                g_tilde=g_tilde,
                center_distance=distance.value,
                center_exact=top_grid(f) is not None,
                radius=params.alpha * distance.value,
                samples=points,
                pair_index=(ix0, iy),
            )
        logger.warning("zero center distance at x0=%s; trying another pair", pair.x0.tolist())
    raise DegenerateWitnessError(
        f"center distance vanished for all {len(tried)} candidate pairs", {"tried": tried}
    )


# certification


@dataclass(frozen=True)
class ProbeRefutation:
    index: int
    source: str
    lam: float
    margin: float
    theoretical_margin: float


@dataclass(frozen=True, eq=False)
class BallCertificate:
    refutations: List[ProbeRefutation] = field(default_factory=list)
    min_margin: float = math.inf
    lambda_step: float = DEFAULT_LAMBDA_STEP
    method: str = ""


def _in_m(space, points: np.ndarray, values: np.ndarray, pairs, tol: float) -> bool:
    tag = space.norm_tag
    if np.any(batch_norm(tag, values) > 1.0 + tol):
        return False
    i, j = pairs
    return bool(
        np.all(batch_norm(tag, values[i] - values[j]) <= batch_norm(tag, points[i] - points[j]) + tol)
    )


def _random_member(space, points: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    matrix = rng.standard_normal((space.dim, space.dim))
    offset = rng.standard_normal(space.dim)
    scale = matrix_norm(space, matrix) + float(batch_norm(space.norm_tag, offset))
    return (points @ matrix.T + offset) / scale


def certify_ball_empty(
    witness: PorosityWitness,
    f: MappingExpr,
    probes: int = DEFAULT_PROBES,
    lambda_step: float = DEFAULT_LAMBDA_STEP,
    seed: int = 0,
    tol: float = 1e-12,
) -> BallCertificate:
    """Refute every probe ``g'`` near ``g~`` at the pair ``(x0, y)`` for all scanned weights.

    For each probe and each ``lam`` on the ``[q, 1 - q]`` grid the would-be
    partner ``h = (f - (1 - lam) g') / lam`` stretches the pair beyond ``eta``;
    the smallest excess is the reported margin. Probe 0 is ``g~`` itself.
    """
    space = f.space
    params, pair = witness.params, witness.pair
    points = witness.samples
    rng = make_rng(seed)
    center = evaluate_batch(witness.g_tilde, points)
    tag = space.norm_tag
    pairs = np.triu_indices(points.shape[0], 1)
    ix0, iy = witness.pair_index

    count = max(int(math.ceil((1.0 - 2.0 * params.q) / lambda_step)), 1)
    lams = np.linspace(params.q, 1.0 - params.q, count + 1)
    images = evaluate_batch(f, np.vstack([pair.x0, pair.y]))
    df = images[1] - images[0]

    refutations: List[ProbeRefutation] = []
    for index in range(probes):
        source = "CENTER"
        values = center
        if index > 0:
            source = "UNIFORM"
            for _ in range(MAX_UNIFORM_REJECTIONS):
                noise = rng.uniform(-1.0, 1.0, center.shape)
                scale = max(1.0, float(np.max(batch_norm(tag, noise))))
                values = center + witness.radius * noise / scale
                if _in_m(space, points, values, pairs, tol):
                    break
            else:
                source = "MIXTURE"
                other = _random_member(space, points, rng)
                spread = float(np.max(batch_norm(tag, other - center)))
                weight = rng.random() * min(1.0, witness.radius / spread) if spread > 0 else 0.0
                values = (1.0 - weight) * center + weight * other

        dg = values[iy] - values[ix0]
        stretch = batch_norm(tag, (df[np.newaxis, :] - (1.0 - lams)[:, np.newaxis] * dg) / lams[:, np.newaxis])
        margins = stretch - pair.eta
        k = int(np.argmin(margins))
        refutation = ProbeRefutation(
            index,
            source,
            float(lams[k]),
            float(margins[k]),
            theoretical_margin(params, pair.eta, float(lams[k])),
        )
        if not refutation.margin > 0.0:
            raise CertificationError(
                f"probe {index} admits a partner at lambda={refutation.lam} "
                f"(margin {refutation.margin})",
                BallCertificate(refutations + [refutation], refutation.margin, lambda_step),
            )
        refutations.append(refutation)

    min_margin = min(r.margin for r in refutations) if refutations else math.inf
    logger.info("all %d probes refuted, min margin %g", len(refutations), min_margin)
    return BallCertificate(
        refutations, min_margin, lambda_step, f"SCANNED({lambda_step:g})/SAMPLED({probes})"
    )


__all__ = [
    "BallCertificate",
    "NearIsometricPair",
    "PorosityParams",
    "PorosityWitness",
    "ProbeRefutation",
    "SearchBudget",
    "build_porosity_witness",
    "certify_ball_empty",
    "find_near_isometric_pair",
    "near_isometric_pairs",
    "porosity_params",
    "theoretical_margin",
]
