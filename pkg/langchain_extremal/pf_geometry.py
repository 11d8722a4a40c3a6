"""Convex geometry of ``P_f``, the mappings that take part in a decomposition of ``f``.

``g`` belongs to ``P_f`` when ``f = (1 - lam) g + lam h`` for some ``lam`` in
``[0, 1)`` and ``h`` in M. Every certificate produced here is validated on
construction: recombination residual, and membership of both parts in M.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import svdvals
from scipy.optimize import minimize_scalar

from .errors import (
    CertificateError,
    ConvergenceError,
    ExtremalError,
    HypothesisError,
    NotNonexpansiveError,
)
from .mappings import (
    MEMBERSHIP_TOL,
    ConvexCombo,
    MappingExpr,
    affine_parts,
    affine_sup,
    combine,
    distance_infty,
    domain_samples,
    evaluate_batch,
    same_expr,
    top_grid,
    verify_self_map,
)
from .normed import batch_norm, probe_grid

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
MERGE_TOL = 1e-12
BISECTION_TOL = 1e-10
FEASIBILITY_TOL = 1e-12
RANK_RTOL = 1e-8
DEFAULT_LAMBDA_STEP = 1e-3
LIMIT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class DecompositionCertificate:
    """``target = (1 - lam) * g + lam * h`` with ``g`` and ``h`` in M."""

    lam: float
    g: MappingExpr
    h: MappingExpr
    target: MappingExpr
    residual: float
    method: str

    @property
    def weights(self) -> Tuple[float, float]:
        return 1.0 - self.lam, self.lam

    @classmethod
    def build(
        cls,
        target: MappingExpr,
        lam: float,
        g: MappingExpr,
        h: MappingExpr,
        samples: Optional[np.ndarray] = None,
        residual_tol: float = RESIDUAL_TOL,
        membership_tol: float = MEMBERSHIP_TOL,
    ) -> "DecompositionCertificate":
        lam = float(lam)
        if not 0.0 <= lam < 1.0:
            raise CertificateError(f"certificate weight must lie in [0,1), got {lam}")
        if not (target.space == g.space == h.space):
            raise CertificateError("certificate parts act on different spaces")

        distance = distance_infty(ConvexCombo(target.space, lam, g, h), target, samples=samples)
        if distance.value > residual_tol:
            raise CertificateError(
                f"recombination residual {distance.value:.3e} exceeds {residual_tol:.0e}"
            )
        exact = distance.exact
        for name, part in (("g", g), ("h", h)):
            report = verify_self_map(part, samples, membership_tol)
            if not report.ok:
                raise CertificateError(
                    f"part {name} is not a nonexpansive self-map "
                    f"(lip {report.lipschitz:.6g}, sup norm {report.max_norm:.6g})"
                )
            exact = exact and report.method == "EXACT"
        method = "EXACT" if exact else distance.method
        return cls(lam, g, h, target, distance.value, method)


def trivial_certificate(f: MappingExpr) -> DecompositionCertificate:
    """``f`` is always in ``P_f``: ``lam = 0`` with ``h`` recorded as ``f``."""
    return DecompositionCertificate.build(f, 0.0, f, f)


def linear_certificate(
    f: MappingExpr, g: MappingExpr, lam: float, samples: Optional[np.ndarray] = None
) -> DecompositionCertificate:
    """Certificate with ``h = (f - (1 - lam) g) / lam``."""
    if lam <= 0.0:
        if not same_expr(f, g):
            raise HypothesisError("lam = 0 only certifies g = f")
        return trivial_certificate(f)
    h = combine(f.space, [1.0 / lam, -(1.0 - lam) / lam], [f, g], samples)
    return DecompositionCertificate.build(f, lam, g, h, samples)


def swap_certificate(cert: DecompositionCertificate) -> DecompositionCertificate:
    """Read ``(1 - lam) g + lam h`` as ``(1 - (1 - lam)) h + (1 - lam) g``."""
    if cert.lam <= 0.0:
        raise HypothesisError("a certificate with lam = 0 has no second member to swap in")
    return DecompositionCertificate(
        1.0 - cert.lam, cert.h, cert.g, cert.target, cert.residual, cert.method
    )


# membership in P_{f,q}


class FeasibilityMethod(str, Enum):
    EXACT_LINEAR = "EXACT_LINEAR"
    GRID_SCAN = "GRID_SCAN"


@dataclass(frozen=True)
class FeasibleLambdaSet:
    q: float
    intervals: Tuple[Tuple[float, float], ...]
    method: str

    @property
    def empty(self) -> bool:
        return not self.intervals

    def contains(self, lam: float) -> bool:
        return any(lo <= lam <= hi for lo, hi in self.intervals)


def _check_q(q: float) -> None:
    if not 0.0 < q < 0.5:
        raise ExtremalError(f"q must lie in (0, 1/2), got {q}")


def _exact_window(f: MappingExpr, g: MappingExpr, q: float) -> Optional[FeasibleLambdaSet]:
    pf, pg = affine_parts(f), affine_parts(g)
    if pf is None or pg is None:
        return None
    space = f.space

    def excess(lam: float) -> Optional[float]:
        # h(lam) is in M iff sup_C ||(F - (1-lam) G) x + (b_f - (1-lam) b_g)|| <= lam
        sup = affine_sup(space, pf[0] - (1.0 - lam) * pg[0], pf[1] - (1.0 - lam) * pg[1])
        return None if sup is None else sup - lam

    lo, hi = q, 1.0 - q
    if excess(lo) is None:
        return None
    best = minimize_scalar(
        lambda lam: excess(lam), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}
    )
    candidates = [(excess(lam), lam) for lam in (lo, hi, float(best.x))]
    value, center = min(candidates)
    method = FeasibilityMethod.EXACT_LINEAR.value
    if value > FEASIBILITY_TOL:
        return FeasibleLambdaSet(q, (), method)

    def edge(feasible: float, infeasible: float) -> float:
        while abs(infeasible - feasible) > BISECTION_TOL:
            mid = 0.5 * (feasible + infeasible)
            if excess(mid) <= FEASIBILITY_TOL:
                feasible = mid
            else:
                infeasible = mid
        return feasible

    # bisected endpoints are moved inward by the bisection tolerance
    left = lo if excess(lo) <= FEASIBILITY_TOL else min(edge(center, lo) + BISECTION_TOL, center)
    right = hi if excess(hi) <= FEASIBILITY_TOL else max(edge(center, hi) - BISECTION_TOL, center)
    logger.debug("exact feasible window [%.12f, %.12f]", left, right)
    return FeasibleLambdaSet(q, ((left, right),), method)


def _slack(space, samples: np.ndarray, values: np.ndarray, pairs) -> float:
    i, j = pairs
    slack = 1.0 - float(np.max(batch_norm(space.norm_tag, values)))
    if i.size:
        gaps = batch_norm(space.norm_tag, samples[i] - samples[j]) - batch_norm(
            space.norm_tag, values[i] - values[j]
        )
        slack = min(slack, float(np.min(gaps)))
    return slack


def _scan_window(
    f: MappingExpr,
    g: MappingExpr,
    q: float,
    step: float,
    samples: Optional[np.ndarray],
) -> FeasibleLambdaSet:
    if samples is None:
        samples = domain_samples(f)
    space = f.space
    fx, gx = evaluate_batch(f, samples), evaluate_batch(g, samples)
    pairs = np.triu_indices(samples.shape[0], 1)
    spread = float(np.max(batch_norm(space.norm_tag, fx - gx)))
    count = max(int(math.ceil((1.0 - 2.0 * q) / step)), 1)
    lams = np.linspace(q, 1.0 - q, count + 1)
    slacks = np.array(
        [_slack(space, samples, (fx - (1.0 - lam) * gx) / lam, pairs) for lam in lams]
    )

    intervals: List[Tuple[float, float]] = []
    for k, lam in enumerate(lams):
        if slacks[k] < -FEASIBILITY_TOL:
            continue
        intervals.append((float(lam), float(lam)))
        if k + 1 < lams.size and slacks[k + 1] >= -FEASIBILITY_TOL:
            # every constraint is (2 * spread / lam^2)-Lipschitz in lam on this segment
            rate = 2.0 * spread / (lam * lam)
            if slacks[k] + slacks[k + 1] >= rate * (lams[k + 1] - lam):
                intervals[-1] = (float(lam), float(lams[k + 1]))

    merged: List[Tuple[float, float]] = []
    for lo, hi in intervals:
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(hi, merged[-1][1]))
        else:
            merged.append((lo, hi))
    return FeasibleLambdaSet(q, tuple(merged), f"{FeasibilityMethod.GRID_SCAN.value}({step:g})")


def pfq_membership(
    f: MappingExpr,
    g: MappingExpr,
    q: float,
    method: Optional[FeasibilityMethod] = None,
    lambda_step: float = DEFAULT_LAMBDA_STEP,
    samples: Optional[np.ndarray] = None,
) -> FeasibleLambdaSet:
    """The ``lam`` in ``[q, 1 - q]`` for which ``(f - (1 - lam) g) / lam`` lies in M.

    Affine pairs are solved exactly: the constraint is convex in ``lam``, so the
    window is one interval found by bounded minimisation and bisection. Other
    pairs are scanned on a ``lambda_step`` grid over their sample set.
    """
    _check_q(q)
    if f.space != g.space:
        raise ExtremalError("mappings act on different spaces")
    if method != FeasibilityMethod.GRID_SCAN and samples is None:
        window = _exact_window(f, g, q)
        if window is not None:
            return window
        if method == FeasibilityMethod.EXACT_LINEAR:
            raise ExtremalError("exact membership needs an affine pair with a closed-form sup")
    return _scan_window(f, g, q, lambda_step, samples)


# ray, convexity and complement constructions


def ray_extend(
    cert: DecompositionCertificate, t: float, samples: Optional[np.ndarray] = None
) -> DecompositionCertificate:
    """Certificate for the member ``f + t (g - f)``."""
    t = float(t)
    f = cert.target
    if t == 0.0 or cert.lam == 0.0 or same_expr(cert.g, f):
        return trivial_certificate(f)
    if t == 1.0:
        return cert
    if t < 0.0:
        lam = cert.lam
        cert = swap_certificate(cert)
        t = -t * lam / (1.0 - lam)

    member = combine(f.space, [1.0 - t, t], [f, cert.g], samples)
    report = verify_self_map(member, samples)
    if not report.ok:
        raise NotNonexpansiveError(
            f"extended point leaves M (lip {report.lipschitz:.6g}, sup norm {report.max_norm:.6g})"
        )
    mu = cert.lam * t / (cert.lam * t + 1.0 - cert.lam)
    return DecompositionCertificate.build(f, mu, member, cert.h, samples)


class MergeParameters(NamedTuple):
    beta: float
    lam: float
    mu: float
    residuals: Tuple[float, float, float, float]


def merge_parameters(lam1: float, lam2: float, theta: float) -> MergeParameters:
    """Weights turning certificates with ``lam1``, ``lam2`` into one for the ``theta``-mix.

    ``residuals`` are the defects of the four coefficient identities
    ``(1-lam)(1-theta) = (1-beta)(1-lam1)``, ``(1-lam) theta = beta (1-lam2)``,
    ``lam (1-mu) = (1-beta) lam1`` and ``lam mu = beta lam2``.
    """
    denominator = 1.0 - (theta * lam1 + (1.0 - theta) * lam2)
    if denominator <= 0.0:
        raise CertificateError("degenerate merge: theta*lam1 + (1-theta)*lam2 reached 1")
    beta = theta * (1.0 - lam1) / denominator
    lam = (1.0 - beta) * lam1 + beta * lam2
    mu = beta * lam2 / lam if lam > 0.0 else 0.0
    residuals = (
        abs((1.0 - lam) * (1.0 - theta) - (1.0 - beta) * (1.0 - lam1)),
        abs((1.0 - lam) * theta - beta * (1.0 - lam2)),
        abs(lam * (1.0 - mu) - (1.0 - beta) * lam1),
        abs(lam * mu - beta * lam2),
    )
    return MergeParameters(beta, lam, mu, residuals)


def merge_certs(
    cert1: DecompositionCertificate,
    cert2: DecompositionCertificate,
    theta: float,
    samples: Optional[np.ndarray] = None,
) -> DecompositionCertificate:
    """Certificate for the member ``(1 - theta) g1 + theta g2``."""
    if not same_expr(cert1.target, cert2.target):
        raise HypothesisError("certificates decompose different mappings")
    if not 0.0 <= theta < 1.0:
        raise ExtremalError(f"theta must lie in [0,1), got {theta}")
    if theta == 0.0:
        return cert1
    params = merge_parameters(cert1.lam, cert2.lam, theta)
    if max(params.residuals) > MERGE_TOL:
        raise CertificateError(f"merge identities violated: {params.residuals}")
    space = cert1.target.space
    member = combine(space, [1.0 - theta, theta], [cert1.g, cert2.g], samples)
    partner = combine(space, [1.0 - params.mu, params.mu], [cert1.h, cert2.h], samples)
    return DecompositionCertificate.build(cert1.target, params.lam, member, partner, samples)


def complement_witness(
    combo_cert: DecompositionCertificate,
    g1: MappingExpr,
    g2: MappingExpr,
    theta: float,
    samples: Optional[np.ndarray] = None,
) -> DecompositionCertificate:
    """Certificate for ``g1`` from one for ``(1 - theta) g1 + theta g2``."""
    lam = combo_cert.lam
    mu = lam * (1.0 - theta) + theta
    if mu == 0.0:
        raise HypothesisError("mu = 0: lam = theta = 0 and g1 is the trivial member")
    partner = combine(
        g1.space, [(mu - lam) / mu, lam / mu], [g2, combo_cert.h], samples
    )
    return DecompositionCertificate.build(combo_cert.target, mu, g1, partner, samples)


def _extrapolated_weight(lams: Sequence[float]) -> float:
    last = lams[-1]
    if len(lams) < 3:
        return last
    d1 = lams[-2] - lams[-3]
    d2 = lams[-1] - lams[-2]
    denom = d2 - d1
    if denom == 0.0 or abs(d2) >= abs(d1):
        return last
    # Aitken delta-squared on the tail of the weights
    lam = last - d2 * d2 / denom
    return lam if 0.0 <= lam < 1.0 else last


def limit_certificate(
    f: MappingExpr,
    limit: MappingExpr,
    certs: Sequence[DecompositionCertificate],
    samples: Optional[np.ndarray] = None,
    conv_tol: float = LIMIT_TOL,
) -> DecompositionCertificate:
    """Certificate for the limit of members whose certificates converge.

    The weight is the extrapolated limit of ``lam_n``, not its last term, and
    ``h = (f - (1 - lam) g) / lam`` is checked against the last ``h_n``. Raises
    ``ConvergenceError`` when the tail of the family has not settled to within
    ``conv_tol``.
    """
    if len(certs) < 2:
        raise ExtremalError("need at least two certificates of the convergent family")
    last, previous = certs[-1], certs[-2]
    step = abs(last.lam - previous.lam)
    drift = distance_infty(last.h, previous.h, samples=samples).value
    if step > conv_tol or drift > conv_tol:
        raise ConvergenceError(
            f"family has not converged: lam step {step:.3g}, h drift {drift:.3g}"
        )
    lam = _extrapolated_weight([cert.lam for cert in certs])
    logger.debug("limit certificate with lam=%.12g from %d members", lam, len(certs))
    cert = linear_certificate(f, limit, lam, samples)
    gap = distance_infty(cert.h, last.h, samples=samples).value
    if gap > conv_tol:
        raise ConvergenceError(f"limit of h_n is {gap:.3g} away from the recombined part")
    return cert


# affine hull


class HullStatus(str, Enum):
    CERTIFIED = "CERTIFIED"
    NOT_IN_HULL = "NOT_IN_HULL"
    NOT_IN_M = "NOT_IN_M"


@dataclass(frozen=True, eq=False)
class AffineHullBasis:
    base: MappingExpr
    directions: List[MappingExpr]
    certs: List[DecompositionCertificate]
    betas: np.ndarray
    tilde_g: MappingExpr
    tilde_cert: DecompositionCertificate
    membership: Optional[FeasibleLambdaSet]
    probe_points: np.ndarray


@dataclass(frozen=True, eq=False)
class CandidateReport:
    status: HullStatus
    residual: float
    alphas: Optional[np.ndarray] = None
    certificate: Optional[DecompositionCertificate] = None


@dataclass(frozen=True, eq=False)
class HullProbeReport:
    basis: AffineHullBasis
    candidates: List[CandidateReport] = field(default_factory=list)


def _hull_points(f: MappingExpr) -> np.ndarray:
    grid = top_grid(f)
    return np.array(grid.points) if grid is not None else probe_grid(f.space)


def _independent(
    f: MappingExpr, certs: Sequence[DecompositionCertificate], points: np.ndarray
) -> List[DecompositionCertificate]:
    base = evaluate_batch(f, points)
    chosen: List[DecompositionCertificate] = []
    rows: List[np.ndarray] = []
    for cert in certs:
        row = (evaluate_batch(cert.g, points) - base).ravel()
        if not np.any(np.abs(row) > 0):
            continue
        trial = np.vstack(rows + [row])
        sv = svdvals(trial)
        if int(np.count_nonzero(sv > RANK_RTOL * sv[0])) == trial.shape[0]:
            rows.append(row)
            chosen.append(cert)
    return chosen


def tilde_member(
    f: MappingExpr,
    certs: Sequence[DecompositionCertificate],
    alphas: Sequence[float],
    samples: Optional[np.ndarray] = None,
) -> Tuple[DecompositionCertificate, np.ndarray]:
    """Certificate for ``f + (1/n) sum beta_i (g_i - f)`` with ``beta = alpha / sum(alpha)``.

    Built as the mean of the members ``(1 - beta_i) f + beta_i g_i``, each
    certified by merging with the trivial certificate.
    """
    alphas = np.asarray(alphas, dtype=float)
    if alphas.size != len(certs) or alphas.size == 0 or np.any(alphas <= 0):
        raise HypothesisError("need one positive alpha per certificate")
    betas = alphas / alphas.sum()
    trivial = trivial_certificate(f)
    running: Optional[DecompositionCertificate] = None
    for k, (beta, cert) in enumerate(zip(betas, certs), start=1):
        term = cert if beta >= 1.0 else merge_certs(trivial, cert, float(beta), samples)
        running = term if running is None else merge_certs(running, term, 1.0 / k, samples)
    assert running is not None
    return running, betas


def affine_hull_probe(
    f: MappingExpr,
    certs: Sequence[DecompositionCertificate],
    probe_candidates: Sequence[MappingExpr] = (),
    alphas: Optional[Sequence[float]] = None,
    samples: Optional[np.ndarray] = None,
) -> HullProbeReport:
    """Span of the certified directions ``g_i - f`` and ``P_f`` membership of candidates."""
    if not certs:
        raise ExtremalError("no valid certificates supplied")
    for cert in certs:
        if not same_expr(cert.target, f):
            raise HypothesisError("certificate does not decompose the base mapping")
    points = _hull_points(f)
    chosen = _independent(f, certs, points)
    if not chosen:
        trivial = trivial_certificate(f)
        basis = AffineHullBasis(f, [], [], np.zeros(0), f, trivial, None, points)
        return HullProbeReport(basis, [_probe(f, [], c, points, samples) for c in probe_candidates])

    weights = np.ones(len(chosen)) if alphas is None else np.asarray(alphas, dtype=float)
    tilde_cert, betas = tilde_member(f, chosen, weights, samples)
    membership = None
    if tilde_cert.lam > 0.0:
        q = min(tilde_cert.lam, 1.0 - tilde_cert.lam, 0.49) * (1.0 - 1e-6)
        membership = pfq_membership(f, tilde_cert.g, q, samples=samples)
    basis = AffineHullBasis(
        f,
        [combine(f.space, [1.0, -1.0], [c.g, f], samples) for c in chosen],
        list(chosen),
        betas,
        tilde_cert.g,
        tilde_cert,
        membership,
        points,
    )
    reports = [_probe(f, chosen, c, points, samples) for c in probe_candidates]
    return HullProbeReport(basis, reports)


def _probe(
    f: MappingExpr,
    certs: Sequence[DecompositionCertificate],
    candidate: MappingExpr,
    points: np.ndarray,
    samples: Optional[np.ndarray],
) -> CandidateReport:
    base = evaluate_batch(f, points)
    target = (evaluate_batch(candidate, points) - base).ravel()
    scale = max(1.0, float(np.max(np.abs(target))) if target.size else 0.0)
    if not np.any(np.abs(target) > 0):
        return CandidateReport(HullStatus.CERTIFIED, 0.0, np.zeros(0), trivial_certificate(f))
    if not certs:
        return CandidateReport(HullStatus.NOT_IN_HULL, float(np.max(np.abs(target))))

    directions = np.vstack([(evaluate_batch(c.g, points) - base).ravel() for c in certs])
    alphas, *_ = np.linalg.lstsq(directions.T, target, rcond=None)
    residual = float(np.max(np.abs(directions.T @ alphas - target)))
    if residual > RANK_RTOL * scale:
        return CandidateReport(HullStatus.NOT_IN_HULL, residual, alphas)
    if not verify_self_map(candidate, samples).ok:
        return CandidateReport(HullStatus.NOT_IN_M, residual, alphas)

    used_certs: List[DecompositionCertificate] = []
    used_alphas: List[float] = []
    for alpha, cert in zip(alphas, certs):
        if abs(alpha) <= MERGE_TOL:
            continue
        if alpha < 0:
            # g - f = -(lam / (1 - lam)) (h - f)
            alpha = -alpha * cert.lam / (1.0 - cert.lam)
            cert = swap_certificate(cert)
        used_certs.append(cert)
        used_alphas.append(float(alpha))
    tilde_cert, _ = tilde_member(f, used_certs, used_alphas, samples)
    t = len(used_alphas) * sum(used_alphas)
    try:
        certificate = ray_extend(tilde_cert, t, samples)
    except (NotNonexpansiveError, CertificateError) as e:
        logger.warning("candidate in the hull could not be certified: %s", e)
        return CandidateReport(HullStatus.NOT_IN_M, residual, alphas)
    return CandidateReport(HullStatus.CERTIFIED, residual, np.asarray(used_alphas), certificate)


__all__ = [
    "AffineHullBasis",
    "CandidateReport",
    "DecompositionCertificate",
    "FeasibilityMethod",
    "FeasibleLambdaSet",
    "HullProbeReport",
    "HullStatus",
    "MergeParameters",
    "affine_hull_probe",
    "complement_witness",
    "limit_certificate",
    "linear_certificate",
    "merge_certs",
    "merge_parameters",
    "pfq_membership",
    "ray_extend",
    "swap_certificate",
    "tilde_member",
    "trivial_certificate",
]
