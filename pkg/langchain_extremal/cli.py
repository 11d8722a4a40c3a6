"""Command-line entry point: ``langchain-extremal <command> [flags]``.

Every run produces one report document on stdout. Exit codes: 0 on success,
1 on rejected input, 2 when a porosity certification is refuted.
"""
import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .config import Command, RunConfig, load_config, load_environment, log_level
from .documents import (
    Provenance,
    ReportDocument,
    ReportEntry,
    ReportFormat,
    emit_report,
    expr_to_data,
    jsonable,
    load_schema,
    parse_mapping,
)
from .errors import (
    CertificationError,
    DegenerateWitnessError,
    ExtremalError,
    NoPairFoundError,
)
from .extremality import (
    Profile,
    classify_linear_extremal,
    grid_extreme_oracle,
    identity_pinning_samples,
    perturbation_admissible,
    pin_violation_witness,
    urysohn_pair,
    verify_pinning,
)
from .mappings import (
    Grid,
    MappingExpr,
    SamplingBudget,
    affine_parts,
    classify_contraction,
    domain_samples,
    lipschitz_bounds,
    top_grid,
)
from .normed import SpaceContext, boundary_samples, classify_point, make_rng
from .pf_geometry import DecompositionCertificate, linear_certificate, pfq_membership, ray_extend
from .porosity import SearchBudget, build_porosity_witness, certify_ball_empty

logger = logging.getLogger(__name__)

Handler = Callable[[RunConfig, List[MappingExpr]], List[ReportEntry]]


def certificate_data(cert: DecompositionCertificate) -> Dict[str, Any]:
    return {
        "lambda": cert.lam,
        "weights": list(cert.weights),
        "g": expr_to_data(cert.g),
        "h": expr_to_data(cert.h),
        "residual": cert.residual,
        "method": cert.method,
    }


def _entry(kind: str, verdict: str, method: str, **data: Any) -> ReportEntry:
    return ReportEntry(kind=kind, verdict=verdict, method=method, data=jsonable(data))


def _need(mappings: List[MappingExpr], count: int, command: Command) -> None:
    if len(mappings) < count:
        raise ExtremalError(f"{command.value} needs {count} input mapping(s), got {len(mappings)}")


def _param(config: RunConfig, name: str) -> Any:
    if name not in config.params:
        raise ExtremalError(f"{config.command.value} needs params.{name}")
    return config.params[name]


def _rng(config: RunConfig) -> np.random.Generator:
    if config.seed is None:
        raise ExtremalError("seed is mandatory when samples are generated")
    return make_rng(config.seed)


def _linear_matrix(f: MappingExpr) -> np.ndarray:
    parts = affine_parts(f)
    if parts is None or np.any(parts[1]):
        raise ExtremalError("linear extremality needs a linear mapping")
    return parts[0]


def _classify(config: RunConfig, mappings: List[MappingExpr]) -> List[ReportEntry]:
    _need(mappings, 1, config.command)
    entries = []
    for f in mappings:
        verdict = classify_linear_extremal(f.space, _linear_matrix(f), config.tol)
        data: Dict[str, Any] = {
            "extremal": verdict.extremal,
            "rows": [
                {
                    "index": row.index,
                    "functional": row.functional,
                    "norm": row.norm,
                    "support": row.support,
                    "extreme": row.extreme,
                }
                for row in verdict.row_analyses
            ],
        }
        if verdict.form7_data is not None:
            data["form7"] = {
                "perm": verdict.form7_data.perm,
                "signs": verdict.form7_data.signs,
                "fibers": verdict.form7_data.fibers,
            }
        if verdict.certificate is not None:
            data["certificate"] = certificate_data(verdict.certificate)
        label = "EXTREMAL" if verdict.extremal else "NOT_EXTREMAL"
        entries.append(_entry("linear_extremality", label, "EXACT", **data))
    return entries


def _decompose(config: RunConfig, mappings: List[MappingExpr]) -> List[ReportEntry]:
    _need(mappings, 1, config.command)
    entries = []
    for f in mappings:
        verdict = classify_linear_extremal(f.space, _linear_matrix(f), config.tol)
        if verdict.certificate is None:
            entries.append(_entry("decomposition", "EXTREMAL", "EXACT"))
        else:
            cert = verdict.certificate
            entries.append(
                _entry("decomposition", "DECOMPOSED", cert.method, certificate=certificate_data(cert))
            )
    return entries


def _pin_check(config: RunConfig, mappings: List[MappingExpr]) -> List[ReportEntry]:
    _need(mappings, 1, config.command)
    F = mappings[0]
    if "samples" in config.params:
        samples = [(np.asarray(f, dtype=float), int(x)) for f, x in config.params["samples"]]
    else:
        count = int(config.params.get("count", 100))
        samples = identity_pinning_samples(F.space, count, _rng(config))
    violations = verify_pinning(F, samples, config.tol)
    return [
        _entry(
            "pinning",
            "VIOLATED" if violations else "PINNED",
            f"SAMPLED({len(samples)})",
            violations=[
                {"f": v.f, "x": v.x, "value": v.value, "expected": v.expected} for v in violations
            ],
        )
    ]


def _urysohn(config: RunConfig, mappings: List[MappingExpr]) -> List[ReportEntry]:
    pair = urysohn_pair(
        _param(config, "f"),
        int(_param(config, "x0")),
        float(_param(config, "gamma")),
        Profile(config.params.get("profile", Profile.INDICATOR.value)),
    )
    defects = pair.defects()
    return [
        _entry(
            "urysohn_pair",
            "VALID" if max(defects) <= 1e-12 else "INVALID",
            "EXACT",
            neighbourhood=pair.neighbourhood,
            r=pair.r,
            g_plus=pair.g_plus,
            g_minus=pair.g_minus,
            gamma=pair.gamma,
            profile=pair.profile,
            defects=defects,
        )
    ]


def _pin_violate(config: RunConfig, mappings: List[MappingExpr]) -> List[ReportEntry]:
    _need(mappings, 1, config.command)
    witness = pin_violation_witness(
        mappings[0], _param(config, "f0"), int(_param(config, "x0")), config.tol
    )
    return [
        _entry(
            "pin_violation",
            "EXPANSION",
            "EXACT",
            direction=witness.direction,
            gamma=witness.gamma,
            member=witness.member,
            lhs=witness.lhs,
            rhs=witness.rhs,
        )
    ]


def _oracle(config: RunConfig, mappings: List[MappingExpr]) -> List[ReportEntry]:
    _need(mappings, 1, config.command)
    entries = []
    for f in mappings:
        if not isinstance(f, Grid):
            raise ExtremalError("the oracle command needs grid mappings")
        result = grid_extreme_oracle(f, config.tol)
        data: Dict[str, Any] = {"coordinate_slack": result.coordinate_slack}
        if result.direction is not None:
            data["direction"] = result.direction
            data["verified"] = perturbation_admissible(f, result.direction, config.tol)
        entries.append(
            _entry("grid_extremality", "EXTREME" if result.extreme else "NOT_EXTREME", "EXACT", **data)
        )
    return entries


def _points(config: RunConfig, mappings: List[MappingExpr]) -> List[ReportEntry]:
    if "space" in config.params:
        space = SpaceContext(int(config.params["space"]["dim"]), config.params["space"]["norm"])
    else:
        _need(mappings, 1, config.command)
        space = mappings[0].space
    if "points" in config.params:
        points = space.points(config.params["points"])
    else:
        points = boundary_samples(space, int(config.params.get("count", 100)), _rng(config))
    entries = []
    for point in points:
        result = classify_point(space, point, config.tol)
        entries.append(
            _entry(
                "point",
                result.tag.value,
                "EXACT",
                point=point,
                extreme=result.extreme,
                exposed=result.exposed,
                almost_exposed=result.almost_exposed,
                cone_rank=None if result.cone is None else result.cone.rank(config.tol),
            )
        )
    return entries


def _pf_probe(config: RunConfig, mappings: List[MappingExpr]) -> List[ReportEntry]:
    _need(mappings, 2, config.command)
    f, g = mappings[0], mappings[1]
    samples = None
    if affine_parts(f) is None or affine_parts(g) is None:
        samples = domain_samples(f, SamplingBudget(config.samples, config.seed or 0))
    window = pfq_membership(f, g, config.q, lambda_step=config.lambda_step, samples=samples)
    entries = [
        _entry(
            "feasible_window",
            "EMPTY" if window.empty else "FEASIBLE",
            window.method,
            q=window.q,
            intervals=window.intervals,
        )
    ]
    if window.empty:
        return entries
    lo, hi = window.intervals[0]
    cert = linear_certificate(f, g, 0.5 * (lo + hi), samples)
    entries.append(_entry("certificate", "IN_P_F", cert.method, certificate=certificate_data(cert)))
    if "t" in config.params:
        t = float(config.params["t"])
        ray = ray_extend(cert, t, samples)
        entries.append(
            _entry("ray_extension", "IN_P_F", ray.method, t=t, certificate=certificate_data(ray))
        )
    return entries


def _porosity(config: RunConfig, mappings: List[MappingExpr]) -> List[ReportEntry]:
    _need(mappings, 1, config.command)
    f = mappings[0]
    g = mappings[1] if len(mappings) > 1 else f
    assert config.seed is not None
    budget = SearchBudget(config.samples, config.seed, config.search_iterations)
    search_method = "EXACT" if top_grid(f) is not None else f"SAMPLED({config.samples})"
    try:
        witness = build_porosity_witness(f, g, config.q, config.epsilon, budget)
    except NoPairFoundError as e:
        return [
            _entry(
                "porosity_witness",
                "NO_PAIR",
                search_method,
                reason=str(e),
                best_ratio=e.best_ratio,
            )
        ]
    except DegenerateWitnessError as e:
        return [
            _entry(
                "porosity_witness",
                "DEGENERATE",
                search_method,
                reason=str(e),
                **e.diagnostics,
            )
        ]

    params = witness.params
    method = "EXACT" if witness.center_exact else f"SAMPLED({witness.samples.shape[0]})"
    entries = [
        _entry(
            "porosity_witness",
            "BUILT",
            method,
            params={
                "q": params.q,
                "epsilon": params.epsilon,
                "delta": params.delta,
                "alpha": params.alpha,
                "formula": "delta = alpha = q/(2(1+q))",
                "threshold": params.threshold,
            },
            pair={
                "x0": witness.pair.x0,
                "y": witness.pair.y,
                "eta": witness.pair.eta,
                "ratio": witness.pair.ratio,
            },
            center_distance=witness.center_distance,
            radius=witness.radius,
            g_tilde=expr_to_data(witness.g_tilde),
        )
    ]
    certificate = certify_ball_empty(witness, f, config.probes, config.lambda_step, config.seed)
    worst = min(certificate.refutations, key=lambda r: r.margin)
    entries.append(
        _entry(
            "ball_certificate",
            "REFUTED_ALL",
            certificate.method,
            probes=len(certificate.refutations),
            min_margin=certificate.min_margin,
            worst={
                "index": worst.index,
                "lambda": worst.lam,
                "margin": worst.margin,
                "theoretical_margin": worst.theoretical_margin,
            },
            sources=dict(sorted(Counter(r.source for r in certificate.refutations).items())),
        )
    )
    return entries


def _lipschitz(config: RunConfig, mappings: List[MappingExpr]) -> List[ReportEntry]:
    _need(mappings, 1, config.command)
    assert config.seed is not None
    budget = SamplingBudget(config.samples, config.seed)
    entries = []
    for f in mappings:
        report = lipschitz_bounds(f, budget)
        entries.append(
            _entry(
                "lipschitz",
                classify_contraction(f, budget, config.tol).value,
                report.method,
                lower=report.lower,
                upper=report.upper,
                exact=report.exact,
                witness_pair=report.witness_pair,
            )
        )
    return entries


def _schema(config: RunConfig, mappings: List[MappingExpr]) -> List[ReportEntry]:
    return [
        _entry("schema", name, "EXACT", schema=load_schema(name)) for name in ("mapping", "report")
    ]


HANDLERS: Dict[Command, Handler] = {
    Command.CLASSIFY: _classify,
    Command.DECOMPOSE: _decompose,
    Command.PIN_CHECK: _pin_check,
    Command.URYSOHN: _urysohn,
    Command.PIN_VIOLATE: _pin_violate,
    Command.ORACLE: _oracle,
    Command.POINTS: _points,
    Command.PF_PROBE: _pf_probe,
    Command.POROSITY: _porosity,
    Command.LIPSCHITZ: _lipschitz,
    Command.SCHEMA: _schema,
}


def _report(config: RunConfig, entries: List[ReportEntry]) -> ReportDocument:
    return ReportDocument(
        command=config.command.value,
        provenance=Provenance(
            command=config.command.value,
            config_hash=config.config_hash(),
            version=__version__,
            seed=config.seed,
        ),
        entries=entries,
    )


def dispatch(config: RunConfig) -> ReportDocument:
    """Run one command and collect its report."""
    mappings = [parse_mapping(Path(path).read_text(encoding="utf-8")) for path in config.inputs]
    logger.info("running %s on %d mapping(s)", config.command.value, len(mappings))
    return _report(config, HANDLERS[config.command](config, mappings))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="langchain-extremal",
        description="Extremality, decomposition and porosity experiments for nonexpansive mappings.",
    )
    parser.add_argument("command", choices=[c.value for c in Command])
    parser.add_argument("--input", dest="inputs", action="append", help="Mapping document (repeatable)")
    parser.add_argument("--config", help="Run configuration JSON file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--tol", type=float)
    parser.add_argument("--q", type=float)
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--lambda-step", dest="lambda_step", type=float)
    parser.add_argument("--probes", type=int)
    parser.add_argument("--format", choices=[f.value for f in ReportFormat])
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_environment()
    logging.basicConfig(level=log_level(), stream=sys.stderr)
    args = build_parser().parse_args(argv)
    config = None
    try:
        config = load_config(
            args.config,
            command=args.command,
            inputs=args.inputs,
            seed=args.seed,
            tol=args.tol,
            q=args.q,
            epsilon=args.epsilon,
            lambda_step=args.lambda_step,
            probes=args.probes,
            format=args.format,
        )
        report = dispatch(config)
    except CertificationError as e:
        assert config is not None
        logger.error("certification refuted: %s", e)
        worst = None if e.certificate is None else e.certificate.refutations[-1]
        failure = _entry(
            "ball_certificate",
            "CERTIFICATION_FAILED",
            f"SCANNED({config.lambda_step:g})",
            reason=str(e),
            probe=None if worst is None else {"index": worst.index, "lambda": worst.lam, "margin": worst.margin},
        )
        sys.stdout.write(emit_report(_report(config, [failure]), config.format))
        return 2
    except (ExtremalError, OSError, json.JSONDecodeError) as e:
        sys.stderr.write(f"error: {str(e)}\n")
        return 1
    sys.stdout.write(emit_report(report, config.format))
    return 0


if __name__ == "__main__":
    sys.exit(main())
