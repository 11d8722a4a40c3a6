# =============> LANGCHAIN IMPLEMENTATION <=============

"""LangchainExtremal tools."""
from typing import Any, Dict, List, Optional, Type

from langchain_core.callbacks import CallbackManagerForToolRun
from langchain_core.tools import BaseTool
from pydantic import BaseModel, ConfigDict, Field

from .documents import expr_to_data, jsonable, parse_mapping
from .errors import DegenerateWitnessError, ExtremalError, NoPairFoundError
from .extremality import Profile, classify_linear_extremal, urysohn_pair
from .normed import DEFAULT_TOL, NormTag, SpaceContext, classify_point
from .porosity import SearchBudget, build_porosity_witness, certify_ball_empty


class LinearExtremalityInput(BaseModel):
    matrix: List[List[float]] = Field(
        ..., description="Square matrix of a linear map on linf^n, row-major"
    )
    tol: float = Field(default=DEFAULT_TOL, gt=0, description="Numerical tolerance")


class LinearExtremalityTool(BaseTool):
    """Decide whether a linear nonexpansive self-map of the cube is extremal."""

    name: str = "linear_extremality"
    description: str = (
        "Check whether a linear map on (R^n, sup-norm) is an extreme point of the "
        "nonexpansive self-maps of the unit cube. Returns the verdict and, when it "
        "is not extremal, an explicit decomposition f = (1 - lambda) g + lambda h."
    )
    args_schema: Type[BaseModel] = LinearExtremalityInput

    def _classify(self, matrix: List[List[float]], tol: float) -> Dict[str, Any]:
        try:
            space = SpaceContext(len(matrix), NormTag.LINF)
            verdict = classify_linear_extremal(space, matrix, tol)
        except ExtremalError as e:
            raise ValueError(f"Invalid matrix: {str(e)}")
        result: Dict[str, Any] = {
            "extremal": verdict.extremal,
            "row_norms": [row.norm for row in verdict.row_analyses],
        }
        if verdict.form7_data is not None:
            result["perm"] = verdict.form7_data.perm
            result["signs"] = verdict.form7_data.signs
        if verdict.certificate is not None:
            cert = verdict.certificate
            result["certificate"] = {
                "lambda": cert.lam,
                "g": expr_to_data(cert.g),
                "h": expr_to_data(cert.h),
                "residual": cert.residual,
            }
        return jsonable(result)

    def _run(
        self,
        matrix: List[List[float]],
        tol: float = DEFAULT_TOL,
        *,
        run_manager: Optional[CallbackManagerForToolRun] = None,
    ) -> Dict[str, Any]:
        return self._classify(matrix, tol)

    async def _arun(
        self,
        matrix: List[List[float]],
        tol: float = DEFAULT_TOL,
        *,
        run_manager: Optional[CallbackManagerForToolRun] = None,
    ) -> Dict[str, Any]:
        return self._classify(matrix, tol)


class BallPointInput(BaseModel):
    point: List[float] = Field(..., description="Point of the closed unit ball")
    norm: NormTag = Field(default=NormTag.LINF, description="One of l1, l2, linf")
    tol: float = Field(default=DEFAULT_TOL, gt=0)

    model_config = ConfigDict(use_enum_values=True)


class BallPointClassificationTool(BaseTool):
    name: str = "ball_point_classification"
    description: str = (
        "Classify a point of the unit ball of l1^n, l2^n or linf^n as INTERIOR, "
        "EXPOSED, ALMOST_EXPOSED_ONLY or BOUNDARY_NOT_ALMOST_EXPOSED."
    )
    args_schema: Type[BaseModel] = BallPointInput

    def _classify(self, point: List[float], norm: str, tol: float) -> Dict[str, Any]:
        try:
            space = SpaceContext(len(point), NormTag(norm))
            result = classify_point(space, point, tol)
        except ExtremalError as e:
            raise ValueError(f"Invalid point: {str(e)}")
        return jsonable(
            {
                "tag": result.tag,
                "extreme": result.extreme,
                "exposed": result.exposed,
                "almost_exposed": result.almost_exposed,
                "cone_rank": None if result.cone is None else result.cone.rank(tol),
            }
        )

    def _run(
        self,
        point: List[float],
        norm: str = NormTag.LINF.value,
        tol: float = DEFAULT_TOL,
        *,
        run_manager: Optional[CallbackManagerForToolRun] = None,
    ) -> Dict[str, Any]:
        return self._classify(point, norm, tol)

    async def _arun(
        self,
        point: List[float],
        norm: str = NormTag.LINF.value,
        tol: float = DEFAULT_TOL,
        *,
        run_manager: Optional[CallbackManagerForToolRun] = None,
    ) -> Dict[str, Any]:
        return self._classify(point, norm, tol)


class UrysohnPairInput(BaseModel):
    f: List[float] = Field(..., description="Values of f in the sup-norm ball, one per point")
    x0: int = Field(..., ge=0, description="Index of the point where f is pushed to +-1")
    gamma: float = Field(..., gt=0, description="Neighbourhood width, below 1 - |f(x0)|")
    profile: Profile = Field(default=Profile.INDICATOR, description="INDICATOR or TENT")

    model_config = ConfigDict(use_enum_values=True)


class UrysohnPairTool(BaseTool):
    name: str = "urysohn_pair"
    description: str = (
        "Build the pair g+ and g- that agree with f away from x0, reach +1 and -1 "
        "at x0 and stay within 1 -+ f(x0) + gamma of f."
    )
    args_schema: Type[BaseModel] = UrysohnPairInput

    def _pair(self, f: List[float], x0: int, gamma: float, profile: str) -> Dict[str, Any]:
        try:
            pair = urysohn_pair(f, x0, gamma, Profile(profile))
        except ExtremalError as e:
            raise ValueError(f"Invalid Urysohn input: {str(e)}")
        return jsonable(
            {
                "g_plus": pair.g_plus,
                "g_minus": pair.g_minus,
                "neighbourhood": pair.neighbourhood,
                "defects": pair.defects(),
            }
        )

    def _run(
        self,
        f: List[float],
        x0: int,
        gamma: float,
        profile: str = Profile.INDICATOR.value,
        *,
        run_manager: Optional[CallbackManagerForToolRun] = None,
    ) -> Dict[str, Any]:
        return self._pair(f, x0, gamma, profile)

    async def _arun(
        self,
        f: List[float],
        x0: int,
        gamma: float,
        profile: str = Profile.INDICATOR.value,
        *,
        run_manager: Optional[CallbackManagerForToolRun] = None,
    ) -> Dict[str, Any]:
        return self._pair(f, x0, gamma, profile)


class PorosityWitnessInput(BaseModel):
    f: Dict[str, Any] = Field(..., description="Mapping document of the map to decompose")
    g: Optional[Dict[str, Any]] = Field(
        default=None, description="Mapping document of the ball's neighbour; defaults to f"
    )
    q: float = Field(default=0.25, gt=0, lt=0.5, description="Weight window [q, 1-q]")
    epsilon: float = Field(default=0.5, gt=0, description="Pair search radius")
    seed: int = Field(default=0, ge=0, description="Seed of the sample generator")
    probes: int = Field(default=200, ge=1, description="Probes used to certify the ball")


class PorosityWitnessTool(BaseTool):
    """Build and certify a ball of mappings missing ``P_{f,q}``."""

    name: str = "porosity_witness"
    description: str = (
        "Given mapping documents f and g, find a near-isometric pair of f, build the "
        "retracted center g~ and certify that a ball around it contains no mapping "
        "taking part in a decomposition of f with weights in [q, 1-q]."
    )
    args_schema: Type[BaseModel] = PorosityWitnessInput
    samples: int = Field(default=256, description="Sample budget of the pair search")

    def _witness(
        self,
        f: Dict[str, Any],
        g: Optional[Dict[str, Any]],
        q: float,
        epsilon: float,
        seed: int,
        probes: int,
    ) -> Dict[str, Any]:
        try:
            f_expr = parse_mapping(f)
            g_expr = parse_mapping(g) if g is not None else f_expr
            budget = SearchBudget(self.samples, seed)
            witness = build_porosity_witness(f_expr, g_expr, q, epsilon, budget)
        except NoPairFoundError as e:
            return {"verdict": "NO_PAIR", "reason": str(e), "best_ratio": e.best_ratio}
        except DegenerateWitnessError as e:
            return jsonable({"verdict": "DEGENERATE", "reason": str(e), **e.diagnostics})
        except ExtremalError as e:
            raise ValueError(f"Invalid porosity input: {str(e)}")
        certificate = certify_ball_empty(witness, f_expr, probes, seed=seed)
        return jsonable(
            {
                "verdict": "BUILT",
                "x0": witness.pair.x0,
                "y": witness.pair.y,
                "eta": witness.pair.eta,
                "center_distance": witness.center_distance,
                "radius": witness.radius,
                "min_margin": certificate.min_margin,
                "method": certificate.method,
            }
        )

    def _run(
        self,
        f: Dict[str, Any],
        g: Optional[Dict[str, Any]] = None,
        q: float = 0.25,
        epsilon: float = 0.5,
        seed: int = 0,
        probes: int = 200,
        *,
        run_manager: Optional[CallbackManagerForToolRun] = None,
    ) -> Dict[str, Any]:
        return self._witness(f, g, q, epsilon, seed, probes)

    async def _arun(
        self,
        f: Dict[str, Any],
        g: Optional[Dict[str, Any]] = None,
        q: float = 0.25,
        epsilon: float = 0.5,
        seed: int = 0,
        probes: int = 200,
        *,
        run_manager: Optional[CallbackManagerForToolRun] = None,
    ) -> Dict[str, Any]:
        return self._witness(f, g, q, epsilon, seed, probes)


__all__ = [
    "BallPointClassificationTool",
    "LinearExtremalityTool",
    "PorosityWitnessTool",
    "UrysohnPairTool",
]
