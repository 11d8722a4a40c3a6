"""JSON documents for mappings and run reports."""
import csv
import hashlib
import io
import json
from enum import Enum
from importlib import resources
from typing import Annotated, Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ExtremalError, MappingDocumentError
from .mappings import (
    Affine,
    ConvexCombo,
    Grid,
    Linear,
    MappingExpr,
    RetractCompose,
    Translate,
)
from .normed import NormTag, SpaceContext

SCHEMA_VERSION = "1.0"

Matrix = List[List[float]]
Vector = List[float]


class SpaceDocument(BaseModel):
    dim: int = Field(..., ge=1, description="Dimension of the underlying space")
    norm: NormTag = Field(..., description="One of l1, l2, linf")

    model_config = ConfigDict(extra="forbid")


class LinearDocument(BaseModel):
    tag: Literal["linear"]
    matrix: Matrix = Field(..., description="Row-major square matrix")

    model_config = ConfigDict(extra="forbid")


class AffineDocument(BaseModel):
    tag: Literal["affine"]
    matrix: Matrix
    offset: Vector

    model_config = ConfigDict(extra="forbid")


class GridDocument(BaseModel):
    tag: Literal["grid"]
    points: Matrix = Field(..., description="Sample points of the ball")
    values: Matrix = Field(..., description="Value of the mapping at each sample point")

    model_config = ConfigDict(extra="forbid")


class ComboDocument(BaseModel):
    tag: Literal["combo"]
    lam: float = Field(..., alias="lambda", description="Weight of the right operand")
    left: "ExprDocument"
    right: "ExprDocument"

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    @field_validator("lam")
    @classmethod
    def lambda_in_unit_interval(cls, value: float) -> float:
        if not 0.0 <= value <= 1.0:
            raise ValueError("lambda out of [0,1]")
        return value


class RetractDocument(BaseModel):
    tag: Literal["retract"]
    inner: "ExprDocument"
    eta: float
    x0: Vector

    model_config = ConfigDict(extra="forbid")

    @field_validator("eta")
    @classmethod
    def eta_positive(cls, value: float) -> float:
        if not value > 0.0:
            raise ValueError("eta must be positive")
        return value


class TranslateDocument(BaseModel):
    tag: Literal["translate"]
    inner: "ExprDocument"
    offset: Vector

    model_config = ConfigDict(extra="forbid")


ExprDocument = Annotated[
    Union[
        LinearDocument,
        AffineDocument,
        GridDocument,
        ComboDocument,
        RetractDocument,
        TranslateDocument,
    ],
    Field(discriminator="tag"),
]


class MappingDocument(BaseModel):
    schema_version: str = Field(default=SCHEMA_VERSION)
    space: SpaceDocument
    expr: ExprDocument

    model_config = ConfigDict(extra="forbid")


for _model in (ComboDocument, RetractDocument, TranslateDocument, MappingDocument):
    _model.model_rebuild()


def jsonable(obj: Any) -> Any:
    """Plain JSON data from numpy arrays, enums and tuples."""
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return jsonable(obj.item())
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, float) and obj == 0.0:
        return 0.0
    return obj


def canonical_json(obj: Any) -> str:
    """Sorted keys, shortest round-trip floats, trailing newline."""
    return json.dumps(jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def digest(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


# mappings


def _to_expr(space: SpaceContext, node: Any, path: str) -> MappingExpr:
    try:
        if isinstance(node, LinearDocument):
            return Linear(space, np.array(node.matrix, dtype=float))
        if isinstance(node, AffineDocument):
            return Affine(space, np.array(node.matrix, dtype=float), np.array(node.offset))
        if isinstance(node, GridDocument):
            return Grid(space, np.array(node.points, dtype=float), np.array(node.values, dtype=float))
        if isinstance(node, ComboDocument):
            return ConvexCombo(
                space,
                node.lam,
                _to_expr(space, node.left, f"{path}/left"),
                _to_expr(space, node.right, f"{path}/right"),
            )
        if isinstance(node, RetractDocument):
            return RetractCompose(
                space, _to_expr(space, node.inner, f"{path}/inner"), node.eta, np.array(node.x0)
            )
        if isinstance(node, TranslateDocument):
            return Translate(
                space, _to_expr(space, node.inner, f"{path}/inner"), np.array(node.offset)
            )
    except MappingDocumentError:
        raise
    except (ExtremalError, ValueError) as e:
        raise MappingDocumentError(f"Invalid mapping at {path}: {str(e)}")
    raise MappingDocumentError(f"Invalid mapping at {path}: unknown node")


def parse_mapping(document: Union[str, bytes, Dict[str, Any]]) -> MappingExpr:
    """Validate a mapping document and build its expression tree."""
    try:
        if isinstance(document, dict):
            parsed = MappingDocument.model_validate(document)
        else:
            parsed = MappingDocument.model_validate_json(document)
    except ValidationError as e:
        first = e.errors()[0]
        location = "/".join(str(part) for part in first["loc"]) or "<root>"
        raise MappingDocumentError(f"Invalid mapping document at {location}: {first['msg']}")
    if parsed.schema_version != SCHEMA_VERSION:
        raise MappingDocumentError(
            f"Unsupported schema_version {parsed.schema_version!r}, expected {SCHEMA_VERSION!r}"
        )
    space = SpaceContext(parsed.space.dim, parsed.space.norm)
    return _to_expr(space, parsed.expr, "expr")


def expr_to_data(f: MappingExpr) -> Dict[str, Any]:
    if isinstance(f, Linear):
        return {"tag": "linear", "matrix": jsonable(f.matrix)}
    if isinstance(f, Affine):
        return {"tag": "affine", "matrix": jsonable(f.matrix), "offset": jsonable(f.offset)}
    if isinstance(f, Grid):
        return {"tag": "grid", "points": jsonable(f.points), "values": jsonable(f.values)}
    if isinstance(f, ConvexCombo):
        return {
            "tag": "combo",
            "lambda": f.lam,
            "left": expr_to_data(f.left),
            "right": expr_to_data(f.right),
        }
    if isinstance(f, RetractCompose):
        return {
            "tag": "retract",
            "inner": expr_to_data(f.inner),
            "eta": f.eta,
            "x0": jsonable(f.x0),
        }
    if isinstance(f, Translate):
        return {"tag": "translate", "inner": expr_to_data(f.inner), "offset": jsonable(f.offset)}
    raise ExtremalError(f"unknown mapping node {type(f).__name__}")


def mapping_to_data(f: MappingExpr) -> Dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "space": {"dim": f.space.dim, "norm": f.space.norm_tag.value},
        "expr": expr_to_data(f),
    }


def emit_mapping(f: MappingExpr) -> str:
    return canonical_json(mapping_to_data(f))


# reports


class ReportFormat(str, Enum):
    JSON = "json"
    CSV = "csv"


class Provenance(BaseModel):
    command: str
    config_hash: str = Field(..., description="sha256 of the canonical run configuration")
    version: str
    seed: Optional[int] = None


class ReportEntry(BaseModel):
    kind: str = Field(..., description="What the entry reports on")
    verdict: str
    method: str = Field(..., description="EXACT, SAMPLED(n), SCANNED(step) or GRID_SCAN(step)")
    data: Dict[str, Any] = Field(default_factory=dict)


class ReportDocument(BaseModel):
    schema_version: str = Field(default=SCHEMA_VERSION)
    command: str
    provenance: Provenance
    entries: List[ReportEntry] = Field(default_factory=list)


def emit_report(report: ReportDocument, format: ReportFormat = ReportFormat.JSON) -> str:
    if ReportFormat(format) == ReportFormat.JSON:
        return canonical_json(report.model_dump(mode="python"))
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["index", "kind", "verdict", "method"])
    for index, entry in enumerate(report.entries):
        writer.writerow([index, entry.kind, entry.verdict, entry.method])
    return buffer.getvalue()


def load_schema(name: str) -> Dict[str, Any]:
    """A versioned JSON schema shipped in ``langchain_extremal/schemas``."""
    text = resources.files("langchain_extremal").joinpath("schemas", f"{name}.schema.json").read_text(
        encoding="utf-8"
    )
    return json.loads(text)


__all__ = [
    "SCHEMA_VERSION",
    "MappingDocument",
    "Provenance",
    "ReportDocument",
    "ReportEntry",
    "ReportFormat",
    "canonical_json",
    "digest",
    "emit_mapping",
    "emit_report",
    "expr_to_data",
    "jsonable",
    "load_schema",
    "mapping_to_data",
    "parse_mapping",
]
