import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from langchain_extremal.documents import (
    Provenance,
    ReportDocument,
    ReportEntry,
    ReportFormat,
    canonical_json,
    digest,
    emit_mapping,
    emit_report,
    jsonable,
    load_schema,
    parse_mapping,
)
from langchain_extremal.errors import MappingDocumentError
from langchain_extremal.mappings import (
    Affine,
    ConvexCombo,
    Grid,
    Linear,
    MappingExpr,
    RetractCompose,
    Translate,
    identity,
    same_expr,
)
from langchain_extremal.normed import NormTag, SpaceContext

LINF_2 = SpaceContext(2, NormTag.LINF)
SPACE = {"dim": 2, "norm": "linf"}


def document(expr: dict, **extra: object) -> dict:
    return {"schema_version": "1.0", "space": SPACE, "expr": expr, **extra}


def test_parse_linear_document() -> None:
    f = parse_mapping(document({"tag": "linear", "matrix": [[0.5, 0.5], [0.0, 1.0]]}))
    assert isinstance(f, Linear)
    assert f.space == LINF_2
    assert np.array_equal(f.matrix, [[0.5, 0.5], [0.0, 1.0]])


def test_parse_nested_document_from_json_text() -> None:
    text = json.dumps(
        document(
            {
                "tag": "combo",
                "lambda": 0.25,
                "left": {"tag": "linear", "matrix": [[1.0, 0.0], [0.0, 1.0]]},
                "right": {
                    "tag": "retract",
                    "inner": {"tag": "affine", "matrix": [[0.0, 0.0], [0.0, 0.0]], "offset": [0.5, 0.0]},
                    "eta": 0.5,
                    "x0": [0.0, 0.0],
                },
            }
        )
    )
    f = parse_mapping(text)
    assert isinstance(f, ConvexCombo)
    assert f.lam == 0.25
    assert isinstance(f.right, RetractCompose)
    assert f.right.eta == 0.5


@pytest.mark.parametrize(
    "expr, message",
    [
        (
            {
                "tag": "combo",
                "lambda": 1.5,
                "left": {"tag": "linear", "matrix": [[1.0, 0.0], [0.0, 1.0]]},
                "right": {"tag": "linear", "matrix": [[1.0, 0.0], [0.0, 1.0]]},
            },
            "lambda out of [0,1]",
        ),
        (
            {
                "tag": "retract",
                "inner": {"tag": "linear", "matrix": [[1.0, 0.0], [0.0, 1.0]]},
                "eta": 0.0,
                "x0": [0.0, 0.0],
            },
            "eta must be positive",
        ),
        ({"tag": "linear", "matrix": [[1.0, 0.0, 0.0]]}, "Invalid mapping at expr"),
        ({"tag": "grid", "points": [[2.0, 0.0]], "values": [[0.0, 0.0]]}, "outside the ball"),
        ({"tag": "spline"}, "Invalid mapping document"),
        (
            {"tag": "linear", "matrix": [[float("nan"), 0.0], [0.0, 1.0]]},
            "entries must be finite",
        ),
    ],
)
def test_invalid_documents(expr: dict, message: str) -> None:
    with pytest.raises(MappingDocumentError) as error:
        parse_mapping(document(expr))
    assert message in str(error.value)


def test_invalid_space_and_version() -> None:
    linear = {"tag": "linear", "matrix": [[1.0]]}
    with pytest.raises(MappingDocumentError):
        parse_mapping({"space": {"dim": 1, "norm": "l3"}, "expr": linear})
    with pytest.raises(MappingDocumentError, match="schema_version"):
        parse_mapping({"schema_version": "2.0", "space": {"dim": 1, "norm": "l1"}, "expr": linear})
    with pytest.raises(MappingDocumentError):
        parse_mapping({"space": {"dim": 1, "norm": "l1"}, "expr": linear, "extra": 1})
    with pytest.raises(MappingDocumentError):
        parse_mapping("{not json")


def test_emitted_document_parses_back_to_the_same_tree() -> None:
    points = np.array([[0.0, 0.0], [1.0, -1.0]])
    f = ConvexCombo(
        LINF_2,
        0.3,
        Translate(LINF_2, Linear(LINF_2, 0.5 * np.eye(2)), [0.25, -0.25]),
        RetractCompose(LINF_2, identity(LINF_2), 0.125, [1.0, 0.0]),
    )
    text = emit_mapping(f)
    assert same_expr(parse_mapping(text), f)
    assert emit_mapping(parse_mapping(text)) == text

    grid = Grid(LINF_2, points, -points)
    assert same_expr(parse_mapping(emit_mapping(grid)), grid)


coordinates = st.floats(-1.0, 1.0, allow_nan=False)
vectors = st.lists(coordinates, min_size=2, max_size=2)
matrices = st.lists(vectors, min_size=2, max_size=2)


@st.composite
def grids(draw: st.DrawFn) -> Grid:
    size = draw(st.integers(1, 4))
    samples = st.lists(vectors, min_size=size, max_size=size)
    return Grid(LINF_2, draw(samples), draw(samples))


leaves = st.one_of(
    st.builds(Linear, st.just(LINF_2), matrices),
    st.builds(Affine, st.just(LINF_2), matrices, vectors),
    grids(),
)
trees = st.recursive(
    leaves,
    lambda children: st.one_of(
        st.builds(ConvexCombo, st.just(LINF_2), st.floats(0.0, 1.0), children, children),
        st.builds(
            RetractCompose, st.just(LINF_2), children, st.floats(1e-6, 2.0), vectors
        ),
        st.builds(Translate, st.just(LINF_2), children, vectors),
    ),
    max_leaves=6,
)


@settings(max_examples=1000, deadline=None)
@given(f=trees)
def test_generated_trees_survive_the_document_round_trip(f: MappingExpr) -> None:
    text = emit_mapping(f)
    parsed = parse_mapping(text)
    assert emit_mapping(parsed) == text
    assert same_expr(parsed, f)


def test_jsonable_normalises_numpy_and_negative_zero() -> None:
    data = jsonable({"a": np.array([-0.0, 0.1]), "b": (NormTag.L1, np.int64(3)), 4: np.bool_(True)})
    assert data == {"a": [0.0, 0.1], "b": ["l1", 3], "4": True}
    assert str(jsonable(-0.0)) == "0.0"


def test_canonical_json_is_sorted_and_shortest() -> None:
    text = canonical_json({"b": 0.1, "a": [1.0 / 3.0, -0.0]})
    assert text == '{\n  "a": [\n    0.3333333333333333,\n    0.0\n  ],\n  "b": 0.1\n}\n'
    assert digest({"b": 0.1, "a": [1.0 / 3.0, 0.0]}) == digest({"a": [1.0 / 3.0, -0.0], "b": 0.1})
    with pytest.raises(ValueError):
        canonical_json({"a": float("nan")})


@pytest.fixture
def report() -> ReportDocument:
    return ReportDocument(
        command="classify",
        provenance=Provenance(command="classify", config_hash="0" * 64, version="0.1.0"),
        entries=[
            ReportEntry(kind="linear_extremality", verdict="EXTREMAL", method="EXACT"),
            ReportEntry(
                kind="certificate", verdict="DECOMPOSED", method="EXACT", data={"lambda": 0.5}
            ),
        ],
    )


def test_json_report(report: ReportDocument) -> None:
    data = json.loads(emit_report(report))
    assert data["schema_version"] == "1.0"
    assert data["provenance"]["seed"] is None
    assert [entry["verdict"] for entry in data["entries"]] == ["EXTREMAL", "DECOMPOSED"]
    assert data["entries"][1]["data"] == {"lambda": 0.5}


def test_csv_report(report: ReportDocument) -> None:
    assert emit_report(report, ReportFormat.CSV) == (
        "index,kind,verdict,method\n"
        "0,linear_extremality,EXTREMAL,EXACT\n"
        "1,certificate,DECOMPOSED,EXACT\n"
    )


@pytest.mark.parametrize("name, title", [("mapping", "MappingDocument"), ("report", "ReportDocument")])
def test_shipped_schemas(name: str, title: str) -> None:
    schema = load_schema(name)
    assert schema["title"] == title
    assert schema["$id"] == f"langchain-extremal/{name}/1.0"
    assert schema["properties"]["schema_version"] == {"const": "1.0"}
