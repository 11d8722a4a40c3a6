import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from langchain_extremal.errors import (
    CertificateError,
    ConvergenceError,
    ExtremalError,
    HypothesisError,
    NotNonexpansiveError,
)
from langchain_extremal.mappings import (
    Grid,
    Linear,
    RetractCompose,
    identity,
    materialize,
)
from langchain_extremal.normed import NormTag, SpaceContext, lattice_grid, make_rng
from langchain_extremal.pf_geometry import (
    DecompositionCertificate,
    FeasibilityMethod,
    HullStatus,
    affine_hull_probe,
    complement_witness,
    limit_certificate,
    linear_certificate,
    merge_certs,
    merge_parameters,
    pfq_membership,
    ray_extend,
    swap_certificate,
    trivial_certificate,
)

LINF_2 = SpaceContext(2, NormTag.LINF)


def diag(*entries: float) -> Linear:
    return Linear(LINF_2, np.diag(entries))


# certificates


def test_trivial_certificate_records_f_as_partner() -> None:
    f = diag(0.5, 0.5)
    cert = trivial_certificate(f)
    assert cert.lam == 0.0
    assert cert.h is f
    assert cert.residual == 0.0
    assert cert.method == "EXACT"


def test_build_rejects_bad_certificates() -> None:
    f = diag(0.5, 0.5)
    with pytest.raises(CertificateError):
        DecompositionCertificate.build(f, 1.0, f, f)
    with pytest.raises(CertificateError):
        DecompositionCertificate.build(f, 0.5, identity(LINF_2), identity(LINF_2))
    with pytest.raises(CertificateError):
        DecompositionCertificate.build(f, 0.5, diag(2.0, 2.0), diag(-1.0, -1.0))


def test_linear_certificate_solves_for_partner() -> None:
    cert = linear_certificate(diag(0.5, 1.0), identity(LINF_2), 0.25)
    assert np.allclose(cert.h.matrix, np.diag([-1.0, 1.0]))
    assert cert.weights == (0.75, 0.25)
    with pytest.raises(HypothesisError):
        linear_certificate(diag(0.5, 1.0), identity(LINF_2), 0.0)


def test_swap_certificate() -> None:
    f = diag(0.5, 0.5)
    cert = linear_certificate(f, diag(0.75, 0.75), 0.2)
    swapped = swap_certificate(cert)
    assert swapped.lam == pytest.approx(0.8)
    assert swapped.g is cert.h
    assert swapped.h is cert.g
    with pytest.raises(HypothesisError):
        swap_certificate(trivial_certificate(f))


# P_{f,q} membership


def test_membership_of_f_itself_is_the_full_window() -> None:
    f = diag(0.5, 0.5)
    window = pfq_membership(f, f, 0.25)
    assert window.method == FeasibilityMethod.EXACT_LINEAR.value
    assert window.intervals == ((0.25, 0.75),)


def test_scaled_identity_window() -> None:
    window = pfq_membership(diag(0.5, 0.5), identity(LINF_2), 0.1)
    (lo, hi), = window.intervals
    assert 0.25 < lo <= 0.25 + 1e-9
    assert hi == 0.9
    assert not window.contains(0.2)
    assert linear_certificate(diag(0.5, 0.5), identity(LINF_2), lo).residual <= 1e-10


def test_antipodal_pair_has_empty_window() -> None:
    minus = Linear(LINF_2, -np.eye(2))
    for q in (0.05, 0.25, 0.45):
        assert pfq_membership(identity(LINF_2), minus, q).empty


def test_shrunk_row_window_contains_half() -> None:
    window = pfq_membership(diag(0.5, 1.0), identity(LINF_2), 0.25)
    assert window.contains(0.5)


def test_grid_scan_matches_exact_window() -> None:
    points = lattice_grid(LINF_2, 5)
    f = materialize(diag(0.5, 0.5), points)
    g = materialize(identity(LINF_2), points)
    window = pfq_membership(f, g, 0.25)
    assert window.method == "GRID_SCAN(0.001)"
    assert window.intervals[0][0] == 0.25
    assert window.intervals[-1][1] == pytest.approx(0.75)
    assert window.contains(0.5)

    minus = materialize(Linear(LINF_2, -np.eye(2)), points)
    assert pfq_membership(g, minus, 0.25, method=FeasibilityMethod.GRID_SCAN).empty


def test_membership_rejects_bad_q_and_non_affine_exact_requests() -> None:
    with pytest.raises(ExtremalError):
        pfq_membership(identity(LINF_2), identity(LINF_2), 0.5)
    with pytest.raises(ExtremalError):
        pfq_membership(identity(LINF_2), identity(LINF_2), 0.0)
    retract = RetractCompose(LINF_2, identity(LINF_2), 0.5, [0.0, 0.0])
    with pytest.raises(ExtremalError):
        pfq_membership(retract, identity(LINF_2), 0.25, method=FeasibilityMethod.EXACT_LINEAR)


# rays, merges and complements


@pytest.fixture
def half_cert() -> DecompositionCertificate:
    """0.5 I = 0.5 (0.75 I) + 0.5 (0.25 I)."""
    return linear_certificate(diag(0.5, 0.5), diag(0.75, 0.75), 0.5)


def test_ray_extension_beyond_the_member(half_cert: DecompositionCertificate) -> None:
    extended = ray_extend(half_cert, 2.0)
    assert extended.lam == pytest.approx(2.0 / 3.0)
    assert np.allclose(extended.g.matrix, np.eye(2))
    assert extended.residual <= 1e-12


def test_ray_extension_trivial_cases(half_cert: DecompositionCertificate) -> None:
    assert ray_extend(half_cert, 1.0) is half_cert
    assert ray_extend(half_cert, 0.0).lam == 0.0


def test_backward_ray_from_a_trivial_certificate() -> None:
    f = diag(0.5, 0.5)
    for cert in (trivial_certificate(f), linear_certificate(f, f, 0.5)):
        extended = ray_extend(cert, -1.0)
        assert extended.lam == 0.0
        assert extended.g is f


def test_ray_extension_toward_the_member() -> None:
    cert = linear_certificate(diag(0.5, 1.0), identity(LINF_2), 0.25)
    extended = ray_extend(cert, 0.5)
    assert extended.lam == pytest.approx(1.0 / 7.0)
    assert np.allclose(extended.g.matrix, np.diag([0.75, 1.0]))
    assert extended.residual <= 1e-12


def test_ray_extension_backwards_swaps_parts(half_cert: DecompositionCertificate) -> None:
    extended = ray_extend(half_cert, -1.0)
    assert np.allclose(extended.g.matrix, 0.25 * np.eye(2))
    assert extended.lam == pytest.approx(0.5)


def test_ray_extension_leaving_m(half_cert: DecompositionCertificate) -> None:
    with pytest.raises(NotNonexpansiveError):
        ray_extend(half_cert, 10.0)


@pytest.mark.parametrize(
    "lam1, lam2, theta, beta, lam, mu",
    [
        (0.2, 0.6, 0.3, 6.0 / 13.0, 5.0 / 13.0, 0.72),
        (0.5, 0.5, 0.5, 0.5, 0.5, 0.5),
        (0.4, 0.7, 0.0, 0.0, 0.4, 0.0),
    ],
)
def test_merge_parameters(
    lam1: float, lam2: float, theta: float, beta: float, lam: float, mu: float
) -> None:
    params = merge_parameters(lam1, lam2, theta)
    assert params.beta == pytest.approx(beta, abs=1e-15)
    assert params.lam == pytest.approx(lam, abs=1e-15)
    assert params.mu == pytest.approx(mu, abs=1e-15)
    assert max(params.residuals) <= 1e-12


def test_merge_parameters_guard_degenerate_weights() -> None:
    with pytest.raises(CertificateError):
        merge_parameters(1.0, 1.0, 0.5)


def test_merge_certs() -> None:
    f = diag(0.5, 0.5)
    cert1 = linear_certificate(f, diag(0.75, 0.75), 0.2)
    cert2 = linear_certificate(f, diag(1.0, 0.5), 0.6)
    merged = merge_certs(cert1, cert2, 0.3)
    assert merged.lam == pytest.approx(5.0 / 13.0)
    assert np.allclose(merged.g.matrix, np.diag([0.825, 0.675]))
    assert merged.residual <= 1e-12
    assert merge_certs(cert1, cert2, 0.0) is cert1


def test_merge_certs_preconditions() -> None:
    cert = linear_certificate(diag(0.5, 0.5), diag(0.75, 0.75), 0.5)
    other = trivial_certificate(diag(0.5, 0.25))
    with pytest.raises(HypothesisError):
        merge_certs(cert, other, 0.5)
    with pytest.raises(ExtremalError):
        merge_certs(cert, cert, 1.0)


def test_complement_witness_with_equal_weights() -> None:
    f = diag(0.5, 0.5)
    g1, g2 = identity(LINF_2), diag(0.5, 0.5)
    combo_cert = linear_certificate(f, diag(0.75, 0.75), 0.5)
    cert = complement_witness(combo_cert, g1, g2, 0.5)
    assert cert.lam == pytest.approx(0.75)
    assert cert.g is g1
    assert np.allclose(cert.h.matrix, np.eye(2) / 3.0)


def test_complement_witness_on_diagonal_instance() -> None:
    g1, g2 = identity(LINF_2), diag(0.0, 1.0)
    combo = diag(0.4, 1.0)
    f = diag(0.12, 1.0)
    combo_cert = linear_certificate(f, combo, 0.2)
    cert = complement_witness(combo_cert, g1, g2, 0.6)
    assert cert.lam == pytest.approx(0.68)
    assert cert.residual <= 1e-10


def test_complement_witness_needs_positive_weight() -> None:
    f = diag(0.5, 0.5)
    with pytest.raises(HypothesisError):
        complement_witness(trivial_certificate(f), f, f, 0.0)


def test_limit_certificate_on_convergent_grid_family() -> None:
    points = lattice_grid(LINF_2, 3)
    f = Grid(LINF_2, points, 0.5 * points)
    certs = [
        linear_certificate(f, Grid(LINF_2, points, (0.75 - 0.1 * 10.0**-n) * points), 0.5)
        for n in range(1, 9)
    ]
    limit = Grid(LINF_2, points, 0.75 * points)
    cert = limit_certificate(f, limit, certs)
    assert cert.lam == 0.5
    assert cert.method == "EXACT"
    assert np.allclose(cert.h.values, 0.25 * points)
    with pytest.raises(ExtremalError):
        limit_certificate(f, limit, [])
    with pytest.raises(ExtremalError):
        limit_certificate(f, limit, certs[-1:])


def test_limit_certificate_extrapolates_varying_weights() -> None:
    f = diag(0.5, 0.5)
    lams = [0.5 + 0.1 * 2.0**-n for n in range(1, 31)]
    certs = [
        linear_certificate(f, diag(*[(0.5 - 0.25 * lam) / (1.0 - lam)] * 2), lam)
        for lam in lams
    ]
    assert certs[-1].lam - 0.5 > 1e-11
    cert = limit_certificate(f, diag(0.75, 0.75), certs)
    assert cert.lam == pytest.approx(0.5, abs=1e-12)
    assert np.allclose(cert.h.matrix, 0.25 * np.eye(2), atol=1e-12)


def test_limit_certificate_rejects_unsettled_family() -> None:
    points = lattice_grid(LINF_2, 3)
    f = Grid(LINF_2, points, 0.5 * points)
    certs = [
        linear_certificate(f, Grid(LINF_2, points, (0.75 - 0.1 / n) * points), 0.5)
        for n in range(1, 6)
    ]
    with pytest.raises(ConvergenceError):
        limit_certificate(f, Grid(LINF_2, points, 0.75 * points), certs)

    lams = [0.5, 0.55, 0.6]
    drifting = [
        linear_certificate(diag(0.5, 0.5), diag(*[(0.5 - 0.25 * lam) / (1.0 - lam)] * 2), lam)
        for lam in lams
    ]
    with pytest.raises(ConvergenceError):
        limit_certificate(diag(0.5, 0.5), diag(0.75, 0.75), drifting)

# affine hull


@pytest.fixture
def axis_certs() -> list:
    f = diag(0.5, 0.5)
    return [
        linear_certificate(f, diag(0.75, 0.5), 0.5),
        linear_certificate(f, diag(0.5, 0.75), 0.5),
    ]


def test_single_certificate_collapses_to_its_member(half_cert: DecompositionCertificate) -> None:
    report = affine_hull_probe(half_cert.target, [half_cert])
    basis = report.basis
    assert len(basis.directions) == 1
    assert np.allclose(basis.betas, [1.0])
    assert np.allclose(basis.tilde_g.matrix, 0.75 * np.eye(2))
    assert not basis.membership.empty


def test_tilde_member_uses_normalised_weights(axis_certs: list) -> None:
    f = axis_certs[0].target
    report = affine_hull_probe(f, axis_certs, alphas=[2.0, 1.0])
    basis = report.basis
    assert np.allclose(basis.betas, [2.0 / 3.0, 1.0 / 3.0])
    expected = np.diag([0.5 + 0.25 / 3.0, 0.5 + 0.25 / 6.0])
    assert np.allclose(basis.tilde_g.matrix, expected)
    assert basis.tilde_cert.residual <= 1e-10


def test_dependent_directions_are_dropped(half_cert: DecompositionCertificate) -> None:
    f = half_cert.target
    twice = linear_certificate(f, diag(0.625, 0.625), 0.5)
    report = affine_hull_probe(f, [half_cert, twice])
    assert len(report.basis.directions) == 1


def test_hull_probe_candidates(axis_certs: list) -> None:
    f = axis_certs[0].target
    candidates = [
        diag(0.625, 0.5),
        diag(0.375, 0.5),
        diag(1.5, 0.5),
        Linear(LINF_2, np.array([[0.5, 0.1], [0.0, 0.5]])),
        f,
    ]
    reports = affine_hull_probe(f, axis_certs, candidates).candidates
    statuses = [report.status for report in reports]
    assert statuses == [
        HullStatus.CERTIFIED,
        HullStatus.CERTIFIED,
        HullStatus.NOT_IN_M,
        HullStatus.NOT_IN_HULL,
        HullStatus.CERTIFIED,
    ]
    assert np.allclose(reports[0].certificate.g.matrix, candidates[0].matrix)
    assert np.allclose(reports[1].certificate.g.matrix, candidates[1].matrix)
    assert reports[3].residual > 0.0


def test_hull_probe_preconditions(half_cert: DecompositionCertificate) -> None:
    with pytest.raises(ExtremalError):
        affine_hull_probe(half_cert.target, [])
    with pytest.raises(HypothesisError):
        affine_hull_probe(diag(0.25, 0.25), [half_cert])


# randomised convexity and ray checks


def _random_linear(rng: np.random.Generator, radius: float) -> Linear:
    A = rng.uniform(-1.0, 1.0, (2, 2))
    A = A / np.sum(np.abs(A), axis=1, keepdims=True)
    return Linear(LINF_2, A * rng.uniform(0.0, radius, (2, 1)))


ray_steps = st.one_of(
    st.floats(-1.0, 0.0, exclude_max=True),
    st.floats(0.0, 1.0, exclude_min=True, exclude_max=True),
    st.floats(1.0, 2.0, exclude_min=True),
)


@settings(max_examples=1000, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    lam1=st.floats(0.75, 0.95),
    lam2=st.floats(0.75, 0.95),
    theta=st.floats(0.0, 1.0, exclude_max=True),
    t=ray_steps,
)
def test_random_certificate_pairs(
    seed: int, lam1: float, lam2: float, theta: float, t: float
) -> None:
    rng = make_rng(seed)
    f = _random_linear(rng, 0.5)
    g1, g2 = _random_linear(rng, 1.0), _random_linear(rng, 1.0)
    cert1 = linear_certificate(f, g1, lam1)
    cert2 = linear_certificate(f, g2, lam2)

    params = merge_parameters(lam1, lam2, theta)
    assert max(params.residuals) <= 1e-12
    assert 0.0 <= params.beta < 1.0
    assert 0.0 <= params.lam < 1.0
    assert 0.0 <= params.mu < 1.0
    merged = merge_certs(cert1, cert2, theta)
    assert np.allclose(merged.g.matrix, (1 - theta) * g1.matrix + theta * g2.matrix)
    assert merged.residual <= 1e-10
    assert 0.0 <= merged.lam < 1.0

    complement = complement_witness(merged, g1, g2, theta)
    assert complement.g is g1
    assert complement.residual <= 1e-10
    assert 0.0 <= complement.lam < 1.0

    try:
        extended = ray_extend(cert1, t)
    except NotNonexpansiveError:
        assert t < 0.0 or t > 1.0
        return
    assert np.allclose(extended.g.matrix, f.matrix + t * (g1.matrix - f.matrix))
    assert extended.residual <= 1e-10
    assert 0.0 <= extended.lam < 1.0
