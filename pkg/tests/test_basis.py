import numpy as np
import numpy.testing as npt
import pytest
from scipy.interpolate import BSpline as SciPyBSpline

from ttdensity.basis import BSplineBasis, basis_for_bounds

from oracles import eval_vector_naive, gram_quad, integral_quad


def test_knot_vector_is_clamped_and_uniform():
    b = BSplineBasis(8, 0.0, 1.0, degree=2)
    assert len(b.knots) == 8 + 2 + 1
    npt.assert_allclose(b.knots[:3], 0.0)
    npt.assert_allclose(b.knots[-3:], 1.0)
    npt.assert_allclose(np.diff(b.breakpoints), b.breakpoints[1] - b.breakpoints[0])


def test_size_must_cover_degree():
    with pytest.raises(ValueError):
        BSplineBasis(2, 0.0, 1.0, degree=2)
    BSplineBasis(3, 0.0, 1.0, degree=2)  # smallest legal


def test_degree0_indicator_membership():
    b = BSplineBasis(2, 0.0, 1.0, degree=0)
    npt.assert_allclose(b.eval_vector(0.25), [1.0, 0.0])
    npt.assert_allclose(b.eval_vector(0.75), [0.0, 1.0])


def test_partition_of_unity_interior_grid():
    b = BSplineBasis(8, -1.0, 3.0, degree=2)
    xs = np.linspace(-1.0, 3.0, 1000)[1:-1]
    sums = b.eval_matrix(xs).sum(axis=1)
    npt.assert_allclose(sums, 1.0, atol=1e-12, rtol=0)


def test_nonnegative_and_zero_outside():
    b = BSplineBasis(9, 0.0, 2.0, degree=2)
    xs = np.linspace(-1.0, 3.0, 500)
    vals = b.eval_matrix(xs)
    assert vals.min() >= 0.0
    outside = (xs < 0.0) | (xs > 2.0)
    npt.assert_allclose(vals[outside], 0.0)


def test_at_most_degree_plus_one_nonzero():
    b = BSplineBasis(10, 0.0, 1.0, degree=2)
    for x in np.linspace(0, 1, 37):
        assert np.count_nonzero(b.eval_vector(x)) <= 3


def test_eval_matches_naive_cox_de_boor():
    b = BSplineBasis(8, 0.0, 1.0, degree=2)
    for x in [0.37, 0.0, 1.0, 0.125, 0.99]:
        npt.assert_allclose(b.eval_vector(x), eval_vector_naive(b, x), atol=1e-13)


@pytest.mark.parametrize("degree", [0, 1, 2, 3])
def test_eval_matches_scipy(degree):
    b = BSplineBasis(degree + 5, -0.5, 2.0, degree=degree)
    rng = np.random.default_rng(0)
    coef = rng.normal(size=b.size)
    xs = np.linspace(-0.5, 2.0, 101)[:-1]  # scipy's right end convention differs
    ours = b.eval_matrix(xs) @ coef
    ref = SciPyBSpline(b.knots, coef, degree)(xs)
    npt.assert_allclose(ours, ref, atol=1e-12)


def test_integral_degree0_interval_widths():
    b = BSplineBasis(4, 0.0, 1.0, degree=0)
    npt.assert_allclose(b.integral_vector(), [0.25] * 4)


def test_integrals_sum_to_width():
    for degree in (0, 1, 2, 3):
        b = BSplineBasis(7, -2.0, 5.0, degree=degree)
        assert b.integral_vector().sum() == pytest.approx(7.0, abs=1e-12)


def test_integral_matches_quadrature_oracle():
    b = BSplineBasis(8, 0.0, 1.0, degree=2)
    expected = [integral_quad(b, i) for i in range(b.size)]
    npt.assert_allclose(b.integral_vector(), expected, atol=1e-10)


def test_partial_integral_endpoints_and_oracle():
    b = BSplineBasis(8, 0.0, 1.0, degree=2)
    npt.assert_allclose(b.partial_integral_vector(0.0), 0.0)
    npt.assert_allclose(b.partial_integral_vector(-3.0), 0.0)
    npt.assert_allclose(b.partial_integral_vector(1.0), b.integral_vector())
    npt.assert_allclose(b.partial_integral_vector(7.0), b.integral_vector())
    expected = [integral_quad(b, i, a=0.5) for i in range(b.size)]
    npt.assert_allclose(b.partial_integral_vector(0.5), expected, atol=1e-10)


def test_partial_integral_nondecreasing_in_threshold():
    b = BSplineBasis(6, 0.0, 1.0, degree=2)
    grid = np.linspace(-0.1, 1.1, 61)
    vals = b.partial_integral_vector(grid)
    assert np.all(np.diff(vals, axis=0) >= -1e-14)


def test_partial_integral_derivative_is_basis_value():
    b = BSplineBasis(8, 0.0, 1.0, degree=2)
    h = 1e-6
    for a in [0.2, 0.43, 0.77]:
        fd = (b.partial_integral_vector(a + h) - b.partial_integral_vector(a - h)) / (2 * h)
        npt.assert_allclose(fd, b.eval_vector(a), atol=1e-5)


def test_gram_degree0_is_scaled_identity():
    b = BSplineBasis(5, 0.0, 1.0, degree=0)
    npt.assert_allclose(b.gram_matrix(), 0.2 * np.eye(5), atol=1e-14)


def test_gram_properties_and_oracle():
    b = BSplineBasis(8, 0.0, 1.0, degree=2)
    gram = b.gram_matrix()
    npt.assert_allclose(gram, gram.T, atol=1e-15)
    assert np.linalg.eigvalsh(gram).min() >= -1e-12
    # bandwidth <= 2*degree+1: entries vanish beyond |i-j| > degree... use support overlap
    for i in range(b.size):
        for j in range(b.size):
            if abs(i - j) > b.degree:
                assert gram[i, j] == 0.0
            npt.assert_allclose(gram[i, j], gram_quad(b, i, j), atol=1e-12)


def test_partial_gram_endpoints_and_oracle():
    b = BSplineBasis(8, 0.0, 1.0, degree=2)
    npt.assert_allclose(b.partial_gram_matrix(0.0), 0.0)
    npt.assert_allclose(b.partial_gram_matrix(1.0), b.gram_matrix())
    expected = np.array([[gram_quad(b, i, j, a=0.5) for j in range(8)] for i in range(8)])
    npt.assert_allclose(b.partial_gram_matrix(0.5), expected, atol=1e-12)


def test_partial_gram_diagonal_nondecreasing():
    b = BSplineBasis(6, 0.0, 1.0, degree=2)
    prev = np.zeros(6)
    for a in np.linspace(0.0, 1.0, 41):
        diag = np.diag(b.partial_gram_matrix(a))
        assert np.all(diag >= prev - 1e-14)
        prev = diag


def test_partial_linear_forms_matches_partial_integrals():
    b = BSplineBasis(8, 0.0, 1.0, degree=2)
    rng = np.random.default_rng(3)
    w = rng.normal(size=8)
    a = rng.uniform(-0.2, 1.2, size=20)
    expected = b.partial_integral_vector(a) @ w
    npt.assert_allclose(b.partial_linear_forms(w, a), expected, atol=1e-12)
    # per-row weights
    ws = rng.normal(size=(20, 8))
    expected = np.einsum("nm,nm->n", b.partial_integral_vector(a), ws)
    npt.assert_allclose(b.partial_linear_forms(ws, a), expected, atol=1e-12)


def test_partial_quadratic_forms_matches_partial_gram():
    b = BSplineBasis(8, 0.0, 1.0, degree=2)
    rng = np.random.default_rng(4)
    q = rng.normal(size=(8, 8))
    a = rng.uniform(-0.2, 1.2, size=15)
    expected = np.array([np.sum(b.partial_gram_matrix(v) * q) for v in a])
    npt.assert_allclose(b.partial_quadratic_forms(q, a), expected, atol=1e-12)
    qs = rng.normal(size=(15, 8, 8))
    expected = np.array([np.sum(b.partial_gram_matrix(v) * qi) for v, qi in zip(a, qs)])
    npt.assert_allclose(b.partial_quadratic_forms(qs, a), expected, atol=1e-12)


def test_basis_for_bounds():
    bases = basis_for_bounds(np.array([[0.0, 1.0], [-2.0, 2.0]]), 6)
    assert len(bases) == 2
    assert bases[1].lo == -2.0 and bases[1].hi == 2.0 and bases[1].size == 6
