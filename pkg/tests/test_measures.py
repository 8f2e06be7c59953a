import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from degensink import (
    InfeasibleProjection,
    geometric_mean,
    marginal_col,
    marginal_row,
    project_first_marginal,
    project_second_marginal,
    rel_entropy,
    rel_entropy_coupling,
    total_mass,
    tv_distance,
)
from conftest import P_STAR, Q_STAR, R_STAR


def test_total_mass():
    assert total_mass([2.0, 2.0, 2.0]) == 6.0
    assert total_mass([]) == 0.0
    assert total_mass([0.5, 0.25]) == 0.75


def test_marginals_upper_triangular(appendix):
    r, _, _ = appendix
    assert np.array_equal(marginal_row(r), [3.0, 2.0, 1.0])
    assert np.array_equal(marginal_col(r), [1.0, 2.0, 3.0])
    zero = np.zeros((2, 3))
    assert np.array_equal(marginal_row(zero), [0.0, 0.0])
    assert np.array_equal(marginal_col(zero), [0.0, 0.0, 0.0])


def test_rel_entropy_basics():
    assert rel_entropy([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0
    assert rel_entropy([1.0, 0.0], [0.0, 1.0]) == math.inf
    assert rel_entropy([2.0, 0.0], [1.0, 1.0]) == pytest.approx(2 * math.log(2))
    with pytest.raises(ValueError):
        rel_entropy([1.0], [1.0, 2.0])


def test_rel_entropy_coupling():
    r = np.ones((2, 2))
    assert rel_entropy_coupling(r, r) == 0.0
    p = r.copy()
    rz = r.copy()
    rz[0, 1] = 0.0
    assert rel_entropy_coupling(p, rz) == math.inf
    # direct evaluation of the definition for P = 2R on all-ones 2x2
    assert rel_entropy_coupling(2 * r, r) == pytest.approx(4 * (2 * math.log(2) - 1))
    with pytest.raises(ValueError):
        rel_entropy_coupling(np.ones((2, 2)), np.ones((2, 3)))


def test_project_first_marginal_appendix(appendix):
    r, mu, _ = appendix
    p1 = project_first_marginal(r, mu)
    expected = np.array([[2 / 3, 2 / 3, 2 / 3], [0, 1, 1], [0, 0, 2.0]])
    np.testing.assert_allclose(p1, expected)
    np.testing.assert_allclose(marginal_row(p1), mu)
    # optimal value identity H(P|R) = H(mu | mu^R)
    assert rel_entropy_coupling(p1, r) == pytest.approx(rel_entropy(mu, marginal_row(r)))


def test_project_first_marginal_identity_and_diag(appendix):
    r, _, _ = appendix
    np.testing.assert_allclose(project_first_marginal(r, marginal_row(r)), r)
    np.testing.assert_allclose(project_first_marginal(np.eye(2), [3.0, 5.0]), np.diag([3.0, 5.0]))
    with pytest.raises(InfeasibleProjection):
        project_first_marginal(np.diag([1.0, 0.0]), np.array([1.0, 1.0]))


def test_project_second_marginal(appendix):
    r, mu, nu = appendix
    q1 = project_second_marginal(project_first_marginal(r, mu), nu)
    expected = np.array([[2.0, 6 / 5, 2 / 11], [0, 9 / 5, 3 / 11], [0, 0, 6 / 11]])
    np.testing.assert_allclose(q1, expected)
    np.testing.assert_allclose(project_second_marginal(r, marginal_col(r)), r)
    np.testing.assert_allclose(project_second_marginal(np.eye(2), [4.0, 1.0]), np.diag([4.0, 1.0]))


def test_geometric_mean(appendix):
    np.testing.assert_allclose(geometric_mean(P_STAR, Q_STAR), R_STAR)
    p = np.array([[1.0, 4.0]])
    np.testing.assert_allclose(geometric_mean(p, p), p)
    np.testing.assert_allclose(geometric_mean([[1.0, 4.0]], [[9.0, 1.0]]), [[3.0, 2.0]])


def test_tv_distance():
    assert tv_distance(P_STAR, P_STAR) == 0.0
    assert tv_distance(P_STAR, Q_STAR) == pytest.approx(2.0)
    assert tv_distance([[1.0]], [[0.0]]) == 1.0


# ---------------------------------------------------------------------------
# invariants

@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=60, deadline=None)
def test_entropy_nonnegative_zero_iff_equal(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    r = rng.uniform(0.1, 3.0, n)
    p = rng.uniform(0.0, 3.0, n)
    h = rel_entropy(p, r)
    assert h >= 0.0
    assert rel_entropy(r, r) == 0.0
    if h == 0.0:
        np.testing.assert_allclose(p, r, atol=1e-12)


def _legendre_sides(z, p, r):
    # <Z, p> with -inf * 0 = 0; H(p|r) + <e^Z - 1, r>
    sup_p = p > 0
    lhs = float(np.sum(z[sup_p] * p[sup_p]))
    rhs = rel_entropy(p, r) + float(np.sum((np.exp(z) - 1.0) * r))
    return lhs, rhs


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=80, deadline=None)
def test_legendre_inequality_and_equality(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    r = np.where(rng.random(n) < 0.8, rng.uniform(0.05, 3.0, n), 0.0)
    p = np.where(rng.random(n) < 0.8, rng.uniform(0.0, 3.0, n), 0.0) * (r > 0)
    z = rng.normal(0.0, 1.5, n)
    z[rng.random(n) < 0.15] = -math.inf
    lhs, rhs = _legendre_sides(z, p, r)
    assert lhs <= rhs + 1e-10
    # equality case: Z = log(p/r) on supp r (log(0/a) = -inf)
    zeq = np.full(n, -math.inf)
    sup = r > 0
    with np.errstate(divide="ignore"):
        zeq[sup] = np.log(np.where(sup, p, 1.0)[sup] / r[sup])
    lhs_eq, rhs_eq = _legendre_sides(zeq, p, r)
    assert lhs_eq == pytest.approx(rhs_eq, abs=1e-10)


def test_data_processing_inequality():
    rng = np.random.default_rng(4)
    for _ in range(200):
        shape = (int(rng.integers(1, 6)), int(rng.integers(1, 6)))
        r = rng.uniform(0.05, 2.0, shape)
        p = rng.uniform(0.0, 2.0, shape)
        h = rel_entropy_coupling(p, r)
        assert rel_entropy(marginal_row(p), marginal_row(r)) <= h + 1e-10
        assert rel_entropy(marginal_col(p), marginal_col(r)) <= h + 1e-10


def test_projection_is_entropy_minimizer():
    rng = np.random.default_rng(12)
    for _ in range(50):
        n, m = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        r = rng.uniform(0.1, 2.0, (n, m))
        mu = rng.uniform(0.2, 2.0, n)
        p = project_first_marginal(r, mu)
        base = rel_entropy_coupling(p, r)
        for _ in range(8):
            delta = rng.normal(0.0, 1.0, (n, m))
            delta -= delta.mean(axis=1, keepdims=True)  # row sums zero
            scale = 1e-3 / max(np.abs(delta).max(), 1e-9)
            cand = p + scale * delta
            if (cand < 0).any():
                continue
            assert rel_entropy_coupling(cand, r) >= base - 1e-12


def test_projection_conserves_mass():
    rng = np.random.default_rng(3)
    for _ in range(50):
        r = rng.uniform(0.0, 2.0, (3, 4))
        r[0, 0] = 1.0
        mu = rng.uniform(0.0, 2.0, 3) * (marginal_row(r) > 0)
        p = project_first_marginal(r, mu)
        assert total_mass(p) == pytest.approx(total_mass(mu), abs=1e-12)
