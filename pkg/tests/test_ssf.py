import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from doilab.errors import ParameterError
from doilab.funcspace import REGISTRY_NAMES, build_phi, registry_function
from doilab.ssf import (
    StepFunction,
    counting_function,
    gauss_legendre_adaptive,
    krein_residual,
    krein_scale,
    path_continuity_report,
    pseudometric,
    weight_comparison_check,
    weighted_integral,
    weighted_l1_distance,
    xi,
    xi_change_of_variables,
)

from conftest import herm

seeds = st.integers(0, 2**32 - 1)


def test_counting_function_examples():
    N = counting_function(np.diag([1.0, 2.0, 2.0, 5.0]))
    assert N(2.0) == 3
    assert N(0.99) == 0
    assert N(5.0) == 4 and N(100.0) == 4
    assert list(N([1.0, 1.5, 4.999])) == [1, 1, 3]


def test_step_function_validation():
    with pytest.raises(ParameterError):
        StepFunction(np.array([1.0, 0.0]), np.array([0, 1, 0]))
    with pytest.raises(ParameterError):
        StepFunction(np.array([0.0]), np.array([1, 0]))
    with pytest.raises(ParameterError):
        StepFunction(np.array([0.0]), np.array([0, 0.5]))
    with pytest.raises(ParameterError):
        StepFunction(np.array([0.0]), np.array([0, 1, 2]))


def test_step_csv_round_trip():
    s = StepFunction(np.array([-1.25, 0.1, 3.0]), np.array([0, 2, -1, 0]))
    text = s.to_csv()
    assert text.splitlines()[0] == "breakpoint,level_after"
    assert StepFunction.from_csv(text).equals(s)
    with pytest.raises(ParameterError):
        StepFunction.from_csv("x,y\n1,2\n")


def test_step_arithmetic():
    a = StepFunction(np.array([0.0, 1.0]), np.array([0, 1, 0]))
    b = StepFunction(np.array([0.5, 2.0]), np.array([0, 2, 0]))
    c = a + b
    assert [c(x) for x in (-1, 0, 0.5, 1, 2)] == [0, 1, 3, 2, 0]
    assert (a - a).equals(StepFunction.zero())
    assert (-a)(0.5) == -1


def test_xi_examples():
    assert xi(np.diag([1.0, 2.0]), np.diag([1.0, 2.0])).equals(StepFunction.zero())
    s = xi(np.array([[0.0]]), np.array([[1.0]]))
    assert [s(x) for x in (-0.1, 0.0, 0.5, 1.0)] == [0, 1, 1, 0]
    with pytest.raises(ParameterError):
        xi(np.eye(2), np.eye(3))


def test_krein_one_by_one():
    f = registry_function("rational-m", 1)
    assert krein_residual(np.array([[0.0]]), np.array([[1.0]]), f) <= 1e-15


@given(seeds, st.integers(2, 20), st.sampled_from(REGISTRY_NAMES), st.sampled_from([1, 3, 5]))
def test_krein_random(seed, n, name, m):
    rng = np.random.default_rng(seed)
    A, B = herm(rng, n), herm(rng, n)
    f = registry_function(name, m)
    assert krein_residual(A, B, f) <= 1e-8 * krein_scale(A, B, f)


def test_krein_quadrature_mode(rng):
    f = registry_function("rational-m", 3)
    A, B = herm(rng, 8), herm(rng, 8)
    assert krein_residual(A, B, f, quadrature=True) <= 1e-8 * krein_scale(A, B, f)


def test_krein_rank_one_and_constant(rng):
    A = herm(rng, 7)
    e1 = np.zeros((7, 7))
    e1[0, 0] = 1
    f = lambda x: 1 / (np.asarray(x) ** 2 + 1)  # noqa: E731
    assert krein_residual(A, A, f) == 0
    assert krein_residual(A, A + e1, f) <= 1e-9
    assert krein_residual(A, herm(rng, 7), lambda x: 0 * np.asarray(x) + 3.0) == 0


@given(seeds, st.integers(1, 10))
def test_xi_antisymmetry_and_additivity(seed, n):
    rng = np.random.default_rng(seed)
    A, B, C = herm(rng, n), herm(rng, n), herm(rng, n)
    assert xi(A, B).equals(-xi(B, A))
    lhs = xi(A, C)
    rhs = xi(B, C) + xi(A, B)
    nu = rng.uniform(-8, 8, 200)
    assert np.array_equal(lhs(nu), rhs(nu))


def test_change_of_variables(rng):
    phi = build_phi(3)
    for _ in range(5):
        A, B = herm(rng, 8), herm(rng, 8)
        nu = rng.uniform(-8, 8, 100)
        assert np.array_equal(xi_change_of_variables(A, B, phi, nu), xi(A, B)(nu))
    A, B = herm(rng, 4), herm(rng, 4)
    assert xi_change_of_variables(A, B, phi, -100.0) == 0
    # exactly at an eigenvalue rounding may land on either side of the jump
    w = np.linalg.eigvalsh(A)
    got = xi_change_of_variables(A, B, phi, w, strict=False)
    ref = xi(A, B)
    assert np.all((got == ref(w)) | (got == ref(w - 1e-9)) | (got == ref(w + 1e-9)))


def test_gauss_legendre():
    assert gauss_legendre_adaptive(np.exp, 0, 1) == pytest.approx(np.e - 1, abs=1e-12)
    assert gauss_legendre_adaptive(lambda x: 1 / (1 + 100 * x**2), -5, 5) == pytest.approx(
        2 * np.arctan(50) / 10, abs=1e-10)
    assert gauss_legendre_adaptive(np.exp, 1, 1) == 0


def test_weighted_l1_examples():
    ind = StepFunction(np.array([0.0, 1.0]), np.array([0, 1, 0]))
    zero = StepFunction.zero()
    assert weighted_l1_distance(ind, ind, 1) == 0
    assert weighted_l1_distance(ind, zero, 1) == pytest.approx(np.pi / 4, abs=1e-9)
    f = lambda x: np.cos(np.asarray(x))  # noqa: E731
    one = weighted_l1_distance(ind, zero, 3, f)
    two = weighted_l1_distance(ind, zero, 3, lambda x: 2 * f(x))
    assert two == pytest.approx(2 * one, rel=1e-12)


def test_weighted_l1_requires_compact():
    N = counting_function(np.eye(2))
    with pytest.raises(ParameterError):
        weighted_l1_distance(N, StepFunction.zero(), 1)


def test_weighted_l1_positive_on_perturbed_pairs(rng):
    for _ in range(20):
        A, B = herm(rng, 5), herm(rng, 5)
        s1 = xi(A, B)
        s2 = xi(A, B + 1e-3 * np.eye(5))
        assert weighted_l1_distance(s1, s2, 3) > 0


def test_weighted_integral_matches_direct():
    s = StepFunction(np.array([-1.0, 2.0]), np.array([0, 3, 0]))
    assert weighted_integral(s, np.cos) == pytest.approx(3 * (np.sin(2) - np.sin(-1)), abs=1e-10)


def test_pseudometric_examples():
    s3 = np.sqrt(3)
    A, B = s3 * np.eye(2), s3 * np.diag([1.0, -1.0])
    assert pseudometric(A, B, 3, 1j).value <= 1e-15
    assert pseudometric(A, B, 3, -3j).value == pytest.approx(1 / (12 * s3), rel=1e-12)
    assert pseudometric(A, A, 3, 2j).value == 0
    with pytest.raises(ParameterError):
        pseudometric(A, B, 3, 1.0)


@given(seeds, st.integers(1, 8), st.sampled_from([1j, 2j, -3j, 1 + 1j]), st.sampled_from([1, 3, 5]))
def test_pseudometric_axioms(seed, n, z, m):
    rng = np.random.default_rng(seed)
    S1, S2, S3 = herm(rng, n), herm(rng, n), herm(rng, n)
    d12 = pseudometric(S1, S2, m, z).value
    assert d12 >= 0
    assert d12 == pytest.approx(pseudometric(S2, S1, m, z).value, rel=1e-12, abs=1e-15)
    assert pseudometric(S1, S1, m, z).value == 0
    d13, d32 = pseudometric(S1, S3, m, z).value, pseudometric(S3, S2, m, z).value
    assert d12 <= d13 + d32 + 1e-12


def test_path_report_zero_path(rng):
    A0, B0 = herm(rng, 6), herm(rng, 6)
    rep = path_continuity_report(A0, B0, B0, 3)
    assert rep.max_distance == 0 and np.all(rep.pseudo == 0)
    assert rep.slope is None


def test_path_report_rank_one(rng):
    A0, B0 = herm(rng, 10), herm(rng, 10)
    v = rng.standard_normal(10) + 1j * rng.standard_normal(10)
    rep = path_continuity_report(A0, B0, B0 + np.outer(v, v.conj()), 3)
    d = rep.distance
    assert d[1] <= 0.05 * d[-1]
    assert rep.slope >= 0.9
    assert np.all(rep.functional <= d + 1e-12)
    lines = rep.to_csv().splitlines()
    assert lines[0].startswith("tau,d_m_z[0+1i]") and lines[0].endswith("weighted_distance,functional_difference")
    assert len(lines) == 1 + 12
    assert set(json.loads(rep.to_json())) == {"slope", "monotone", "max_distance"}


def test_path_report_rejects_bad_taus(rng):
    A = herm(rng, 3)
    with pytest.raises(ParameterError):
        path_continuity_report(A, A, A, 3, taus=[0.0, 1.5])


@pytest.mark.parametrize("m", [1, 3, 5, 7])
def test_weight_comparison(m):
    rep = weight_comparison_check(build_phi(m))
    assert rep.passed and rep.violations == 0
    assert np.isfinite(rep.C0) and rep.C0 > 0
    mu = np.geomspace(1.0001, 1e6, 50)
    closed = 1 / (m * mu ** (1 - 1 / m) * (mu ** (1 + 1 / m) + 1))
    assert np.all(closed <= (1 + 1e-12) / (mu**2 + 1))


def test_weight_comparison_requires_r1():
    with pytest.raises(ParameterError):
        weight_comparison_check(build_phi(3, r=2.0))
