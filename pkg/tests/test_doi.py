import json
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from doilab.doi import (
    Kernel,
    KernelReport,
    SeparableRepresentation,
    constant_kernel,
    decaying_part,
    default_mu_grid,
    degenerate_points,
    divided_difference,
    doi_apply,
    fourier_criterion,
    g_kernel,
    kernel_regularity_report,
    select_a,
    separable_bound,
    separable_kernel,
    strong_membership_diagnostic,
)
from doilab.errors import DegenerateKernelError, EvaluationError, KernelEvaluationError, ParameterError
from doilab.funcspace import build_phi, cutoff_split
from doilab.linalg import apply_function, resolvent_power_diff, schatten_norm

from conftest import herm

seeds = st.integers(0, 2**32 - 1)


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), 1e-300)


@pytest.fixture(scope="module")
def split3():
    return cutoff_split(build_phi(3))


def test_constant_kernel_is_identity(rng):
    A, B = herm(rng, 5), herm(rng, 5)
    T = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    assert np.allclose(doi_apply(constant_kernel(1.0), A, B, T), T, atol=1e-12)


@given(seeds, st.integers(1, 10))
def test_separable_kernel(seed, n):
    rng = np.random.default_rng(seed)
    A, B = herm(rng, n), herm(rng, n)
    T = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    a1, a2 = np.cos, (lambda x: 1 / (x + 2j))
    lhs = doi_apply(separable_kernel(a1, a2), A, B, T)
    assert np.max(np.abs(lhs - apply_function(a1, A) @ T @ apply_function(a2, B))) <= 1e-9


def test_sum_kernel_small_example():
    A = np.diag([0.0, 1.0])
    K = Kernel(lambda l, m: l + m, None, "sum")
    assert np.allclose(doi_apply(K, A, A, np.ones((2, 2))), [[0, 1], [1, 2]])


def test_divided_difference_square():
    K = divided_difference(lambda x: x**2, lambda x: 2 * x)
    lam, mu = np.array([0.3, -2.0, 1.0]), np.array([1.7, 0.5, 1.0])
    assert np.allclose(K(lam, mu), lam + mu)
    assert K(1.5, 1.5) == 3.0


def test_divided_difference_linear():
    K = divided_difference(lambda x: 3 * x - 1, lambda x: 3 + 0 * x)
    assert np.allclose(K(np.linspace(-2, 2, 9)[:, None], np.linspace(-1, 3, 9)[None, :]), 3)


@given(seeds, st.integers(2, 12))
def test_fundamental_identity(seed, n):
    rng = np.random.default_rng(seed)
    A, B = herm(rng, n), herm(rng, n)
    f = lambda x: 1 / (x**2 + 1)  # noqa: E731
    df = lambda x: -2 * x / (x**2 + 1) ** 2  # noqa: E731
    lhs = apply_function(f, A) - apply_function(f, B)
    assert rel(lhs, doi_apply(divided_difference(f, df), A, B, A - B)) <= 1e-8


def test_diagonal_rule_used_for_degenerate_spectra():
    A = np.diag([1.0, 1.0, 2.0])
    f, df = np.exp, np.exp
    out = doi_apply(divided_difference(f, df), A, A, np.eye(3))
    assert np.allclose(out, np.diag(np.exp([1.0, 1.0, 2.0])))


def test_kernel_error_names_point():
    K = Kernel(lambda l, m: 1 / (l - m + 0 * l), None, "bad")
    with pytest.raises(KernelEvaluationError, match="1.0"):
        doi_apply(K, np.diag([1.0, 2.0]), np.diag([1.0, 3.0]), np.eye(2))


def test_check_diagonal_rule():
    good = divided_difference(np.sin, np.cos)
    bad = divided_difference(np.sin, np.sin)
    lams = np.linspace(-3, 3, 10)
    assert good.check_diagonal_rule(lams)
    assert not bad.check_diagonal_rule(lams)


@given(seeds, st.integers(1, 8), st.floats(-3, 3))
def test_linearity_and_kernel_additivity(seed, n, s):
    rng = np.random.default_rng(seed)
    A, B = herm(rng, n), herm(rng, n)
    T1, T2 = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) for _ in range(2))
    K1 = divided_difference(np.sin, np.cos)
    K2 = separable_kernel(np.exp, np.cos)
    lhs = doi_apply(K1, A, B, s * T1 + T2)
    rhs = s * doi_apply(K1, A, B, T1) + doi_apply(K1, A, B, T2)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * (1 + np.linalg.norm(lhs))
    both = doi_apply(K1 + K2, A, B, T1)
    assert np.linalg.norm(both - doi_apply(K1, A, B, T1) - doi_apply(K2, A, B, T1)) <= 1e-10 * (1 + np.linalg.norm(both))


def test_doi_shape_mismatch(rng):
    with pytest.raises(ParameterError):
        doi_apply(constant_kernel(), herm(rng, 2), herm(rng, 3), np.eye(3))


def test_degenerate_points_are_real_zeros():
    for m in (3, 5, 7):
        for a in (0.5, -2.0):
            mu = degenerate_points(a, m)
            psi = lambda x: (x - 1j * a) ** (-m)  # noqa: E731
            assert np.allclose(psi(mu), psi(-mu), rtol=1e-12)
    assert degenerate_points(1.0, 1).size == 0


@pytest.mark.parametrize("j", [1, 2])
def test_g_kernel_diagonal(split3, j):
    a = 0.5
    K = g_kernel(j, split3, a)
    g, dg = split3.part(j)
    lam = np.linspace(-3, 3, 13)
    assert np.allclose(K(lam, lam), dg(lam) * (lam - 1j * a) ** 4 / (-3))
    assert K.check_diagonal_rule(np.linspace(-2.5, 2.5, 10))


def test_g2_vanishes_outside_support(split3):
    K = g_kernel(2, split3, 2.0)
    R = split3.theta.r
    lam = np.array([R + 0.5, -R - 3.0, 10.0])
    mu = np.array([-R - 1.0, R + 2.0, 12.0])
    assert np.all(K(lam, mu) == 0)


def test_g_kernel_degenerate_error(split3):
    # a = 1 puts the degenerate pair (-sqrt3, sqrt3) on the support of g1 - g1(-.)
    K = g_kernel(1, split3, 1.0)
    with pytest.raises(DegenerateKernelError):
        K(np.array([-np.sqrt(3)]), np.array([np.sqrt(3)]))


def test_g_kernel_rejects_zero_a(split3):
    with pytest.raises(ParameterError):
        g_kernel(1, split3, 0.0)


@pytest.mark.parametrize("m", [1, 3, 5])
@pytest.mark.parametrize("j", [1, 2])
def test_dOI_reconstruction(m, j):
    sp = cutoff_split(build_phi(m))
    a = select_a(j, sp)
    K = g_kernel(j, sp, a)
    g, _ = sp.part(j)
    rng = np.random.default_rng(100 + m)
    for _ in range(10):
        n = int(rng.integers(2, 11))
        A = herm(rng, n)
        B = A + herm(rng, n, 0.3)
        lhs = apply_function(g, A) - apply_function(g, B)
        assert rel(lhs, doi_apply(K, A, B, resolvent_power_diff(A, B, 1j * a, m))) <= 1e-7


def test_select_a_deterministic_and_admissible(split3):
    a1 = select_a(1, split3)
    assert a1 == select_a(1, split3)
    assert np.all(np.abs(degenerate_points(a1, 3)) <= split3.theta.r / 2)
    a2 = select_a(2, split3)
    assert np.all(np.abs(degenerate_points(a2, 3)) >= split3.theta.r)


def test_report_constant_kernel():
    g = np.linspace(-10, 10, 401)
    rep = kernel_regularity_report(constant_kernel(2 - 1j), g, g)
    assert rep.C_K == pytest.approx(abs(2 - 1j)) and rep.C_tilde == 0 and rep.limit_gap == 0


def test_report_even_kernel_gap():
    L = 10.0
    g = np.linspace(-L, L, 401)
    K = Kernel(lambda l, m: 1 / (1 + l**2) + 0 * m, None, "lorentz")
    assert kernel_regularity_report(K, g, g).limit_gap <= 2 / (1 + L**2)


def test_report_grid_requirements():
    with pytest.raises(ParameterError):
        kernel_regularity_report(constant_kernel(), np.linspace(-5, 5, 401), default_mu_grid())
    with pytest.raises(ParameterError):
        kernel_regularity_report(constant_kernel(), np.linspace(-10, 10, 100))


def test_report_non_finite():
    K = Kernel(lambda l, m: 1 / (l + 0 * m), None, "pole")
    with pytest.raises(EvaluationError):
        kernel_regularity_report(K, np.linspace(-10, 10, 401))


@pytest.mark.parametrize("m", [1, 3, 5])
def test_selected_g_kernels_regular(m):
    sp = cutoff_split(build_phi(m))
    for j in (1, 2):
        rep = kernel_regularity_report(g_kernel(j, sp, select_a(j, sp)))
        assert np.isfinite(rep.C_K) and np.isfinite(rep.C_tilde)
        assert rep.limit_gap <= 1e-3


def test_report_serialization():
    rep = KernelReport("K", 1.0, 2.0, 0.5, None, {"L": 10.0})
    text = rep.to_text()
    assert "C_K=1.0" in text and "grid.L=10.0" in text
    doc = json.loads(rep.to_json())
    assert set(doc) >= {"kernel_label", "C_K", "C_tilde", "limit_gap", "C0", "grid"}


def test_fourier_gaussian():
    rep = fourier_criterion(Kernel(lambda l, m: np.exp(-l**2) + 0 * m, None, "gauss"), 0.0, 2.0)
    assert rep.C0_squared == pytest.approx(1 / np.sqrt(2 * np.pi), rel=0.01)
    assert not rep.truncated and not rep.divergent


def test_fourier_constant_flagged():
    with pytest.warns(RuntimeWarning):
        rep = fourier_criterion(constant_kernel(1.0))
    assert rep.truncated and rep.divergent


def test_fourier_h_part_finite(split3):
    K = g_kernel(1, split3, select_a(1, split3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = fourier_criterion(decaying_part(K), 0.0, 2.0, mu_grid=np.linspace(-5, 5, 11))
    assert np.isfinite(rep.C0) and not rep.divergent


def test_fourier_parameter_checks():
    with pytest.raises(ParameterError):
        fourier_criterion(constant_kernel(), 1.0, 2.0)


def test_separable_bound_examples():
    one = lambda x: np.ones_like(np.asarray(x, dtype=float))  # noqa: E731
    grid = np.linspace(-5, 5, 101)
    b = separable_bound(SeparableRepresentation(((1.0, one, one),)), grid, grid)
    assert b.bound == pytest.approx(1.0)
    assert np.allclose(b.kernel(grid, grid), 1)
    ind = lambda s: (lambda x: (np.sign(np.asarray(x, dtype=float)) == s).astype(float))  # noqa: E731
    rep = SeparableRepresentation(((2.0, ind(1), ind(1)), (2.0, ind(-1), ind(-1))))
    assert separable_bound(rep, grid[grid != 0], grid[grid != 0]).bound == pytest.approx(2.0)


def test_separable_bound_dominates_doi():
    rng = np.random.default_rng(8)
    rep = SeparableRepresentation((
        (1.0, np.cos, np.cos),
        (0.5, np.sin, lambda x: np.exp(-x**2)),
        (2.0, lambda x: 1 / (x - 1j), lambda x: 1 / (x + 2j)),
    ))
    for _ in range(100):
        n = int(rng.integers(1, 9))
        A, B = herm(rng, n), herm(rng, n)
        grid_a, grid_b = np.linalg.eigvalsh(A), np.linalg.eigvalsh(B)
        sb = separable_bound(rep, grid_a, grid_b)
        T = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        out = doi_apply(sb.kernel, A, B, T)
        for p in (1, 2, np.inf):
            assert schatten_norm(out, p) <= sb.bound * schatten_norm(T, p) * (1 + 1e-10)


def test_separable_weights_positive():
    with pytest.raises(ParameterError):
        SeparableRepresentation(((0.0, np.cos, np.cos),))


def test_strong_membership():
    rng = np.random.default_rng(9)
    rep = SeparableRepresentation(((1.0, np.cos, np.cos), (0.5, lambda x: 1 / (x - 1j), np.sin)))
    A, X = herm(rng, 6), herm(rng, 6)
    v = rng.standard_normal(6) + 0j
    assert np.all(strong_membership_diagnostic(rep, [A] * 4, A, v) == 0)
    assert np.all(strong_membership_diagnostic(rep, [A + X / n for n in (1, 2)], A, np.zeros(6)) == 0)
    ns = np.array([1, 2, 4, 8, 16, 32, 64])
    eps = strong_membership_diagnostic(rep, [A + X / n for n in ns], A, v)
    assert np.all(np.diff(eps[2:]) < 0)
    slope = np.polyfit(np.log(ns[2:]), np.log(eps[2:]), 1)[0]
    assert slope < -0.9
    assert np.all(strong_membership_diagnostic(rep, [A + X / n for n in ns], A, v, side="beta")[-1] < eps[0])
    with pytest.raises(ParameterError):
        strong_membership_diagnostic(rep, [A], A, np.ones(3))
