"""Scalar function layer: the F_m test class, the C^2 bijection phi with
phi(x) = x^m outside a window, the cutoff split g1 + g2 of 1/(phi - i),
the Cayley transform and the positive-axis map psi(x) = (x + 1)^(-m).

All scalar functions here are vectorised over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    ConstructionError,
    DiscontinuityError,
    DomainError,
    NoConvergenceError,
    ParameterError,
)
from .linalg import ArrayLike, apply_function

Scalar = Callable[[np.ndarray], np.ndarray]


def _check_odd(m) -> int:
    if int(m) != m or m < 1 or int(m) % 2 == 0:
        raise ParameterError(f"m must be an odd positive integer, got {m!r}")
    return int(m)


# --- quintic smoothstep (C^2 at both ends) ------------------------------------

def smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (10.0 - 15.0 * u + 6.0 * u**2)


def smoothstep_d1(u):
    inside = (u > 0) & (u < 1)
    u = np.clip(u, 0.0, 1.0)
    return np.where(inside, 30.0 * u**2 * (1.0 - u) ** 2, 0.0)


def smoothstep_d2(u):
    inside = (u > 0) & (u < 1)
    u = np.clip(u, 0.0, 1.0)
    return np.where(inside, 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u), 0.0)


# --- F_m functions ------------------------------------------------------------

@dataclass(frozen=True)
class FmFunction:
    """A C^2 function with two derivatives and its claimed decay data
    f(x) ~ f0 * x^(-m) with margin eps."""

    f: Scalar
    df: Scalar
    d2f: Scalar
    m: int
    f0: complex = 0.0
    eps: float = 1.0
    label: str = ""

    def __call__(self, x):
        return self.f(x)


@dataclass(frozen=True)
class MembershipReport:
    passed: bool
    m: int
    f0: complex
    eps: float
    bounded: bool
    sup_norms: tuple
    fitted_C: tuple
    violations: list = field(default_factory=list)
    numerical_derivatives: bool = False

    def __bool__(self) -> bool:
        return self.passed


def central_difference(f: Scalar, h: float = 1e-5) -> Scalar:
    """First derivative by central differences with one Richardson step."""

    def d(x):
        x = np.asarray(x, dtype=float)
        d_h = (f(x + h) - f(x - h)) / (2 * h)
        d_2h = (f(x + 2 * h) - f(x - 2 * h)) / (4 * h)
        return (4 * d_h - d_2h) / 3

    return d


ASYMPTOTIC_FIT_POINTS = (10.0, 20.0)
ASYMPTOTIC_CHECK_POINTS = (40.0, 80.0)


def fm_membership(f, m=None, f0=None, eps=None, df=None, d2f=None, grid=None) -> MembershipReport:
    """Sampled test of membership in F_m.

    Boundedness of f, f', f'' is checked on ``grid``.  For the decay, the
    constant C in |d^l[f - f0 x^-m]| <= C |x|^(-l-m-eps) is fitted on
    |x| in {10, 20} and must then hold at |x| in {40, 80}.
    """
    if isinstance(f, FmFunction):
        m = f.m if m is None else m
        f0 = f.f0 if f0 is None else f0
        eps = f.eps if eps is None else eps
        df, d2f = f.df, f.d2f
        f = f.f
    if m is None:
        raise ParameterError("m is required for a plain callable")
    f0 = 0.0 if f0 is None else f0
    eps = 1.0 if eps is None else eps
    numerical = df is None or d2f is None
    if df is None:
        df = central_difference(f)
    if d2f is None:
        d2f = central_difference(df)
    m = int(m)
    if grid is None:
        grid = np.linspace(-100.0, 100.0, 4001)
    derivs = (f, df, d2f)

    with np.errstate(all="ignore"):
        sups = tuple(float(np.max(np.abs(np.asarray(g(grid), dtype=complex)))) for g in derivs)
    bounded = all(np.isfinite(s) for s in sups)

    def residual(ell, x):
        x = np.asarray(x, dtype=float)
        # d^l/dx^l of f0 x^-m
        coef = f0 * np.prod([-(m + k) for k in range(ell)]) if ell else f0
        model = coef * x ** (-(m + ell))
        return np.abs(np.asarray(derivs[ell](x), dtype=complex) - model)

    violations = []
    fitted = []
    for ell in range(3):
        expo = ell + m + eps
        xs_fit = np.array([s * x for x in ASYMPTOTIC_FIT_POINTS for s in (1, -1)])
        C = float(np.max(residual(ell, xs_fit) * np.abs(xs_fit) ** expo))
        fitted.append(C)
        for x in ASYMPTOTIC_CHECK_POINTS:
            for s in (1.0, -1.0):
                r = float(residual(ell, s * x))
                bound = C * x ** (-expo)
                # absolute floor covers derivatives that vanish identically
                if not np.isfinite(r) or r > bound * (1 + 1e-6) + 1e-13 * (1 + abs(f0)) * x ** (-m):
                    violations.append((ell, s * x, r, bound))
    return MembershipReport(
        passed=bounded and not violations,
        m=m,
        f0=complex(f0),
        eps=float(eps),
        bounded=bounded,
        sup_norms=sups,
        fitted_C=tuple(fitted),
        violations=violations,
        numerical_derivatives=numerical,
    )


# --- cutoff ------------------------------------------------------------------

@dataclass(frozen=True)
class CutoffFunction:
    """theta = 0 on |x| <= r/2, 1 on |x| >= r, quintic smoothstep between."""

    r: float

    def _u(self, x):
        x = np.asarray(x, dtype=float)
        return (np.abs(x) - self.r / 2) / (self.r / 2)

    def __call__(self, x):
        return smoothstep(self._u(x))

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        return smoothstep_d1(self._u(x)) * np.sign(x) / (self.r / 2)

    def d2(self, x):
        return smoothstep_d2(self._u(x)) / (self.r / 2) ** 2


# --- the bijection phi --------------------------------------------------------

@dataclass(frozen=True)
class SmoothBijection:
    """phi(x) = x^m + kappa * x * (1 - s((|x| - r0) / (r - r0))) with s the
    quintic smoothstep, so phi(x) = x^m exactly for |x| >= r."""

    m: int
    r: float
    c: float
    kappa: float
    r0: float

    def _u(self, x):
        return (np.abs(x) - self.r0) / (self.r - self.r0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        outer = np.abs(x) >= self.r
        inner = x**self.m + self.kappa * x * (1.0 - smoothstep(self._u(x)))
        return np.where(outer, x**self.m, inner)

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        w = self.r - self.r0
        u = self._u(x)
        bump = (1.0 - smoothstep(u)) - np.abs(x) * smoothstep_d1(u) / w
        return self.m * x ** (self.m - 1) + np.where(np.abs(x) >= self.r, 0.0, self.kappa * bump)

    def d2(self, x):
        x = np.asarray(x, dtype=float)
        w = self.r - self.r0
        u = self._u(x)
        sgn = np.sign(x)
        bump = -2.0 * sgn * smoothstep_d1(u) / w - x * smoothstep_d2(u) / w**2
        base = self.m * (self.m - 1) * x ** (self.m - 2) if self.m > 1 else np.zeros_like(x)
        return base + np.where(np.abs(x) >= self.r, 0.0, self.kappa * bump)

    def inverse(self, y):
        return invert_monotone(self, y)


def build_phi(m: int = 3, r: float = 1.0, c: float = 0.1, *, max_doublings: int = 8) -> SmoothBijection:
    """Smallest kappa in {c, 2c, 4c, ...} (and transition start r0) with
    phi' >= c on a 1000-point grid over [-2r, 2r]."""
    m = _check_odd(m)
    if r <= 0 or c <= 0:
        raise ParameterError("r and c must be positive")
    grid = np.linspace(-2 * r, 2 * r, 1000)
    worst = None
    for k in range(max_doublings):
        kappa = c * 2**k
        for frac in (0.5, 0.6, 0.7, 0.8, 0.9):
            phi = SmoothBijection(m=m, r=float(r), c=float(c), kappa=kappa, r0=frac * r)
            d = phi.d1(grid)
            if np.min(d) >= c:
                return phi
            j = int(np.argmin(d))
            if worst is None or d[j] > worst[1]:
                worst = (grid[j], d[j])
    raise ConstructionError(
        f"no monotone C^2 phi with phi' >= {c} found for m={m}, r={r}; "
        f"best attempt has phi'({worst[0]:.6g}) = {worst[1]:.6g}"
    )


def invert_monotone(phi, y, *, max_doublings: int = 60):
    """Bisection inverse of a strictly increasing phi (vectorised)."""
    y_arr = np.asarray(y, dtype=float)
    scalar = y_arr.ndim == 0
    y_arr = np.atleast_1d(y_arr)
    m = getattr(phi, "m", 1)
    r = getattr(phi, "r", 1.0)
    half = np.maximum(r, np.abs(y_arr) ** (1.0 / m)) + 1.0
    lo, hi = -half.copy(), half.copy()
    for _ in range(max_doublings):
        bad = (phi(lo) > y_arr) | (phi(hi) < y_arr)
        if not np.any(bad):
            break
        lo = np.where(bad, 2 * lo, lo)
        hi = np.where(bad, 2 * hi, hi)
    else:
        raise NoConvergenceError(f"bracket did not enclose y after {max_doublings} doublings")
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        done = (mid == lo) | (mid == hi)
        if np.all(done):
            break
        up = phi(mid) < y_arr
        lo = np.where(~done & up, mid, lo)
        hi = np.where(~done & ~up, mid, hi)
    # pick the endpoint with the smaller residual
    x = np.where(np.abs(phi(lo) - y_arr) <= np.abs(phi(hi) - y_arr), lo, hi)
    res = np.abs(phi(x) - y_arr)
    if np.any(res > 1e-12 * (1 + np.abs(y_arr))):
        raise NoConvergenceError(f"bisection residual {float(np.max(res)):.3e} too large")
    return float(x[0]) if scalar else x


# --- cutoff split -------------------------------------------------------------

@dataclass(frozen=True)
class CutoffSplit:
    """1/(phi - i) = g1 + g2 with g1 = theta/(x^m - i), g2 = (1 - theta)/(phi - i)."""

    phi: SmoothBijection
    theta: CutoffFunction

    @property
    def m(self) -> int:
        return self.phi.m

    def g1(self, x):
        x = np.asarray(x, dtype=float)
        return self.theta(x) / (x**self.m - 1j)

    def dg1(self, x):
        x = np.asarray(x, dtype=float)
        den = x**self.m - 1j
        return self.theta.d1(x) / den - self.theta(x) * self.m * x ** (self.m - 1) / den**2

    def g2(self, x):
        x = np.asarray(x, dtype=float)
        return (1.0 - self.theta(x)) / (self.phi(x) - 1j)

    def dg2(self, x):
        x = np.asarray(x, dtype=float)
        den = self.phi(x) - 1j
        return -self.theta.d1(x) / den - (1.0 - self.theta(x)) * self.phi.d1(x) / den**2

    def target(self, x):
        return 1.0 / (self.phi(np.asarray(x, dtype=float)) - 1j)

    def part(self, j: int):
        if j == 1:
            return self.g1, self.dg1
        if j == 2:
            return self.g2, self.dg2
        raise ParameterError(f"j must be 1 or 2, got {j!r}")


def cutoff_split(phi: SmoothBijection, theta: CutoffFunction | None = None) -> CutoffSplit:
    """Split 1/(phi - i) into a part living where phi(x) = x^m and a compactly
    supported remainder.  The cutoff must vanish wherever phi differs from
    x^m, so its radius defaults to 2 * phi.r."""
    if theta is None:
        theta = CutoffFunction(2.0 * phi.r)
    if theta.r / 2 < phi.r * (1 - 1e-12):
        raise ParameterError(
            f"cutoff radius {theta.r} too small: theta must vanish on |x| <= {phi.r} where phi != x^m"
        )
    return CutoffSplit(phi, theta)


# --- Cayley transform ---------------------------------------------------------

def cayley(x):
    x = np.asarray(x, dtype=float)
    return (x + 1j) / (x - 1j)


def cayley_inverse(w):
    """Real preimage i(w + 1)/(w - 1) of a point on the unit circle (w != 1)."""
    w = np.asarray(w, dtype=complex)
    return (1j * (w + 1) / (w - 1)).real


def cayley_of_operator(A: ArrayLike) -> np.ndarray:
    return apply_function(cayley, A)


# --- g on the unit circle -----------------------------------------------------

@dataclass(frozen=True)
class CircleFunction:
    """g(w) = (f o phi^-1)(cayley^-1(w)), with g(1) set by the common limit."""

    fm: FmFunction
    phi: SmoothBijection
    value_at_one: complex

    def pullback(self, mu):
        """f o phi^-1 on the real line."""
        return self.fm.f(invert_monotone(self.phi, mu))

    def __call__(self, w):
        w = np.asarray(w, dtype=complex)
        at_one = np.abs(w - 1) < 1e-15
        safe = np.where(at_one, -1.0 + 0j, w)
        vals = np.asarray(self.pullback(cayley_inverse(safe)), dtype=complex)
        return np.where(at_one, self.value_at_one, vals)

    def derivative(self, w):
        """Complex derivative dg/dw along the circle."""
        w = np.asarray(w, dtype=complex)
        mu = cayley_inverse(w)
        nu = invert_monotone(self.phi, mu)
        dF = np.asarray(self.fm.df(nu), dtype=complex) / self.phi.d1(nu)
        # dw/dmu = -2i/(mu - i)^2
        return dF * (mu - 1j) ** 2 / (-2j)


def compose_g(fm: FmFunction, phi: SmoothBijection, *, tol: float = 1e-6) -> CircleFunction:
    if fm.m != phi.m:
        raise ParameterError(f"f is in F_{fm.m} but phi was built for m={phi.m}")
    # the known f0 x^-m term tends to 0 on both sides, so remove it before
    # comparing the one-sided samples
    vals = {}
    for x in (1e3, 1e6):
        vals[x] = tuple(complex(fm.f(np.float64(s * x))) - fm.f0 * (s * x) ** (-fm.m) for s in (1.0, -1.0))
        if abs(vals[x][0] - vals[x][1]) > tol:
            raise DiscontinuityError(
                f"one-sided limits at +/-{x:g} differ: {vals[x][0]!r} vs {vals[x][1]!r}"
            )
    limit = 0.5 * (vals[1e6][0] + vals[1e6][1])
    if abs(limit) <= tol:
        limit = 0.0
    return CircleFunction(fm, phi, complex(limit))


# --- psi for positive operators -----------------------------------------------

@dataclass(frozen=True)
class PsiMap:
    """psi(x) = (x + 1)^(-m) on [0, inf), a decreasing bijection onto (0, 1]."""

    m: int

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (x + 1.0) ** (-self.m)

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        return -self.m * (x + 1.0) ** (-self.m - 1)

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(~((y > 0) & (y <= 1))):
            raise DomainError("psi^-1 is defined on (0, 1] only")
        return y ** (-1.0 / self.m) - 1.0

    def inverse_d1(self, y):
        y = np.asarray(y, dtype=float)
        return -(1.0 / self.m) * y ** (-1.0 / self.m - 1.0)


def psi_map(m: int) -> PsiMap:
    if int(m) != m or m < 1:
        raise ParameterError(f"m must be a positive integer, got {m!r}")
    return PsiMap(int(m))


# --- named test functions -----------------------------------------------------

BUMP_RADIUS = 4.0


def _bump(R: float = BUMP_RADIUS) -> tuple[Scalar, Scalar, Scalar]:
    # exp(1 - 1/(1 - t^2)), t = x/R; compactly supported, peak 1 at 0
    def parts(x):
        t = np.asarray(x, dtype=float) / R
        inside = np.abs(t) < 1
        q = np.where(inside, 1.0 - t * t, 1.0)
        e = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
        return t, q, e, inside

    def f(x):
        return parts(x)[2]

    def df(x):
        t, q, e, inside = parts(x)
        return np.where(inside, e * (-2.0 * t / q**2) / R, 0.0)

    def d2f(x):
        t, q, e, inside = parts(x)
        a = -2.0 * t / q**2
        da = (-2.0 / q**2 - 8.0 * t * t / q**3)
        return np.where(inside, e * (a * a + da) / R**2, 0.0)

    return f, df, d2f


def _capped_power(m: int) -> tuple[Scalar, Scalar, Scalar]:
    # theta(x) x^-m with theta = 0 on |x| <= 1/2, 1 on |x| >= 1
    th = CutoffFunction(1.0)

    def safe(x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) < 0.25, 1.0, x)

    def f(x):
        s = safe(x)
        return np.where(np.abs(x) < 0.25, 0.0, th(s) * s ** (-m))

    def df(x):
        s = safe(x)
        v = th.d1(s) * s ** (-m) - m * th(s) * s ** (-m - 1)
        return np.where(np.abs(x) < 0.25, 0.0, v)

    def d2f(x):
        s = safe(x)
        v = (
            th.d2(s) * s ** (-m)
            - 2 * m * th.d1(s) * s ** (-m - 1)
            + m * (m + 1) * th(s) * s ** (-m - 2)
        )
        return np.where(np.abs(x) < 0.25, 0.0, v)

    return f, df, d2f


def _rational(m: int) -> tuple[Scalar, Scalar, Scalar]:
    # x^m / (x^(2m) + 1) = x^-m - x^-3m + ...
    def f(x):
        x = np.asarray(x, dtype=float)
        return x**m / (x ** (2 * m) + 1.0)

    def df(x):
        x = np.asarray(x, dtype=float)
        q = x ** (2 * m) + 1.0
        return m * x ** (m - 1) * (1.0 - x ** (2 * m)) / q**2

    def d2f(x):
        x = np.asarray(x, dtype=float)
        q = x ** (2 * m) + 1.0
        num = m * x ** (m - 1) - m * x ** (3 * m - 1)
        dnum = -m * (3 * m - 1) * x ** (3 * m - 2)
        if m > 1:
            dnum = dnum + m * (m - 1) * x ** (m - 2)
        dq = 2 * m * x ** (2 * m - 1)
        return dnum / q**2 - 2 * num * dq / q**3

    return f, df, d2f


REGISTRY_NAMES = ("bump", "capped-power-m", "rational-m")


def registry_function(name: str, m: int) -> FmFunction:
    """Named members of F_m used by the experiments.

    bump            exp(1 - 1/(1 - (x/4)^2)) on |x| < 4, else 0      (f0 = 0)
    capped-power-m  theta(x) x^-m, theta a C^2 cutoff 0 on |x|<=1/2, 1 on |x|>=1  (f0 = 1)
    rational-m      x^m / (x^(2m) + 1)                               (f0 = 1)
    """
    m = _check_odd(m)
    if name == "bump":
        return FmFunction(*_bump(), m=m, f0=0.0, eps=1.0, label="bump")
    if name in ("capped-power-m", "capped-power"):
        return FmFunction(*_capped_power(m), m=m, f0=1.0, eps=1.0, label="capped-power-m")
    if name in ("rational-m", "rational"):
        return FmFunction(*_rational(m), m=m, f0=1.0, eps=float(m), label="rational-m")
    raise ParameterError(f"unknown function {name!r}; choose from {', '.join(REGISTRY_NAMES)}")
