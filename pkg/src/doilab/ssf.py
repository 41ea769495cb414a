"""Spectral shift functions of matrix pairs.

For Hermitian A, B of equal size, xi(.; B, A) = N_A - N_B with N the
right-continuous eigenvalue counting function, so Krein's formula
tr(f(B) - f(A)) = int f'(nu) xi(nu) dnu holds exactly.  Also here: the
weighted L^1 distance between step functions, the resolvent-power
pseudometrics, and continuity measurements along operator paths.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import EvaluationError, ParameterError
from .funcspace import SmoothBijection
from .linalg import ArrayLike, apply_function, as_hermitian, eigh, resolvent_power_diff, schatten_norm


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous integer step function.

    Takes the value ``levels[k]`` on [breakpoints[k-1], breakpoints[k]),
    with levels[0] on (-inf, breakpoints[0]) and levels[-1] from the last
    breakpoint on.  levels[0] is always 0.
    """

    breakpoints: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float).reshape(-1)
        lv = np.asarray(self.levels)
        if lv.size and not np.all(np.asarray(lv, dtype=float) == np.round(np.asarray(lv, dtype=float))):
            raise ParameterError("levels must be integers")
        lv = np.asarray(lv, dtype=np.int64).reshape(-1)
        if lv.size != b.size + 1:
            raise ParameterError(f"need len(levels) == len(breakpoints) + 1, got {lv.size} and {b.size}")
        if b.size and not np.all(np.isfinite(b)):
            raise ParameterError("breakpoints must be finite")
        if np.any(np.diff(b) <= 0):
            raise ParameterError("breakpoints must be strictly increasing")
        if lv[0] != 0:
            raise ParameterError("levels[0] must be 0")
        b.setflags(write=False)
        lv.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "levels", lv)

    @classmethod
    def zero(cls) -> "StepFunction":
        return cls(np.empty(0), np.zeros(1, dtype=np.int64))

    @property
    def compact(self) -> bool:
        return bool(self.levels[-1] == 0)

    def __call__(self, nu):
        idx = np.searchsorted(self.breakpoints, np.asarray(nu, dtype=float), side="right")
        out = self.levels[idx]
        return int(out) if np.ndim(out) == 0 else out

    def intervals(self):
        """(left, right, level) for each bounded constancy interval."""
        b = self.breakpoints
        return [(b[k - 1], b[k], int(self.levels[k])) for k in range(1, b.size)]

    def _combine(self, other: "StepFunction", op) -> "StepFunction":
        b = np.union1d(self.breakpoints, other.breakpoints)
        probe = np.concatenate([[-np.inf], b])
        lv = op(self(probe), other(probe))
        return StepFunction(b, lv).simplify()

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __neg__(self):
        return StepFunction(self.breakpoints, -self.levels)

    def __abs__(self):
        return StepFunction(self.breakpoints, np.abs(self.levels))

    def simplify(self) -> "StepFunction":
        """Drop breakpoints across which the level does not change."""
        keep = self.levels[1:] != self.levels[:-1]
        return StepFunction(self.breakpoints[keep], np.concatenate([[0], self.levels[1:][keep]]))

    def equals(self, other: "StepFunction") -> bool:
        a, b = self.simplify(), other.simplify()
        return a.breakpoints.shape == b.breakpoints.shape and bool(
            np.all(a.breakpoints == b.breakpoints) and np.all(a.levels == b.levels)
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["breakpoint", "level_after"])
        for x, lv in zip(self.breakpoints, self.levels[1:]):
            w.writerow([repr(float(x)), int(lv)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "StepFunction":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["breakpoint", "level_after"]:
            raise ParameterError("expected header 'breakpoint,level_after'")
        body = [r for r in rows[1:] if r]
        b = [float(r[0]) for r in body]
        lv = [0] + [int(r[1]) for r in body]
        return cls(np.array(b), np.array(lv))


def counting_function(A: ArrayLike) -> StepFunction:
    """N_A(nu) = #{eigenvalues <= nu}."""
    w = eigh(A).eigenvalues
    b, counts = np.unique(w, return_counts=True)
    return StepFunction(b, np.concatenate([[0], np.cumsum(counts)]))


def xi(A: ArrayLike, B: ArrayLike) -> StepFunction:
    """xi(.; B, A) = N_A - N_B, the sign that makes tr(f(B) - f(A)) = int f' xi."""
    A, B = as_hermitian(A), as_hermitian(B)
    if A.dim != B.dim:
        raise ParameterError(f"dimension mismatch: {A.dim} vs {B.dim}")
    out = counting_function(A) - counting_function(B)
    assert out.compact
    return out


# --- quadrature ----------------------------------------------------------------

_GL10 = np.polynomial.legendre.leggauss(10)
_GL20 = np.polynomial.legendre.leggauss(20)


def _gl(f: Callable, a: float, b: float, rule) -> float:
    x, w = rule
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return float(half * np.sum(w * np.asarray(f(mid + half * x), dtype=float)))


def gauss_legendre_adaptive(f: Callable, a: float, b: float, tol: float = 1e-10, max_depth: int = 50) -> float:
    """Integral of a smooth real f over [a, b]: 10- vs 20-point Gauss-Legendre,
    bisecting until they agree to ``tol`` (split between the halves)."""
    if b <= a:
        return 0.0
    coarse, fine = _gl(f, a, b, _GL10), _gl(f, a, b, _GL20)
    if abs(fine - coarse) <= tol or max_depth == 0:
        if max_depth == 0 and abs(fine - coarse) > tol:
            raise EvaluationError(f"quadrature did not converge on [{a}, {b}]")
        return fine
    c = 0.5 * (a + b)
    return (gauss_legendre_adaptive(f, a, c, tol / 2, max_depth - 1)
            + gauss_legendre_adaptive(f, c, b, tol / 2, max_depth - 1))


def krein_sides(A: ArrayLike, B: ArrayLike, f: Callable, df: Optional[Callable] = None,
                quadrature: bool = False) -> tuple[complex, complex]:
    """(tr(f(B) - f(A)), int f' xi(.; B, A)).

    The integral is summed exactly as sum_k level_k (f(b_k) - f(b_{k-1}));
    with ``quadrature=True`` it integrates ``df`` per interval instead.
    """
    A, B = as_hermitian(A), as_hermitian(B)
    s = xi(A, B)
    lhs = complex(np.sum(f(eigh(B).eigenvalues)) - np.sum(f(eigh(A).eigenvalues)))
    rhs = 0j
    for left, right, level in s.intervals():
        if level == 0:
            continue
        if quadrature:
            if df is None:
                raise ParameterError("quadrature mode needs df")
            re = gauss_legendre_adaptive(lambda x: np.real(df(x)), left, right)
            im = gauss_legendre_adaptive(lambda x: np.imag(df(x)), left, right)
            rhs += level * complex(re, im)
        else:
            rhs += level * complex(f(np.array(right)) - f(np.array(left)))
    return lhs, rhs


def krein_residual(A: ArrayLike, B: ArrayLike, f, quadrature: bool = False) -> float:
    """|tr(f(B) - f(A)) - int f'(nu) xi(nu; B, A) dnu|."""
    df = getattr(f, "df", None)
    lhs, rhs = krein_sides(A, B, f, df, quadrature)
    return abs(lhs - rhs)


def krein_scale(A: ArrayLike, B: ArrayLike, f) -> float:
    """1 + |tr f(B)| + |tr f(A)|, the scale for relative Krein residuals."""
    tA = complex(np.sum(f(eigh(A).eigenvalues)))
    tB = complex(np.sum(f(eigh(B).eigenvalues)))
    return 1.0 + abs(tA) + abs(tB)


def xi_change_of_variables(A: ArrayLike, B: ArrayLike, phi: SmoothBijection, nu, *, strict: bool = True):
    """xi(phi(nu); phi(B), phi(A)), computed from the matrices phi(A), phi(B).

    Monotone phi preserves counting functions, so this equals xi(nu; B, A);
    with ``strict`` a mismatch raises EvaluationError.
    """
    A, B = as_hermitian(A), as_hermitian(B)
    pA = as_hermitian(apply_function(phi, A))
    pB = as_hermitian(apply_function(phi, B))
    nu = np.asarray(nu, dtype=float)
    moved = xi(pA, pB)(phi(nu))
    if strict:
        direct = xi(A, B)(nu)
        if np.any(np.asarray(moved) != np.asarray(direct)):
            raise EvaluationError("change of variables changed the spectral shift function")
    return moved


def spectral_weight(m: int) -> Callable:
    return lambda nu: 1.0 / (np.abs(nu) ** (m + 1) + 1.0)


def weighted_l1_distance(xi1: StepFunction, xi2: StepFunction, m: int, f: Optional[Callable] = None,
                         tol: float = 1e-10) -> float:
    """int |xi1 - xi2| |f| (|nu|^(m+1) + 1)^-1 dnu, interval by interval."""
    diff = abs(xi1 - xi2)
    if not diff.compact:
        raise ParameterError("difference of step functions is not compactly supported")
    w = spectral_weight(m)
    if f is None:
        integrand = w
    else:
        def integrand(nu):
            return np.abs(np.asarray(f(nu))) * w(nu)
    total = 0.0
    for left, right, level in diff.intervals():
        if level:
            total += level * gauss_legendre_adaptive(integrand, left, right, tol)
    return total


def weighted_integral(s: StepFunction, g: Callable, tol: float = 1e-10) -> float:
    """int s(nu) g(nu) dnu for a compactly supported step function s."""
    if not s.compact:
        raise ParameterError("step function is not compactly supported")
    return sum(level * gauss_legendre_adaptive(g, left, right, tol)
               for left, right, level in s.intervals() if level)


# --- pseudometrics -------------------------------------------------------------

@dataclass(frozen=True)
class PseudometricSample:
    z: complex
    m: int
    value: float


def pseudometric(S1: ArrayLike, S2: ArrayLike, m: int, z: complex) -> PseudometricSample:
    """d_{m,z}(S1, S2) = ||(S2 - zI)^-m - (S1 - zI)^-m||_1."""
    if complex(z).imag == 0:
        raise ParameterError("z must be non-real")
    value = schatten_norm(resolvent_power_diff(S2, S1, z, m), 1)
    return PseudometricSample(complex(z), int(m), value)


# --- paths -------------------------------------------------------------------

DEFAULT_TAUS = (0.0,) + tuple(2.0**-k for k in range(0, 11))
DEFAULT_ZS = (1j, 2j, -3j, 1 + 1j)
SLOPE_POINTS = 6


def fit_loglog_slope(x, y) -> Optional[float]:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0)
    if np.count_nonzero(ok) < 2:
        return None
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def _zlabel(z: complex) -> str:
    z = complex(z)
    return f"d_m_z[{z.real:g}{z.imag:+g}i]"


@dataclass
class PathReport:
    m: int
    zs: tuple
    taus: np.ndarray
    pseudo: np.ndarray  # (len(taus), len(zs))
    distance: np.ndarray
    functional: np.ndarray
    slope: Optional[float]
    monotone: bool
    meta: dict = field(default_factory=dict)

    @property
    def max_distance(self) -> float:
        return float(np.max(self.distance)) if self.distance.size else 0.0

    def rows(self):
        for k, tau in enumerate(self.taus):
            yield [float(tau)] + [float(v) for v in self.pseudo[k]] + [float(self.distance[k]), float(self.functional[k])]

    def header(self) -> list:
        return ["tau"] + [_zlabel(z) for z in self.zs] + ["weighted_distance", "functional_difference"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        for row in self.rows():
            w.writerow([repr(v) for v in row])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"slope": self.slope, "monotone": self.monotone, "max_distance": self.max_distance}

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def path_continuity_report(
    A0: ArrayLike,
    B0: ArrayLike,
    B1: ArrayLike,
    m: int,
    taus: Sequence[float] = DEFAULT_TAUS,
    f: Optional[Callable] = None,
    zs: Sequence[complex] = DEFAULT_ZS,
) -> PathReport:
    """Distances along B_tau = B0 + tau (B1 - B0).

    Per tau: d_{m,z}(B_tau, B0) for each z, the weighted L^1 distance between
    xi(.; B_tau, A0) and xi(.; B0, A0), and the functional difference
    |int xi_tau g - int xi_0 g| with g the weight itself.  The slope is a
    least-squares log-log fit over the smallest nonzero taus.
    """
    A0, B0, B1 = as_hermitian(A0), as_hermitian(B0), as_hermitian(B1)
    taus = np.asarray(sorted(set(float(t) for t in taus)), dtype=float)
    if taus.size == 0 or taus[0] < 0 or taus[-1] > 1:
        raise ParameterError("taus must lie in [0, 1]")
    D = B1.entries - B0.entries
    xi0 = xi(A0, B0)
    g = spectral_weight(m)
    int0 = weighted_integral(xi0, g)
    pseudo = np.zeros((taus.size, len(zs)))
    dist = np.zeros(taus.size)
    func = np.zeros(taus.size)
    for k, tau in enumerate(taus):
        Bt = as_hermitian(B0.entries + tau * D)
        xt = xi(A0, Bt)
        pseudo[k] = [pseudometric(B0, Bt, m, z).value for z in zs]
        dist[k] = weighted_l1_distance(xt, xi0, m, f)
        func[k] = abs(weighted_integral(xt, g) - int0)
    pos = taus > 0
    small = np.argsort(taus[pos])[:SLOPE_POINTS]
    slope = fit_loglog_slope(taus[pos][small], dist[pos][small])
    scale = max(float(np.max(dist)), 1e-300)
    monotone = bool(np.all(np.diff(dist) >= -1e-12 * scale))
    return PathReport(int(m), tuple(complex(z) for z in zs), taus, pseudo, dist, func, slope, monotone)


# --- weight comparison ------------------------------------------------------------

@dataclass
class WeightReport:
    m: int
    C0: float
    violations: int
    max_ratio_outer: float
    samples: int

    @property
    def passed(self) -> bool:
        return self.violations == 0 and np.isfinite(self.C0)


def weight_lhs(phi: SmoothBijection, mu) -> np.ndarray:
    """1 / ((|phi^-1(mu)|^(m+1) + 1) phi'(phi^-1(mu)))."""
    x = np.asarray(phi.inverse(np.asarray(mu, dtype=float)), dtype=float)
    return 1.0 / ((np.abs(x) ** (phi.m + 1) + 1.0) * phi.d1(x))


def weight_comparison_check(phi: SmoothBijection, m: Optional[int] = None, n: int = 2000,
                            rtol: float = 1e-12) -> WeightReport:
    """Pointwise check of lhs <= 1/(mu^2 + 1) for |mu| > 1 on a log-spaced grid
    out to 1e6, and the empirical constant C0 = max lhs (mu^2 + 1) on [-1, 1].

    For m = 1 the two sides coincide, hence the tiny relative slack."""
    if m is not None and m != phi.m:
        raise ParameterError(f"phi was built for m={phi.m}, not m={m}")
    if phi.r != 1.0:
        raise ParameterError("weight comparison expects phi built with r = 1")
    outer = np.geomspace(1.0, 1e6, n)[1:]
    outer = np.concatenate([-outer[::-1], outer])
    lhs = weight_lhs(phi, outer)
    rhs = 1.0 / (outer**2 + 1.0)
    violations = int(np.count_nonzero(lhs > rhs * (1.0 + rtol)))
    inner = np.linspace(-1.0, 1.0, n + 1)
    C0 = float(np.max(weight_lhs(phi, inner) * (inner**2 + 1.0)))
    return WeightReport(phi.m, C0, violations, float(np.max(lhs / rhs)), int(outer.size + inner.size))
