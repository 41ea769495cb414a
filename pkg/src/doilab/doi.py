"""Double operator integrals for Hermitian matrices.

For matrices the transformer T -> int int phi(l, m) dE_A(l) T dE_B(m) is a
Schur (entrywise) product with [phi(l_i, m_j)] in the eigenbases of A and B.
This module holds the kernel type, the evaluator, the divided-difference and
G-kernel constructions, and numeric checkers for the kernel regularity
criteria (pointwise bounds, Fourier decay, separable factorisations).
"""

from __future__ import annotations

import json
import warnings
from functools import lru_cache
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateKernelError, EvaluationError, KernelEvaluationError, ParameterError
from .funcspace import CutoffSplit
from .linalg import ArrayLike, apply_function, eigh

COINCIDENCE_RTOL = 1e-9


def coincident(lam, mu) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return np.abs(lam - mu) <= COINCIDENCE_RTOL * (1.0 + np.abs(lam) + np.abs(mu))


@dataclass(frozen=True)
class Kernel:
    """A two-variable function phi(lam, mu), vectorised and broadcasting.

    ``diagonal_rule(lam)`` replaces ``evaluate`` where lam and mu coincide.
    """

    evaluate: Callable
    diagonal_rule: Optional[Callable] = None
    label: str = "kernel"

    def __call__(self, lam, mu) -> np.ndarray:
        lam, mu = np.broadcast_arrays(np.asarray(lam, dtype=float), np.asarray(mu, dtype=float))
        out = np.empty(lam.shape, dtype=complex)
        diag = coincident(lam, mu) if self.diagonal_rule is not None else np.zeros(lam.shape, bool)
        off = ~diag
        with np.errstate(all="ignore"):
            if np.any(off):
                out[off] = self.evaluate(lam[off], mu[off])
            if np.any(diag):
                out[diag] = self.diagonal_rule(lam[diag])
        bad = ~np.isfinite(out)
        if np.any(bad):
            k = np.unravel_index(int(np.argmax(bad)), bad.shape)
            raise KernelEvaluationError(
                f"{self.label}: non-finite value at (lambda, mu) = ({lam[k]!r}, {mu[k]!r})"
            )
        return out

    def __add__(self, other: "Kernel") -> "Kernel":
        a, b = self, other

        def ev(lam, mu):
            return a(lam, mu) + b(lam, mu)

        def dr(lam):
            return a(lam, lam) + b(lam, lam)

        has_diag = a.diagonal_rule is not None or b.diagonal_rule is not None
        return Kernel(ev, dr if has_diag else None, f"({a.label} + {b.label})")

    def check_diagonal_rule(self, lams, offset: float = 1e-5, rtol: float = 1e-4) -> bool:
        """diagonal_rule(lam) agrees with evaluate(lam + h, lam - h)."""
        if self.diagonal_rule is None:
            return True
        lams = np.asarray(lams, dtype=float)
        with np.errstate(all="ignore"):
            near = np.asarray(self.evaluate(lams + offset, lams - offset), dtype=complex)
            exact = np.asarray(self.diagonal_rule(lams), dtype=complex)
        return bool(np.all(np.abs(near - exact) <= rtol * (1.0 + np.abs(exact))))


def constant_kernel(c: complex = 1.0) -> Kernel:
    return Kernel(lambda lam, mu: np.full(np.shape(lam), c, dtype=complex), None, f"const({c})")


def separable_kernel(a1: Callable, a2: Callable, label: str = "separable") -> Kernel:
    return Kernel(lambda lam, mu: a1(lam) * a2(mu), None, label)


def kernel_matrix(phi: Kernel, lam: np.ndarray, mu: np.ndarray) -> np.ndarray:
    return phi(lam[:, None], mu[None, :])


def doi_apply(phi: Kernel, A: ArrayLike, B: ArrayLike, T) -> np.ndarray:
    """V_A (Phi o (V_A* T V_B)) V_B* with Phi_ij = phi(lam_i, mu_j)."""
    dA, dB = eigh(A), eigh(B)
    T = np.asarray(T, dtype=complex)
    if T.shape != (dA.dim, dB.dim):
        raise ParameterError(f"T has shape {T.shape}, expected {(dA.dim, dB.dim)}")
    Phi = kernel_matrix(phi, dA.eigenvalues, dB.eigenvalues)
    VA, VB = dA.eigenvectors, dB.eigenvectors
    return VA @ (Phi * (VA.conj().T @ T @ VB)) @ VB.conj().T


def divided_difference(f: Callable, df: Callable, label: str = "f[1]") -> Kernel:
    """(f(lam) - f(mu)) / (lam - mu), with f'(lam) on the diagonal."""

    def ev(lam, mu):
        return (f(lam) - f(mu)) / (lam - mu)

    return Kernel(ev, df, label)


# --- G-kernels ---------------------------------------------------------------

DEGENERATE_RTOL = 1e-10


def resolvent_power_scalar(a: float, m: int) -> Callable:
    return lambda x: (np.asarray(x, dtype=float) - 1j * a) ** (-m)


def degenerate_points(a: float, m: int) -> np.ndarray:
    """Off-diagonal zeros of (lam - ia)^-m - (mu - ia)^-m: they sit on
    lam = -mu with mu = a tan(pi k / m), k = 1..m-1."""
    k = np.arange(1, m)
    mu = a * np.tan(np.pi * k / m)
    return np.sort(mu[np.abs(mu) > 0])


def g_kernel(j: int, split: CutoffSplit, a: float) -> Kernel:
    """G_{j,a}(lam, mu) = (g_j(lam) - g_j(mu)) / ((lam - ia)^-m - (mu - ia)^-m)."""
    if a == 0:
        raise ParameterError("a must be nonzero")
    m = split.m
    g, dg = split.part(j)
    psi = resolvent_power_scalar(a, m)

    def diag(lam):
        lam = np.asarray(lam, dtype=float)
        return dg(lam) * (lam - 1j * a) ** (m + 1) / (-m)

    def ev(lam, mu):
        num = g(lam) - g(mu)
        pl, pm = psi(lam), psi(mu)
        den = pl - pm
        out = num / np.where(den == 0, 1.0, den)
        small = np.abs(den) <= DEGENERATE_RTOL * np.maximum(np.abs(pl), np.abs(pm))
        if np.any(small):
            # relative cancellation with lam ~ mu: derivative quotient
            near = small & (np.abs(lam - mu) <= 1e-6 * (1.0 + np.abs(lam) + np.abs(mu)))
            out[near] = diag(0.5 * (lam[near] + mu[near]))
            far = small & ~near
            if np.any(far):
                scale = 1e-12 * (1.0 + np.abs(g(lam[far])) + np.abs(g(mu[far])))
                zero_num = np.abs(num[far]) <= scale
                if not np.all(zero_num):
                    k = int(np.argmin(zero_num))
                    raise DegenerateKernelError(
                        f"G_{j},a={a}: denominator vanishes at (lambda, mu) = "
                        f"({lam[far][k]!r}, {mu[far][k]!r}) with nonzero numerator"
                    )
                out[far] = 0.0
        return out

    return Kernel(ev, diag, f"G_{j},a={a:g}")


# --- regularity report -------------------------------------------------------

@dataclass
class KernelReport:
    kernel_label: str
    C_K: float
    C_tilde: float
    limit_gap: float
    C0: Optional[float] = None
    grid: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        lines = []
        for k, v in self.to_dict().items():
            if isinstance(v, dict):
                for kk, vv in v.items():
                    lines.append(f"{k}.{kk}={_fmt(vv)}")
            elif isinstance(v, list):
                lines.append(f"{k}={';'.join(map(str, v))}")
            else:
                lines.append(f"{k}={_fmt(v)}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def default_mu_grid(R: float = 10.0, n: int = 401) -> np.ndarray:
    return np.linspace(-R, R, n)


def default_lambda_grid(L: float = 1e4, R: float = 10.0, n_inner: int = 401, n_tail: int = 100) -> np.ndarray:
    """Uniform on [-R, R] plus geometric tails out to +-L."""
    tail = np.geomspace(R, L, n_tail)[1:] if L > R else np.empty(0)
    return np.concatenate([-tail[::-1], np.linspace(-R, R, n_inner), tail])


def kernel_regularity_report(
    K: Kernel, lam_grid=None, mu_grid=None, *, step: float = 1e-5
) -> KernelReport:
    """Grid estimates of sup|K|, sup|dK/dlam|(1 + lam^2) and the limit gap
    max over mu of |K(L, mu) - K(-L, mu)|, with L the edge of the lam-grid.

    The gap is a proxy for equal limits as lam -> +-inf at fixed mu, so the
    default lam-grid reaches much further out (L = 1e4) than the mu-grid.
    """
    lam = default_lambda_grid() if lam_grid is None else np.asarray(lam_grid, dtype=float)
    mu = default_mu_grid() if mu_grid is None else np.asarray(mu_grid, dtype=float)
    if lam.size < 400 or mu.size < 400:
        raise ParameterError("grids need at least 400 points")
    L = float(min(-lam.min(), lam.max()))
    if L < 10:
        raise ParameterError(f"lambda-grid must cover [-L, L] with L >= 10, got L = {L}")
    try:
        Kv = kernel_matrix(K, lam, mu)
        dK = (kernel_matrix(K, lam + step, mu) - kernel_matrix(K, lam - step, mu)) / (2 * step)
        edge = np.abs(K(np.full(mu.shape, L), mu) - K(np.full(mu.shape, -L), mu))
    except KernelEvaluationError as exc:
        raise EvaluationError(str(exc)) from exc
    return KernelReport(
        kernel_label=K.label,
        C_K=float(np.max(np.abs(Kv))),
        C_tilde=float(np.max(np.abs(dK) * (1.0 + lam[:, None] ** 2))),
        limit_gap=float(np.max(edge)),
        grid={"L": L, "mu_min": float(mu.min()), "mu_max": float(mu.max()),
              "n_lambda": int(lam.size), "n_mu": int(mu.size)},
    )


A_CANDIDATES = tuple(s * 2.0**k for k in range(-6, 7) for s in (1.0, -1.0))
SCORE_TIE_RTOL = 0.05


def _locus_clear(j: int, split: CutoffSplit, a: float) -> bool:
    g, _ = split.part(j)
    mus = degenerate_points(a, split.m)
    if mus.size == 0:
        return True
    num = np.abs(g(mus) - g(-mus))
    return bool(np.all(num <= 1e-14 * (1.0 + np.abs(g(mus)) + np.abs(g(-mus)))))


def a_scores(j: int, split: CutoffSplit, candidates: Sequence[float] = A_CANDIDATES,
             lam_grid=None, mu_grid=None) -> dict:
    """C_K + C_tilde of G_{j,a} per admissible candidate a.

    Candidates whose exact degenerate locus meets the support of g_j, or
    whose kernel fails to evaluate on the grid, are left out.
    """
    out = {}
    for a in candidates:
        if not _locus_clear(j, split, a):
            continue
        try:
            rep = kernel_regularity_report(g_kernel(j, split, a), lam_grid, mu_grid)
        except (EvaluationError, DegenerateKernelError):
            continue
        score = rep.C_K + rep.C_tilde
        if np.isfinite(score):
            out[a] = score
    return out


@lru_cache(maxsize=64)
def _default_scores(j: int, split: CutoffSplit, candidates: tuple) -> dict:
    return a_scores(j, split, candidates)


def select_a(j: int, split: CutoffSplit, *, candidates: Sequence[float] = A_CANDIDATES,
             lam_grid=None, mu_grid=None, tie_rtol: float = SCORE_TIE_RTOL) -> float:
    """Deterministic grid search for the G_{j,a} parameter.

    Minimises C_K + C_tilde over the admissible candidates.  Scores within
    ``tie_rtol`` of the minimum count as ties and the largest |a| wins
    (positive before negative): the score flattens out as a -> 0 while
    (x - ia)^-m, and with it the conditioning of T(a), grows like |a|^-m.
    """
    if lam_grid is None and mu_grid is None:
        scores = _default_scores(j, split, tuple(candidates))
    else:
        scores = a_scores(j, split, candidates, lam_grid, mu_grid)
    if not scores:
        raise DegenerateKernelError(f"no admissible a for G_{j} among {len(candidates)} candidates")
    best = min(scores.values())
    ties = [a for a, s in scores.items() if s <= best * (1.0 + tie_rtol)]
    return max(ties, key=lambda a: (abs(a), a > 0))


# --- Fourier criterion --------------------------------------------------------

@dataclass
class FourierReport:
    C0_squared: float
    C0: float
    m1: float
    m2: float
    window: float
    samples: int
    truncated: bool
    divergent: bool
    per_mu: np.ndarray

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_mu"] = [float(x) for x in self.per_mu]
        return d


def _weighted_spectral_mass(values: np.ndarray, L: float, m1: float, m2: float) -> float:
    n = values.shape[-1]
    dx = 2 * L / n
    xi = 2 * np.pi * np.fft.fftfreq(n, d=dx)
    # hat phi(xi) = (2 pi)^-1 int phi(x) e^{-i xi x} dx, samples start at x = -L
    hat = dx / (2 * np.pi) * np.exp(1j * xi * L) * np.fft.fft(values)
    order = np.argsort(xi)
    xi, hat = xi[order], hat[order]
    w = np.abs(xi) ** m1 + np.abs(xi) ** m2
    return float(np.trapezoid(w * np.abs(hat) ** 2, xi))


def fourier_criterion(
    phi: Kernel,
    m1: float = 0.0,
    m2: float = 2.0,
    mu_grid=None,
    L: float = 32.0,
    n: int = 4096,
) -> FourierReport:
    """max over mu of int (|xi|^m1 + |xi|^m2) |hat phi(xi, mu)|^2 dxi, where
    hat is the partial Fourier transform in the first variable, by FFT on
    the window [-L, L) and the trapezoid rule."""
    if not (0 <= m1 < 1 < m2):
        raise ParameterError("need 0 <= m1 < 1 < m2")
    mu = np.array([0.0]) if mu_grid is None else np.asarray(mu_grid, dtype=float)

    def masses(L_, n_):
        x = -L_ + 2 * L_ * np.arange(n_) / n_
        vals = phi(x[None, :], mu[:, None])
        per = np.array([_weighted_spectral_mass(v, L_, m1, m2) for v in vals])
        edge = np.maximum(np.abs(vals[:, 0]), np.abs(vals[:, -1]))
        trunc = bool(np.any(edge > 1e-6 * np.max(np.abs(vals), axis=1)))
        return per, trunc

    per, truncated = masses(L, n)
    per2, _ = masses(2 * L, 2 * n)
    c2, c2_wide = float(np.max(per)), float(np.max(per2))
    divergent = bool(c2_wide > 1.5 * c2 + 1e-300) or not np.isfinite(c2)
    if truncated:
        warnings.warn(f"{phi.label}: window [-{L}, {L}] truncates the kernel", RuntimeWarning, stacklevel=2)
    return FourierReport(c2, float(np.sqrt(c2)), m1, m2, L, n, truncated, divergent, per)


def limit_part(K: Kernel, mu, far: float = 1e6) -> np.ndarray:
    """k(mu) = lim K(lam, mu) as lam -> +-inf, estimated at lam = +-far."""
    mu = np.asarray(mu, dtype=float)
    return 0.5 * (K(np.full(mu.shape, far), mu) + K(np.full(mu.shape, -far), mu))


def decaying_part(K: Kernel, far: float = 1e6) -> Kernel:
    """h(lam, mu) = K(lam, mu) - k(mu)."""

    def ev(lam, mu):
        return K(lam, mu) - limit_part(K, mu, far)

    return Kernel(ev, None, f"h[{K.label}]")


# --- separable representations -------------------------------------------------

@dataclass(frozen=True)
class SeparableRepresentation:
    """phi(lam, mu) = sum_t eta_t alpha_t(lam) beta_t(mu) over a finite node set."""

    nodes: tuple  # of (eta > 0, alpha, beta)

    def __post_init__(self):
        for eta, _, _ in self.nodes:
            if not eta > 0:
                raise ParameterError("node weights must be positive")

    def kernel(self, label: str = "separable") -> Kernel:
        nodes = self.nodes

        def ev(lam, mu):
            out = np.zeros(np.broadcast(lam, mu).shape, dtype=complex)
            for eta, alpha, beta in nodes:
                out = out + eta * alpha(lam) * beta(mu)
            return out

        return Kernel(ev, None, label)


@dataclass
class SeparableBound:
    C_alpha: float
    C_beta: float
    bound: float
    kernel: Kernel


def separable_bound(rep: SeparableRepresentation, lam_grid, mu_grid) -> SeparableBound:
    """C_alpha * C_beta with C^2 = sup over the grid of sum_t eta_t |.|^2;
    an upper bound for the Schur multiplier norm of the represented kernel."""
    lam = np.asarray(lam_grid, dtype=float)
    mu = np.asarray(mu_grid, dtype=float)
    sa = np.zeros(lam.shape)
    sb = np.zeros(mu.shape)
    for eta, alpha, beta in rep.nodes:
        sa += eta * np.abs(np.broadcast_to(alpha(lam), lam.shape)) ** 2
        sb += eta * np.abs(np.broadcast_to(beta(mu), mu.shape)) ** 2
    ca, cb = float(np.sqrt(np.max(sa))), float(np.sqrt(np.max(sb)))
    return SeparableBound(ca, cb, ca * cb, rep.kernel())


def strong_membership_diagnostic(
    rep: SeparableRepresentation, ops: Sequence[ArrayLike], limit: ArrayLike, v, *, side: str = "alpha"
) -> np.ndarray:
    """eps_n = [sum_t eta_t ||a_n(t) v - a(t) v||^2]^(1/2) with a_n(t) = alpha_t(A_n)
    (``side='beta'`` gives delta_n with beta_t)."""
    v = np.asarray(v, dtype=complex)
    pick = 1 if side == "alpha" else 2
    if side not in ("alpha", "beta"):
        raise ParameterError("side must be 'alpha' or 'beta'")
    n = v.shape[0]
    if np.shape(limit)[0] != n or any(np.shape(An)[0] != n for An in ops):
        raise ParameterError("dimension mismatch between operators and vector")
    ref = [apply_function(node[pick], limit) @ v for node in rep.nodes]
    out = []
    for An in ops:
        total = 0.0
        for node, r in zip(rep.nodes, ref):
            total += node[0] * float(np.linalg.norm(apply_function(node[pick], An) @ v - r) ** 2)
        out.append(np.sqrt(total))
    return np.array(out)
