"""Dense Hermitian linear algebra: spectral decompositions, functional
calculus, resolvent powers and Schatten norms.

General (non-Hermitian) operators are plain complex ``numpy`` arrays.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Union

import numpy as np

from .errors import EvaluationError, NearSingularError, ParameterError, SymmetryError

ArrayLike = Union[np.ndarray, "HermitianOperator"]

HERMITIAN_RTOL = 1e-12
RESOLVENT_ATOL = 1e-12


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T


def hermitian_defect(M: np.ndarray) -> float:
    """max |M_ij - conj(M_ji)|."""
    return float(np.max(np.abs(M - M.conj().T))) if M.size else 0.0


class HermitianOperator:
    """Immutable complex Hermitian matrix with a lazily cached eigendecomposition."""

    def __init__(self, entries, *, check: bool = True):
        M = np.array(entries, dtype=complex)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
            raise ParameterError(f"expected a non-empty square matrix, got shape {M.shape}")
        if check:
            scale = 1.0 + float(np.max(np.abs(M)))
            defect = hermitian_defect(M)
            if defect > HERMITIAN_RTOL * scale:
                raise SymmetryError(f"Hermitian defect {defect:.3e} exceeds {HERMITIAN_RTOL:g}*(1+max|a|)")
        M = (M + M.conj().T) / 2
        M.setflags(write=False)
        self._entries = M
        self._given: SpectralDecomposition | None = None

    @classmethod
    def from_spectrum(cls, eigenvalues, eigenvectors) -> "HermitianOperator":
        """Build V diag(w) V* and keep (w, V) as its decomposition."""
        w = np.asarray(eigenvalues, dtype=float)
        V = np.asarray(eigenvectors, dtype=complex)
        order = np.argsort(w, kind="stable")
        w, V = w[order], V[:, order]
        op = cls((V * w) @ V.conj().T, check=False)
        op._given = SpectralDecomposition(w, V)
        return op

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    @cached_property
    def decomposition(self) -> SpectralDecomposition:
        if self._given is not None:
            return self._given
        return _eigh_array(self._entries)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.decomposition.eigenvalues

    def __array__(self, dtype=None, copy=None):
        return self._entries if dtype is None else self._entries.astype(dtype)

    def __repr__(self) -> str:
        return f"HermitianOperator(dim={self.dim})"


def as_hermitian(A: ArrayLike) -> HermitianOperator:
    return A if isinstance(A, HermitianOperator) else HermitianOperator(A)


def _phase_normalize(v: np.ndarray, tol: float = 1e-12) -> tuple[np.ndarray, int]:
    idx = int(np.argmax(np.abs(v) > tol * max(1.0, float(np.max(np.abs(v))))))
    c = v[idx]
    if abs(c) > 0:
        v = v * (abs(c) / c)
    return v, idx


def _eigh_array(M: np.ndarray) -> SpectralDecomposition:
    w, V = np.linalg.eigh(M)
    n = w.shape[0]
    cols = []
    keys = []
    for k in range(n):
        v, idx = _phase_normalize(V[:, k])
        cols.append(v)
        keys.append((idx, -v[idx].real))
    V = np.column_stack(cols)
    spread = float(w[-1] - w[0]) if n else 0.0
    tol = 1e-9 * (1.0 + spread)
    # cluster numerically equal eigenvalues, then order each cluster by its
    # vectors' leading component
    order = []
    start = 0
    for k in range(1, n + 1):
        if k == n or w[k] - w[k - 1] > tol:
            block = list(range(start, k))
            block.sort(key=lambda j: keys[j])
            order.extend(block)
            start = k
    order = np.array(order, dtype=int)
    return SpectralDecomposition(np.ascontiguousarray(w[order]), np.ascontiguousarray(V[:, order]))


def eigh(A: ArrayLike) -> SpectralDecomposition:
    """Spectral decomposition with ascending eigenvalues and deterministic
    eigenvector phases (leading nonzero component real positive)."""
    return as_hermitian(A).decomposition


def _evaluate_on_spectrum(f: Callable, lam: np.ndarray) -> np.ndarray:
    with np.errstate(all="ignore"):
        vals = np.asarray(f(lam), dtype=complex)
    if vals.shape != lam.shape:
        vals = np.broadcast_to(vals, lam.shape).astype(complex)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        raise EvaluationError(f"function is not finite at eigenvalue {lam[np.argmax(bad)]!r}")
    return vals


def apply_function(f: Callable, A: ArrayLike) -> np.ndarray:
    """f(A) = V diag(f(lambda)) V* for a vectorised scalar function f."""
    d = eigh(A)
    vals = _evaluate_on_spectrum(f, d.eigenvalues)
    V = d.eigenvectors
    out = (V * vals) @ V.conj().T
    if np.all(vals.imag == 0):
        out = (out + out.conj().T) / 2
    return out


def resolvent_power(A: ArrayLike, z: complex, m: int) -> np.ndarray:
    """(A - z I)^{-m}."""
    if int(m) != m or m < 1:
        raise ParameterError(f"m must be a positive integer, got {m!r}")
    d = eigh(A)
    gap = np.abs(d.eigenvalues - z)
    if np.min(gap) <= RESOLVENT_ATOL:
        k = int(np.argmin(gap))
        raise NearSingularError(f"z={z!r} is within {RESOLVENT_ATOL:g} of eigenvalue {d.eigenvalues[k]!r}")
    vals = (d.eigenvalues - z) ** (-int(m))
    V = d.eigenvectors
    return (V * vals) @ V.conj().T


def resolvent_power_diff(A: ArrayLike, B: ArrayLike, z: complex, m: int) -> np.ndarray:
    """(A - zI)^{-m} - (B - zI)^{-m}; first argument minus second, everywhere."""
    return resolvent_power(A, z, m) - resolvent_power(B, z, m)


def parse_p(p) -> float:
    if isinstance(p, str):
        s = p.strip().lower()
        p = np.inf if s in ("inf", "infinity", "oo") else float(s)
    p = float(p)
    if not p >= 1:
        raise ParameterError(f"Schatten exponent must satisfy p >= 1, got {p!r}")
    return p


def singular_values(T) -> np.ndarray:
    return np.linalg.svd(np.asarray(T, dtype=complex), compute_uv=False)


def singular_values_gram(T) -> np.ndarray:
    """Singular values as square roots of the spectrum of T*T (loses half the
    digits for small singular values; kept as an independent cross-check)."""
    T = np.asarray(T, dtype=complex)
    w = np.linalg.eigvalsh(T.conj().T @ T)
    return np.sqrt(np.clip(w, 0.0, None))[::-1]


def schatten_norm(T, p=2.0) -> float:
    """(sum s_i^p)^(1/p) over singular values; largest one for p = inf."""
    p = parse_p(p)
    s = singular_values(T)
    if s.size == 0:
        return 0.0
    smax = float(s[0])
    if p == np.inf or smax == 0.0:
        return smax
    if p == 1:
        return float(np.sum(s))
    # scale to avoid overflow in s**p
    return smax * float(np.sum((s / smax) ** p)) ** (1.0 / p)


def trace(T) -> complex:
    return complex(np.trace(np.asarray(T)))


# --- plain-text matrix I/O -------------------------------------------------

_COMPLEX_RE = re.compile(
    r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"(?:([+-](?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)i)?$"
)


def format_complex(z: complex) -> str:
    return f"{z.real:.17g}{z.imag:+.17g}i"


def parse_complex(token: str) -> complex:
    token = token.strip()
    m = _COMPLEX_RE.match(token)
    if m:
        return complex(float(m.group(1)), float(m.group(2) or 0.0))
    if token.endswith("i"):
        body = token[:-1]
        if body in ("", "+", "-"):
            body += "1"
        try:
            return complex(0.0, float(body))
        except ValueError:
            pass
    raise ParameterError(f"cannot parse complex entry {token!r}")


def format_matrix(M) -> str:
    M = np.asarray(M, dtype=complex)
    n = M.shape[0]
    lines = [f"dim {n}"]
    lines += [" ".join(format_complex(complex(x)) for x in row) for row in M]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParameterError("empty matrix file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "dim":
        raise ParameterError(f"bad header line {lines[0]!r}; expected 'dim n'")
    n = int(head[1])
    if len(lines) != n + 1:
        raise ParameterError(f"expected {n} rows, found {len(lines) - 1}")
    M = np.empty((n, n), dtype=complex)
    for i, ln in enumerate(lines[1:]):
        toks = ln.split()
        if len(toks) != n:
            raise ParameterError(f"row {i} has {len(toks)} entries, expected {n}")
        M[i] = [parse_complex(t) for t in toks]
    return M


def write_matrix(path, M) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_matrix(M))


def read_matrix(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        return parse_matrix(fh.read())
