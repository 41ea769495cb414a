"""Seeded random matrices for the experiments."""

from __future__ import annotations

import numpy as np


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Per-trial generator seeded with seed XOR trial, so trials can run in any order."""
    return np.random.default_rng(int(seed) ^ int(trial))


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_hermitian(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    M = complex_normal(rng, (n, n))
    return scale * (M + M.conj().T) / 2


def low_rank_hermitian(rng: np.random.Generator, n: int, rank: int, scale: float = 1.0,
                       positive: bool = False) -> np.ndarray:
    """W diag(s) W* with W complex normal n x rank and s = +-1 (all +1 if positive)."""
    rank = min(rank, n)
    W = complex_normal(rng, (n, rank)) / np.sqrt(2)
    s = np.ones(rank) if positive else rng.choice([-1.0, 1.0], size=rank)
    return scale * (W * s) @ W.conj().T


def random_psd(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    W = complex_normal(rng, (n, n)) / np.sqrt(2 * n)
    return scale * W @ W.conj().T


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    Q, R = np.linalg.qr(complex_normal(rng, (n, n)))
    d = np.diag(R)
    return Q * (d / np.abs(d))


def shift_to_floor(M: np.ndarray, floor: float, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Shift M by a multiple of I so its smallest eigenvalue lands in [floor, floor + 1)."""
    lo = float(np.linalg.eigvalsh(M)[0])
    shift = floor - lo + float(rng.uniform(0.0, 1.0))
    return M + shift * np.eye(M.shape[0]), shift
