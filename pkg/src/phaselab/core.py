"""Problem instances, reproducible randomness, and global-sign-aware metrics.

A phase retrieval instance couples an m x n Gaussian measurement matrix A,
a unit-norm planted signal x_true, and the phaseless measurements
y_i = (A x_true)_i^2.  Everything downstream (initializers, solvers,
Monte-Carlo sweeps) consumes instances produced here, so generation is
deterministic given an :class:`RngStream`.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class InvalidArgumentError(ValueError):
    """Raised when an operation is called outside its domain."""


class NumericFailureError(RuntimeError):
    """Raised when an iterative numeric procedure cannot produce a result."""


class ConvergenceError(NumericFailureError):
    """Iterative solver hit its iteration cap.  Carries the best iterate."""

    def __init__(self, message, best_value=None, best_vector=None, residual=None):
        super().__init__(message)
        self.best_value = best_value
        self.best_vector = best_vector
        self.residual = residual


class BarrierDomainError(InvalidArgumentError):
    """Barrier objective evaluated at or outside the unit ball boundary."""


class BelowWeakThresholdError(InvalidArgumentError):
    """Spectral overlap theory queried below the weak threshold alpha = 1/2."""


def _splitmix64(state: int) -> int:
    # SplitMix64 finalizer; used to derive independent substream ids.
    state = (state + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream identified by (base_seed, stream_id).

    Identical pairs reproduce bit-identical draws; distinct stream ids give
    statistically independent streams.  Streams are cheap value objects:
    every call to :meth:`generator` starts the sequence from scratch.
    """

    base_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence((self.base_seed & 0xFFFFFFFFFFFFFFFF,
                                      self.stream_id & 0xFFFFFFFFFFFFFFFF))
        return np.random.Generator(np.random.Philox(seq))

    def substream(self, *indices: int) -> "RngStream":
        """Derive an independent stream keyed by integer indices.

        Adding new indices never perturbs streams derived from other index
        tuples, which keeps parallel trials reproducible under regridding.
        """
        state = self.stream_id & 0xFFFFFFFFFFFFFFFF
        for ix in indices:
            state = _splitmix64(state ^ _splitmix64(int(ix) & 0xFFFFFFFFFFFFFFFF))
        return RngStream(self.base_seed, state)


@dataclass(frozen=True)
class Instance:
    """A generated phase-retrieval problem.

    Immutable after construction; safe for concurrent reads.
    """

    n: int
    m: int
    alpha: float
    A: np.ndarray        # m x n, iid standard normal
    x_true: np.ndarray   # unit-norm n-vector
    y: np.ndarray        # nonnegative m-vector, y = (A x_true)^2
    base_seed: int = 0
    stream_id: int = 0

    def save(self, path) -> None:
        """Serialize to an .npz container for replaying failures."""
        np.savez(path, n=self.n, m=self.m, alpha=self.alpha,
                 base_seed=self.base_seed, stream_id=self.stream_id,
                 A=self.A, x_true=self.x_true, y=self.y)

    @staticmethod
    def load(path) -> "Instance":
        with np.load(Path(path)) as d:
            return Instance(n=int(d["n"]), m=int(d["m"]), alpha=float(d["alpha"]),
                            A=d["A"], x_true=d["x_true"], y=d["y"],
                            base_seed=int(d["base_seed"]), stream_id=int(d["stream_id"]))


def generate_instance(n: int, alpha: float, rng: RngStream) -> Instance:
    """Draw an instance: A iid N(0,1), x_true uniform on the unit sphere,
    y the exact squared magnitudes.  m = round(alpha * n)."""
    if n < 2:
        raise InvalidArgumentError(f"signal dimension must be >= 2, got {n}")
    if not (alpha > 0):
        raise InvalidArgumentError(f"sample complexity ratio must be > 0, got {alpha}")
    m = int(round(alpha * n))
    if m < 1:
        raise InvalidArgumentError(f"alpha={alpha} with n={n} yields no measurements")
    gen = rng.generator()
    A = gen.standard_normal((m, n))
    x = gen.standard_normal(n)
    x /= np.linalg.norm(x)
    y = (A @ x) ** 2
    return Instance(n=n, m=m, alpha=alpha, A=A, x_true=x, y=y,
                    base_seed=rng.base_seed, stream_id=rng.stream_id)


def overlap(u: np.ndarray, v: np.ndarray) -> float:
    """Normalized inner product u.v / (|u||v|) in [-1, 1]."""
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise InvalidArgumentError("overlap undefined for zero-norm input")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def success_check(x: np.ndarray, x_true: np.ndarray, eps: float = 1e-5) -> bool:
    """Recovery up to global sign: min(|x - x_true|, |x + x_true|) <= eps."""
    if x.shape != x_true.shape:
        raise InvalidArgumentError(f"shape mismatch {x.shape} vs {x_true.shape}")
    return bool(min(np.linalg.norm(x - x_true), np.linalg.norm(x + x_true)) <= eps)
