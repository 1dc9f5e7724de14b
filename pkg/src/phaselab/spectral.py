"""Spectral initializers and their overlap theory.

The initializer is the top eigenvector of D = A^T diag(tau) A where
tau = T(y) is a componentwise preprocessing of the measurements.  Two
preprocessings are provided: identity (tau = y) and the overlap-optimal
choice tau = 1 - 1/y, clamped below because finite samples can land
arbitrarily close to y = 0.

The closed-form theory predicts the asymptotic overlap of the optimal
initializer: overlap_hat = sqrt(1 - 1/gamma_hat), with gamma_hat > 1 the
root of a transcendental equation in alpha.  solve_gamma_hat implements
that equation with an overflow-safe scaled complementary error function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx

from .core import (BelowWeakThresholdError, ConvergenceError, Instance,
                   InvalidArgumentError, NumericFailureError, RngStream, overlap)

PREPROCESS_IDENTITY = "identity"
PREPROCESS_OPTIMAL = "optimal"

WEAK_THRESHOLD = 0.5


@dataclass(frozen=True)
class PreprocessSpec:
    """Componentwise preprocessing choice with a lower clamp for 'optimal'."""

    kind: str = PREPROCESS_OPTIMAL
    clip_low: float = -50.0

    def __post_init__(self):
        if self.kind not in (PREPROCESS_IDENTITY, PREPROCESS_OPTIMAL):
            raise InvalidArgumentError(f"unknown preprocessing kind {self.kind!r}")


@dataclass(frozen=True)
class SpectralResult:
    x_spec: np.ndarray      # unit-norm top eigenvector
    lambda_spec: float      # top eigenvalue of A^T diag(tau) A
    overlap_abs: float      # |<x_spec, x_true>|, diagnostics only
    iterations: int
    residual: float         # ||D x_spec - lambda x_spec||_2 at return


@dataclass(frozen=True)
class OptSpinTheoryPoint:
    """One point of the optimal-overlap curve."""

    alpha: float
    gamma_hat: float
    d_hat: float
    overlap_hat: float


def preprocess(y: np.ndarray, spec: PreprocessSpec) -> np.ndarray:
    """Apply the preprocessing componentwise.

    identity: tau = y.  optimal: tau = max(1 - 1/y, clip_low), with y = 0
    mapped to clip_low; outputs lie in [clip_low, 1).
    """
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise InvalidArgumentError("squared magnitudes must be nonnegative")
    if spec.kind == PREPROCESS_IDENTITY:
        return y.copy()
    with np.errstate(divide="ignore"):
        tau = 1.0 - 1.0 / y
    tau[y == 0.0] = spec.clip_low
    return np.maximum(tau, spec.clip_low)


def spectral_apply(A: np.ndarray, tau: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-free product A^T diag(tau) A v (never forms the n x n operator)."""
    if A.shape[0] != tau.shape[0] or A.shape[1] != v.shape[0]:
        raise InvalidArgumentError(
            f"shape mismatch: A {A.shape}, tau {tau.shape}, v {v.shape}")
    return A.T @ (tau * (A @ v))


def _upper_bound_ata(A: np.ndarray, rng: np.random.Generator,
                     iters: int = 80, fudge: float = 1.1) -> float:
    """Power-iteration estimate of lambda_max(A^T A), inflated to an upper bound."""
    n = A.shape[1]
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = A.T @ (A @ v)
        lam = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
    return fudge * lam


def top_eigenpair(A: np.ndarray, tau: np.ndarray, tol: float = 1e-8,
                  max_iter: int = 5000, rng: RngStream | None = None):
    """Algebraically largest eigenpair of D = A^T diag(tau) A.

    Shifted power iteration on D + sigma*I with sigma = max(0, -min tau) * s,
    s an upper bound on lambda_max(A^T A) from its own power iteration; the
    shift makes the target eigenvalue the largest in magnitude even though D
    is indefinite for signed tau.  Stops when ||D v - lambda v|| <= tol.

    Returns (lambda, v, iterations, residual).  Raises ConvergenceError
    carrying the best iterate when max_iter is exhausted.
    """
    if tol <= 0:
        raise InvalidArgumentError("tol must be positive")
    gen = (rng or RngStream(0)).generator()
    tmin = float(np.min(tau))
    sigma = 0.0
    if tmin < 0.0:
        sigma = -tmin * _upper_bound_ata(A, gen)
    n = A.shape[1]
    v = gen.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    res = np.inf
    for it in range(1, max_iter + 1):
        w = spectral_apply(A, tau, v)
        lam = float(v @ w)
        res = float(np.linalg.norm(w - lam * v))
        if res <= tol:
            return lam, v, it, res
        w += sigma * v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            raise NumericFailureError("power iteration annihilated the iterate")
        v = w / nw
    raise ConvergenceError(
        f"power iteration did not reach residual {tol:g} in {max_iter} iterations "
        f"(best residual {res:g})", best_value=lam, best_vector=v, residual=res)


def optspin_init(instance: Instance, spec: PreprocessSpec | None = None,
                 tol: float = 1e-8, max_iter: int = 5000,
                 rng: RngStream | None = None) -> SpectralResult:
    """Spectral initializer for an instance: preprocess, then top eigenpair.

    The returned eigenvector is sign-fixed so its inner product with x_true
    is nonnegative.  That uses the planted signal, so it is for diagnostics
    and trajectory plots only; overlap_abs is what solvers may report.
    """
    spec = spec or PreprocessSpec()
    tau = preprocess(instance.y, spec)
    lam, v, iters, res = top_eigenpair(instance.A, tau, tol=tol,
                                       max_iter=max_iter, rng=rng)
    ov = overlap(v, instance.x_true)
    if ov < 0:
        v = -v
    return SpectralResult(x_spec=v, lambda_spec=lam, overlap_abs=abs(ov),
                          iterations=iters, residual=res)


def gamma_equation_lhs(gamma: float) -> float:
    """Left side of the optimal-overlap fixed-point equation.

    Decreases from 2 at gamma -> 1+ toward 0, so a root gamma_hat > 1 with
    lhs(gamma_hat) = 1/alpha exists exactly for alpha > 1/2.  Uses
    erfcx(t) = exp(t^2) erfc(t) to avoid overflow near gamma = 1.
    """
    d = gamma - 1.0
    if d <= 0:
        raise InvalidArgumentError("gamma must exceed 1")
    t = 1.0 / np.sqrt(2.0 * d)
    inner = (gamma / 2.0) * np.sqrt(2.0 * d * np.pi) * erfcx(t) - d
    return float(gamma / d ** 3 * inner)


def solve_gamma_hat(alpha: float, tol: float = 1e-12) -> OptSpinTheoryPoint:
    """Solve the overlap equation for gamma_hat and the optimal overlap.

    Brackets the root by geometric expansion from 1 + 1e-6, then bisects
    until |lhs(gamma) - 1/alpha| <= tol.
    """
    if alpha <= WEAK_THRESHOLD:
        raise BelowWeakThresholdError(
            f"alpha={alpha} is at or below the weak threshold 1/2; no positive overlap")
    if tol <= 0:
        raise InvalidArgumentError("tol must be positive")
    target = 1.0 / alpha
    lo = 1.0 + 1e-6
    if gamma_equation_lhs(lo) < target:
        # root sits between 1 and lo; shrink the left endpoint instead
        hi = lo
        lo = 1.0 + 1e-15
    else:
        hi = 2.0
        while gamma_equation_lhs(hi) > target:
            hi = 1.0 + 2.0 * (hi - 1.0)
            if hi > 1e300:
                raise NumericFailureError(f"no bracket found for alpha={alpha}")
    mid = 0.5 * (lo + hi)
    for _ in range(500):
        mid = 0.5 * (lo + hi)
        val = gamma_equation_lhs(mid)
        if val > target:
            lo = mid
        else:
            hi = mid
        if abs(val - target) <= tol:
            break
    else:
        raise NumericFailureError(
            f"bisection stalled at residual {abs(gamma_equation_lhs(mid)-target):g} "
            f"for alpha={alpha} (tol {tol:g})")
    gamma = mid
    return OptSpinTheoryPoint(alpha=alpha, gamma_hat=gamma, d_hat=gamma - 1.0,
                              overlap_hat=float(np.sqrt(1.0 - 1.0 / gamma)))


def overlap_curve(alpha_grid, tol: float = 1e-12) -> list[OptSpinTheoryPoint]:
    """Optimal overlap at each alpha of a strictly increasing grid."""
    grid = [float(a) for a in alpha_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidArgumentError("alpha grid must be strictly increasing")
    points = []
    for a in grid:
        try:
            points.append(solve_gamma_hat(a, tol))
        except (InvalidArgumentError, NumericFailureError) as exc:
            raise type(exc)(f"alpha={a}: {exc}") from exc
    return points


def write_overlap_curve_csv(points, path) -> None:
    with open(path, "w") as fh:
        fh.write("alpha,gamma_hat,d_hat,overlap_hat\n")
        for p in points:
            fh.write(f"{p.alpha:.17g},{p.gamma_hat:.17g},{p.d_hat:.17g},{p.overlap_hat:.17g}\n")
