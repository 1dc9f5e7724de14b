"""Gaussian-expectation quadrature rules shared by the theory engine.

Two schemes:

* ``adaptive_truncated`` (default): Gauss-Legendre nodes on the truncated
  interval [0, T] (half line) or [-T, T] (full line), weighted by the
  standard normal density.  The integrands downstream contain |g| factors
  that are analytic away from the origin, so splitting at 0 keeps the rule
  spectrally accurate; the Gaussian tail beyond T = 8 is below 1e-14.
* ``gauss_hermite``: classic Gauss-Hermite abscissae mapped by g = sqrt(2) t.
  Retained for cross-checks; |g|-type kinks at the origin degrade it to
  roughly 1e-3 relative accuracy at 200 nodes, so it is not the default.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import roots_hermite, roots_legendre

from .core import InvalidArgumentError

SQRT2PI = np.sqrt(2.0 * np.pi)

SCHEME_TRUNCATED = "adaptive_truncated"
SCHEME_HERMITE = "gauss_hermite"


@dataclass(frozen=True)
class QuadratureSpec:
    """Settings for 1-D and tensor 2-D Gaussian expectations.

    nodes_2d is the per-dimension count of the 2-D tensor rules used by the
    squared-magnitudes engine, where each node carries an inner minimization
    and cost grows quadratically.
    """

    scheme: str = SCHEME_TRUNCATED
    nodes_1d: int = 200
    truncation: float = 8.0
    target_rel_err: float = 1e-8
    nodes_2d: int = 60

    def __post_init__(self):
        if self.scheme not in (SCHEME_TRUNCATED, SCHEME_HERMITE):
            raise InvalidArgumentError(f"unknown quadrature scheme {self.scheme!r}")
        if self.nodes_1d < 20:
            raise InvalidArgumentError("nodes_1d must be >= 20")
        if self.truncation < 5.0:
            raise InvalidArgumentError("truncation must be >= 5")

    def doubled(self) -> "QuadratureSpec":
        """Same rule with twice the nodes; used for error estimation."""
        return replace(self, nodes_1d=2 * self.nodes_1d, nodes_2d=2 * self.nodes_2d)


def half_gaussian_rule(spec: QuadratureSpec, nodes: int | None = None):
    """Nodes g > 0 and weights w with  sum w_i f(g_i) ~ int_0^inf f(g) phi(g) dg."""
    n = spec.nodes_1d if nodes is None else nodes
    if spec.scheme == SCHEME_TRUNCATED:
        xs, ws = roots_legendre(n)
        g = 0.5 * spec.truncation * (xs + 1.0)
        w = 0.5 * spec.truncation * ws * np.exp(-0.5 * g * g) / SQRT2PI
        return g, w
    t, w = roots_hermite(n)
    keep = t > 0
    return np.sqrt(2.0) * t[keep], w[keep] / np.sqrt(np.pi)


def full_gaussian_rule(spec: QuadratureSpec, nodes: int | None = None):
    """Nodes and weights for  int_{-inf}^{inf} f(g) phi(g) dg."""
    n = spec.nodes_1d if nodes is None else nodes
    if spec.scheme == SCHEME_TRUNCATED:
        xs, ws = roots_legendre(n)
        g = spec.truncation * xs
        w = spec.truncation * ws * np.exp(-0.5 * g * g) / SQRT2PI
        return g, w
    t, w = roots_hermite(n)
    return np.sqrt(2.0) * t, w / np.sqrt(np.pi)


def tensor_half_full_rule(spec: QuadratureSpec, nodes: int | None = None):
    """Flattened tensor rule for E f(g0, g1) with f(g0,g1) = f(-g0,-g1).

    Integrates g0 over (0, T] and g1 over [-T, T], doubling the weight to
    account for the joint reflection.  Returns (g0, g1, w) as flat arrays.
    """
    n = spec.nodes_2d if nodes is None else nodes
    g0, w0 = half_gaussian_rule(spec, n)
    g1, w1 = full_gaussian_rule(spec, 2 * n)
    G0, G1 = np.meshgrid(g0, g1, indexing="ij")
    W = 2.0 * np.outer(w0, w1)
    return G0.ravel(), G1.ravel(), W.ravel()
