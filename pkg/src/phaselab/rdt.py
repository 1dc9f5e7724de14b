"""Theory engine for the duality estimates of the constrained retrieval
objective, parametrized by signal norm c and overlap x.

Two objective variants (non-squared and squared magnitudes), each at two
estimate levels (plain, lifted).  The plain non-squared estimate reduces to
a single Gaussian integral; the lifted levels require nested scalar
optimization over auxiliary variables (c3, ry, gamma) around exponentially
tilted expectations.

Coefficient conventions
-----------------------
The non-squared plain integrand is implemented in two conventions selected
by ``cross_term``:

* ``literal``: the cross term enters with weight 1/sqrt(2*pi); this is the
  published closed-form variant, anchoring f_q(c=1, r=1) = 2 - 2/pi.
* ``corrected``: the cross term doubled, which makes f_q equal the second
  moment E(|a| - |b|)^2 of the jointly Gaussian pair with covariance
  [[1, x], [x, c]].  Direct Monte-Carlo minimization of the underlying
  constrained program confirms this convention, and only under it does the
  lifted estimate dominate the plain one pointwise.

Both are exposed; ``literal`` is the default so the anchor values hold.
Ordering checks between levels should use ``corrected``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import erf, erfc, erfcx, logsumexp

from .core import InvalidArgumentError, NumericFailureError
from .quadrature import SQRT2PI, QuadratureSpec, full_gaussian_rule, half_gaussian_rule

VARIANT_NONSQUARED = "nonsquared"
VARIANT_SQUARED = "squared"
LEVEL_PLAIN = "plain"
LEVEL_LIFTED = "lifted"

CROSS_LITERAL = "literal"
CROSS_CORRECTED = "corrected"

CUBIC_CORRECTED = "corrected"
CUBIC_LITERAL = "literal"

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ManifoldQuery:
    """A point on the (c, x) parametric manifold for one variant/level."""

    alpha: float
    c: float
    x: float
    variant: str = VARIANT_NONSQUARED
    level: str = LEVEL_PLAIN

    def __post_init__(self):
        if self.c <= 0:
            raise InvalidArgumentError("norm parameter c must be positive")
        if not (0.0 <= self.x <= math.sqrt(self.c) + 1e-12):
            raise InvalidArgumentError(
                f"overlap x={self.x} outside [0, sqrt(c)] for c={self.c}")
        if self.variant not in (VARIANT_NONSQUARED, VARIANT_SQUARED):
            raise InvalidArgumentError(f"unknown variant {self.variant!r}")
        if self.level not in (LEVEL_PLAIN, LEVEL_LIFTED):
            raise InvalidArgumentError(f"unknown level {self.level!r}")

    @property
    def r(self) -> float:
        return math.sqrt(max(self.c - self.x * self.x, 0.0))


@dataclass
class RdtEstimate:
    query: ManifoldQuery
    value: float
    inner: dict = field(default_factory=dict)
    quadrature_error: float = 0.0
    warning: str | None = None

    @property
    def sqrt_value(self) -> float:
        return math.sqrt(max(self.value, 0.0))


@dataclass(frozen=True)
class OptimizerSpec:
    """Nested-search settings for the lifted and squared estimates."""

    grid_points: int = 40          # coarse (c3, ry) grid, non-squared lifted
    grid_lo: float = 1e-3
    grid_hi: float = 1e2
    simplex_tol: float = 1e-9
    simplex_max_iter: int = 300
    gamma_lo: float = 1e-3
    gamma_hi: float = 1e3
    gamma_coarse: int = 14
    gamma_refine_iters: int = 30
    ry_lo: float = 1e-4            # plain-squared bracket
    ry_hi: float = 1e3
    ry_coarse: int = 60
    sq_grid_points: int = 10       # coarse grid, squared lifted (cold start)
    sq_simplex_max_iter: int = 60
    zgrid_points: int = 48         # dense inner-minimization safeguard
    zrefine_iters: int = 14


# ---------------------------------------------------------------------------
# plain, non-squared magnitudes
# ---------------------------------------------------------------------------

def _fq_plain_integrand(g, c, r, cross_term):
    x = math.sqrt(max(c - r * r, 0.0))
    if r == 0.0:
        # limit: the erf factor saturates at -1 and the cross term vanishes
        return (1.0 + c) - 2.0 * g * g * x
    A = g * g * x
    B = g * r
    C = -g * x / r
    w_cross = 2.0 if cross_term == CROSS_LITERAL else 4.0
    return ((1.0 + c) + 2.0 * A * erf(C / math.sqrt(2.0))
            - w_cross * B * np.exp(-0.5 * C * C) / SQRT2PI)


def f_q_plain(c: float, r: float, quad: QuadratureSpec | None = None,
              cross_term: str = CROSS_LITERAL) -> float:
    """Gaussian-expectation term of the plain non-squared estimate.

    Closed-form anchors: f_q(1, 1) = 2 - 2/pi (literal) or 2 - 4/pi
    (corrected); f_q(c, 0) = (1 - sqrt(c))^2 in both conventions.
    """
    if r < 0 or r > math.sqrt(c) + 1e-12:
        raise InvalidArgumentError(f"r={r} outside [0, sqrt(c)] for c={c}")
    if cross_term not in (CROSS_LITERAL, CROSS_CORRECTED):
        raise InvalidArgumentError(f"unknown cross_term {cross_term!r}")
    quad = quad or QuadratureSpec()
    g, w = half_gaussian_rule(quad)
    return float(2.0 * np.sum(w * _fq_plain_integrand(g, c, r, cross_term)))


def phi_plain(alpha: float, c: float, x: float,
              quad: QuadratureSpec | None = None,
              cross_term: str = CROSS_LITERAL) -> RdtEstimate:
    """Plain estimate  max(sqrt(alpha * f_q) - r, 0)^2  at (c, x)."""
    q = ManifoldQuery(alpha, c, x, VARIANT_NONSQUARED, LEVEL_PLAIN)
    quad = quad or QuadratureSpec()
    r = q.r
    fq = f_q_plain(c, r, quad, cross_term)
    val = max(math.sqrt(alpha * max(fq, 0.0)) - r, 0.0) ** 2
    fq2 = f_q_plain(c, r, quad.doubled(), cross_term)
    val2 = max(math.sqrt(alpha * max(fq2, 0.0)) - r, 0.0) ** 2
    return RdtEstimate(q, val, inner={"fq": fq, "cross_term": cross_term},
                       quadrature_error=abs(val - val2))


# ---------------------------------------------------------------------------
# lifted, non-squared magnitudes
# ---------------------------------------------------------------------------

def _fq_lift_r0(c, x, c3, gx, quad):
    # r = 0: the second Gaussian drops out; minimize over z directly.
    g, w = half_gaussian_rule(quad)
    b = g * x
    m = np.minimum(gx * (g - b) ** 2, g * g + (gx / max(1.0 - gx, 1e-300)) * b * b)
    return float(2.0 * np.sum(w * np.exp(-c3 * m)))


def f_q_lift(c: float, x: float, c3: float, r_y: float,
             quad: QuadratureSpec | None = None) -> float:
    """Exponentially tilted expectation of the non-squared inner minimum.

    Equals E exp(-c3 * min_z [(|a|-|z|)^2 + r_y (b-z)^2]) for the Gaussian
    pair (a, b), with the b-integral done in closed form; r_y is the weight
    of the alignment term and enters through gx = r_y / (1 + r_y).  The two
    erfc/exponential terms swap under g -> -g, so the integrand is even and
    is integrated over the positive half line only.
    """
    if c3 <= 0 or r_y <= 0:
        raise InvalidArgumentError("c3 and r_y must be positive")
    quad = quad or QuadratureSpec()
    r = math.sqrt(max(c - x * x, 0.0))
    gx = r_y / (1.0 + r_y)
    if r == 0.0:
        return _fq_lift_r0(c, x, c3, gx, quad)
    g, w = half_gaussian_rule(quad)
    Abar = 2.0 * c3 * gx * r * g * (x - 1.0)
    A2 = 2.0 * c3 * gx * r * g * (x + 1.0)
    Bbar = -g * x / r
    Cbar = 1.0 + 2.0 * c3 * gx * r * r
    Dbar = -c3 * gx * g * g * (1.0 + x * x - 2.0 * x)
    D2 = -c3 * gx * g * g * (1.0 + x * x + 2.0 * x)
    sqC = math.sqrt(Cbar)

    def term(A, D, sgn):
        E = D + A * A / (2.0 * Cbar)
        s = sgn * (A + Cbar * Bbar) / (math.sqrt(2.0) * sqC)
        pos = s > 0.0
        # scaled-erfc form where the plain erfc would underflow
        upper = erfcx(np.where(pos, s, 0.0)) * np.exp(np.minimum(E - s * s, 0.0))
        lower = erfc(np.where(pos, 0.0, s)) * np.exp(E)
        return np.where(pos, upper, lower) / (2.0 * sqC)

    vals = term(Abar, Dbar, +1.0) + term(A2, D2, -1.0)
    return float(2.0 * np.sum(w * vals))


def _sphere_terms(c3, r, ry):
    """Closed-form sphere contribution -gamma_sph + log-term.

    gamma_sph solves the scalar Laplace problem of the constraint sphere;
    its r*ry scale is required for the r_y -> inf limit of the objective to
    stay bounded (the bare closed form loses that factor).  The log argument
    1 - c3*r*ry/(2*gamma_bare) equals 4/(u + s)^2 and is positive for all
    parameters, so feasibility only guards against floating-point zero.
    """
    u = c3 * r * ry
    s = math.sqrt(u * u + 4.0)
    gamma_bare = (u + s) / 4.0
    gamma_sph = r * ry * gamma_bare
    log_arg = 4.0 / (s + u) ** 2
    if not log_arg > 0.0:
        raise NumericFailureError(f"sphere log-argument underflow at c3={c3}, ry={ry}")
    return gamma_sph, gamma_bare, -gamma_sph + math.log(log_arg) / (2.0 * c3)


def _lifted_objective(alpha, c, x, c3, ry, gamma, quad):
    r = math.sqrt(max(c - x * x, 0.0))
    rby = ry * ry / (4.0 * gamma)
    fq = f_q_lift(c, x, c3, rby, quad)
    if fq <= 0.0:
        return math.inf
    _, _, sphere = _sphere_terms(c3, r, ry)
    return ((c3 / 2.0) * r * r * ry * ry + gamma
            - (alpha / c3) * math.log(fq) + sphere)


def _golden_min(f, lo, hi, coarse, iters):
    """Coarse scan then golden-section minimization of f on [lo, hi]."""
    xs = np.linspace(lo, hi, coarse)
    vals = [f(t) for t in xs]
    k = int(np.argmin(vals))
    a = xs[max(k - 1, 0)]
    b = xs[min(k + 1, coarse - 1)]
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 < f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def _min_over_gamma(alpha, c, x, c3, ry, quad, opt):
    f = lambda lg: _lifted_objective(alpha, c, x, c3, ry, math.exp(lg), quad)
    lg, val = _golden_min(f, math.log(opt.gamma_lo), math.log(opt.gamma_hi),
                          opt.gamma_coarse, opt.gamma_refine_iters)
    return val, math.exp(lg)


def phi_lifted(alpha: float, c: float, x: float,
               quad: QuadratureSpec | None = None,
               opt: OptimizerSpec | None = None,
               warm: tuple[float, float] | None = None) -> RdtEstimate:
    """Lifted non-squared estimate: max over (c3, ry) of the inner gamma-min.

    Coarse log-spaced grid then Nelder-Mead refinement in log coordinates;
    ``warm`` restarts the simplex from a previous optimum (used along curve
    grids) while still scanning a thinned global grid to catch basin jumps.
    """
    q = ManifoldQuery(alpha, c, x, VARIANT_NONSQUARED, LEVEL_LIFTED)
    quad = quad or QuadratureSpec()
    opt = opt or OptimizerSpec()
    lo, hi = math.log(opt.grid_lo), math.log(opt.grid_hi)

    def value_at(lc3, lry):
        v, gm = _min_over_gamma(alpha, c, x, math.exp(lc3), math.exp(lry), quad, opt)
        return v, gm

    best = (-math.inf, None)
    npts = opt.grid_points if warm is None else max(opt.grid_points // 4, 6)
    ls = np.linspace(lo, hi, npts)
    for lc3 in ls:
        for lry in ls:
            v, _ = value_at(lc3, lry)
            if math.isfinite(v) and v > best[0]:
                best = (v, (lc3, lry))
    if warm is not None:
        v, _ = value_at(*warm)
        if math.isfinite(v) and v > best[0]:
            best = (v, tuple(warm))
    if best[1] is None:
        raise NumericFailureError(
            f"no feasible (c3, ry) found for alpha={alpha}, c={c}, x={x}")

    box = (lo - math.log(10.0), hi + math.log(10.0))

    def neg(p):
        if not (box[0] <= p[0] <= box[1] and box[0] <= p[1] <= box[1]):
            return 1e12
        v, _ = value_at(p[0], p[1])
        return -v if math.isfinite(v) else 1e12

    res = minimize(neg, np.array(best[1]), method="Nelder-Mead",
                   options=dict(xatol=1e-7, fatol=opt.simplex_tol,
                                maxiter=opt.simplex_max_iter))
    warning = None
    if -res.fun < best[0]:
        lc3, lry = best[1]
        val = best[0]
        warning = "simplex refinement did not improve on the grid"
    else:
        lc3, lry = res.x
        val = -res.fun
        if not res.success:
            warning = "simplex refinement hit its iteration cap"
    _, gamma = value_at(lc3, lry)
    c3, ry = math.exp(lc3), math.exp(lry)
    _, gamma_bare, _ = _sphere_terms(c3, q.r, ry)
    val2 = _lifted_objective(alpha, c, x, c3, ry, gamma, quad.doubled())
    return RdtEstimate(q, val,
                       inner={"c3": c3, "ry": ry, "gamma": gamma,
                              "gamma_sph": gamma_bare},
                       quadrature_error=abs(val - val2), warning=warning)


# ---------------------------------------------------------------------------
# depressed cubic candidates
# ---------------------------------------------------------------------------

def _cubic_roots_vec(p, q):
    """Real roots of z^3 + p z + q = 0, vectorized.

    Returns an array shaped p.shape + (3,); single-root inputs repeat that
    root.  Discriminant > 0 uses the cancellation-safe Cardano branch;
    discriminant <= 0 (three real roots, includes the boundary) uses the
    trigonometric method.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    disc = 0.25 * q * q + p ** 3 / 27.0
    out = np.zeros(p.shape + (3,))
    three = disc <= 0.0
    if np.any(three):
        pn = np.where(three, np.minimum(p, -1e-300), -1.0)
        rad = np.sqrt(-pn / 3.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            cosarg = np.clip(1.5 * q / (pn * rad), -1.0, 1.0)
        theta = np.arccos(np.where(three, cosarg, 0.0)) / 3.0
        for k in range(3):
            root = 2.0 * rad * np.cos(theta - 2.0 * np.pi * k / 3.0)
            out[..., k] = np.where(three, root, 0.0)
    single = ~three
    if np.any(single):
        sq = np.sqrt(np.where(single, disc, 1.0))
        s = -0.5 * q
        t = np.where(s >= 0.0, s + sq, s - sq)
        u = np.cbrt(t)
        safe = np.abs(u) > 1e-300
        root = np.where(safe, u - p / np.where(safe, 3.0 * u, 1.0), 0.0)
        for k in range(3):
            out[..., k] = np.where(single, root, out[..., k])
    return out


def cubic_candidates(p: float, q: float) -> tuple[float, ...]:
    """Nonnegative stationary-point candidates of the inner minimization:
    real roots of z^3 + p z + q = 0 together with the boundary point 0."""
    roots = _cubic_roots_vec(np.array(p), np.array(q))[()]
    cands = [0.0]
    for z in np.atleast_1d(roots):
        z = float(z)
        if z >= 0.0 and all(abs(z - c) > 1e-12 * (1.0 + abs(z)) for c in cands):
            cands.append(z)
    return tuple(sorted(cands))


# ---------------------------------------------------------------------------
# squared magnitudes
# ---------------------------------------------------------------------------

def _h_sq(z, w, v, ry):
    return (w - z * z) ** 2 + ry * (v - z) ** 2


def _min_z_sq(w, v, ry, opt, cubic_formula, stats=None):
    """Vectorized min over z >= 0 of (w - z^2)^2 + ry (v - z)^2.

    Fast path: depressed-cubic stationary candidates plus 0.  The corrected
    formula differentiates the objective (p = (ry - 2w)/2); the literal one
    keeps the published coefficient (p = (ry - 2|g0|)/2), which fails the
    stationarity check and exists for comparison only.  Every node is also
    arbitrated against a dense z-grid with golden refinement, and the
    smaller value wins; disagreements beyond 1e-6 are counted in ``stats``.
    """
    g0abs = np.sqrt(w)
    if cubic_formula == CUBIC_CORRECTED:
        p = 0.5 * (ry - 2.0 * w)
    elif cubic_formula == CUBIC_LITERAL:
        p = 0.5 * (ry - 2.0 * g0abs)
    else:
        raise InvalidArgumentError(f"unknown cubic formula {cubic_formula!r}")
    qq = -0.5 * ry * v
    roots = np.clip(_cubic_roots_vec(p, qq), 0.0, None)
    cand = _h_sq(roots, w[..., None], v[..., None], ry).min(axis=-1)
    cand = np.minimum(cand, _h_sq(np.zeros_like(w), w, v, ry))

    K = opt.zgrid_points
    zmax = 2.0 * (g0abs + np.sqrt(ry * np.maximum(v, 0.0))) + 1e-9
    ts = np.linspace(0.0, 1.0, K)
    dense_vals = _h_sq(zmax[..., None] * ts, w[..., None], v[..., None], ry)
    kbest = np.argmin(dense_vals, axis=-1)
    dense = np.take_along_axis(dense_vals, kbest[..., None], axis=-1)[..., 0]
    lo = zmax * np.clip(kbest - 1, 0, K - 1) / (K - 1)
    hi = zmax * np.clip(kbest + 1, 0, K - 1) / (K - 1)
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1 = _h_sq(x1, w, v, ry)
    f2 = _h_sq(x2, w, v, ry)
    for _ in range(opt.zrefine_iters):
        take1 = f1 < f2
        hi = np.where(take1, x2, hi)
        lo = np.where(take1, lo, x1)
        n1 = hi - _GOLDEN * (hi - lo)
        n2 = lo + _GOLDEN * (hi - lo)
        x1n = np.where(take1, n1, x2)
        x2n = np.where(take1, x1, n2)
        f1n = np.where(take1, _h_sq(n1, w, v, ry), f2)
        f2n = np.where(take1, f1, _h_sq(n2, w, v, ry))
        x1, x2, f1, f2 = x1n, x2n, f1n, f2n
    dense = np.minimum(dense, np.minimum(f1, f2))

    if stats is not None:
        stats["nodes"] = stats.get("nodes", 0) + int(w.size)
        stats["disagreements"] = (stats.get("disagreements", 0)
                                  + int(np.sum(dense < cand - 1e-6)))
    return np.minimum(cand, dense)


class _SqNodes:
    """Cached 2-D quadrature nodes for one (c, x) section.

    Integrates g0 over the positive half line and the alignment magnitude
    u = |g0 x + g1 r| directly (the substitution removes the |.| kink, so
    the truncated Gauss-Legendre rule converges spectrally).  At r = 0 the
    u-direction collapses and a 1-D rule over g0 is used.
    """

    def __init__(self, c, x, quad, nodes=None):
        self.c, self.x = c, x
        self.r = math.sqrt(max(c - x * x, 0.0))
        n = quad.nodes_2d if nodes is None else nodes
        g0, w0 = half_gaussian_rule(quad, n)
        if self.r == 0.0:
            self.w = (g0 * g0).ravel()
            self.v = np.abs(g0 * x)
            self.W = 2.0 * w0
            return
        umax = quad.truncation * (abs(x) + self.r) + 1.0
        from scipy.special import roots_legendre
        xs, ws = roots_legendre(2 * n)
        u = 0.5 * umax * (xs + 1.0)
        wu = 0.5 * umax * ws
        G0, U = np.meshgrid(g0, u, indexing="ij")
        dens = (np.exp(-0.5 * ((U - G0 * x) / self.r) ** 2)
                + np.exp(-0.5 * ((U + G0 * x) / self.r) ** 2)) / (self.r * SQRT2PI)
        self.w = (G0 * G0).ravel()
        self.v = U.ravel()
        self.W = (2.0 * np.outer(w0, wu) * dens).ravel()

    def expect_min(self, ry, opt, cubic_formula, stats=None):
        m = _min_z_sq(self.w, self.v, ry, opt, cubic_formula, stats)
        return float(np.sum(self.W * m))

    def expect_exp_min(self, c3, rby, opt, cubic_formula, stats=None):
        m = _min_z_sq(self.w, self.v, rby, opt, cubic_formula, stats)
        # log-sum-exp keeps large c3 * m exponents finite
        return float(np.exp(logsumexp(-c3 * m, b=np.maximum(self.W, 1e-300))))


def f_q_sq(c: float, x: float, r_y: float, quad: QuadratureSpec | None = None,
           opt: OptimizerSpec | None = None,
           cubic_formula: str = CUBIC_CORRECTED, stats: dict | None = None) -> float:
    """Expected inner minimum of the squared-magnitudes dual term."""
    if r_y <= 0:
        raise InvalidArgumentError("r_y must be positive")
    quad = quad or QuadratureSpec()
    opt = opt or OptimizerSpec()
    return _SqNodes(c, x, quad).expect_min(r_y, opt, cubic_formula, stats)


def phi_plain_sq(alpha: float, c: float, x: float,
                 quad: QuadratureSpec | None = None,
                 opt: OptimizerSpec | None = None,
                 cubic_formula: str = CUBIC_CORRECTED) -> RdtEstimate:
    """Plain squared estimate: max over ry of alpha*f_q_sq - r^2 ry."""
    q = ManifoldQuery(alpha, c, x, VARIANT_SQUARED, LEVEL_PLAIN)
    quad = quad or QuadratureSpec()
    opt = opt or OptimizerSpec()
    nodes = _SqNodes(c, x, quad)
    r2 = q.r ** 2
    stats: dict = {}

    def negval(lry):
        ry = math.exp(lry)
        return -(alpha * nodes.expect_min(ry, opt, cubic_formula, stats) - r2 * ry)

    lry, nval = _golden_min(negval, math.log(opt.ry_lo), math.log(opt.ry_hi),
                            opt.ry_coarse, opt.gamma_refine_iters)
    ry = math.exp(lry)
    val = -nval
    nodes2 = _SqNodes(c, x, quad.doubled())
    val2 = alpha * nodes2.expect_min(ry, opt, cubic_formula) - r2 * ry
    return RdtEstimate(q, val, inner={"ry": ry, **stats},
                       quadrature_error=abs(val - val2))


def _lifted_sq_objective(alpha, c, x, c3, ry, gamma, nodes, opt, cubic_formula, stats=None):
    r = math.sqrt(max(c - x * x, 0.0))
    rby = ry * ry / (4.0 * gamma)
    fq = nodes.expect_exp_min(c3, rby, opt, cubic_formula, stats)
    if fq <= 0.0:
        return math.inf
    _, _, sphere = _sphere_terms(c3, r, ry)
    return ((c3 / 2.0) * r * r * ry * ry + gamma
            - (alpha / c3) * math.log(fq) + sphere)


def phi_lifted_sq(alpha: float, c: float, x: float,
                  quad: QuadratureSpec | None = None,
                  opt: OptimizerSpec | None = None,
                  warm: tuple[float, float] | None = None,
                  cubic_formula: str = CUBIC_CORRECTED) -> RdtEstimate:
    """Lifted squared estimate: grid + simplex over (c3, ry) with an inner
    golden-section minimization over gamma at every evaluation."""
    q = ManifoldQuery(alpha, c, x, VARIANT_SQUARED, LEVEL_LIFTED)
    quad = quad or QuadratureSpec()
    opt = opt or OptimizerSpec()
    nodes = _SqNodes(c, x, quad)
    stats: dict = {}

    def min_gamma(lc3, lry, coarse=None):
        c3, ry = math.exp(lc3), math.exp(lry)
        f = lambda lg: _lifted_sq_objective(alpha, c, x, c3, ry, math.exp(lg),
                                            nodes, opt, cubic_formula, stats)
        lg, val = _golden_min(f, math.log(opt.gamma_lo), math.log(opt.gamma_hi),
                              coarse or opt.gamma_coarse, opt.gamma_refine_iters)
        return val, math.exp(lg)

    best = (-math.inf, None)
    if warm is not None:
        v, _ = min_gamma(*warm, coarse=8)
        if math.isfinite(v):
            best = (v, tuple(warm))
        ls_c = np.array(warm[0]) + np.linspace(-0.7, 0.7, 3)
        ls_r = np.array(warm[1]) + np.linspace(-0.7, 0.7, 3)
    else:
        ls_c = np.linspace(math.log(opt.grid_lo), math.log(opt.grid_hi),
                           opt.sq_grid_points)
        ls_r = ls_c
    for lc3 in ls_c:
        for lry in ls_r:
            if warm is not None and (lc3, lry) == tuple(warm):
                continue
            v, _ = min_gamma(lc3, lry, coarse=8)
            if math.isfinite(v) and v > best[0]:
                best = (v, (lc3, lry))
    if best[1] is None:
        raise NumericFailureError(
            f"no feasible (c3, ry) found for alpha={alpha}, c={c}, x={x} (squared)")

    lo = math.log(opt.grid_lo) - math.log(10.0)
    hi = math.log(opt.grid_hi) + math.log(10.0)

    def neg(p):
        if not (lo <= p[0] <= hi and lo <= p[1] <= hi):
            return 1e12
        v, _ = min_gamma(p[0], p[1])
        return -v if math.isfinite(v) else 1e12

    res = minimize(neg, np.array(best[1]), method="Nelder-Mead",
                   options=dict(xatol=1e-5, fatol=1e-10,
                                maxiter=opt.sq_simplex_max_iter))
    warning = None
    if -res.fun < best[0]:
        (lc3, lry), val = best[1], best[0]
        warning = "simplex refinement did not improve on the grid"
    else:
        (lc3, lry), val = res.x, -res.fun
    _, gamma = min_gamma(lc3, lry)
    c3, ry = math.exp(lc3), math.exp(lry)
    _, gamma_bare, _ = _sphere_terms(c3, q.r, ry)
    nodes2 = _SqNodes(c, x, quad.doubled())
    val2 = _lifted_sq_objective(alpha, c, x, c3, ry, gamma, nodes2, opt, cubic_formula)
    return RdtEstimate(q, val,
                       inner={"c3": c3, "ry": ry, "gamma": gamma,
                              "gamma_sph": gamma_bare, **stats},
                       quadrature_error=abs(val - val2), warning=warning)


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------

@dataclass
class CurveTable:
    alpha: float
    c: float
    variant: str
    level: str
    rows: list            # RdtEstimate or None on per-point failure
    in_flat_region: list  # bool per row
    errors: list          # str or None per row
    flat_tol: float
    quad: QuadratureSpec
    opt: OptimizerSpec

    @property
    def flat_edge(self) -> float | None:
        """Largest x of the flat prefix, or None if no row succeeded."""
        edge = None
        for row, flat in zip(self.rows, self.in_flat_region):
            if row is not None and flat:
                edge = row.query.x
        return edge


def annotate_flat_region(values, flat_tol: float = 1e-3) -> list[bool]:
    """Largest grid prefix whose values stay within flat_tol of the running
    maximum; the first point that drops below ends the region for good."""
    flags = []
    run_max = -math.inf
    alive = True
    for v in values:
        if v is None or not math.isfinite(v):
            alive = False
            flags.append(False)
            continue
        run_max = max(run_max, v)
        alive = alive and (run_max - v <= flat_tol)
        flags.append(alive)
    return flags


def manifold_curve(alpha: float, c: float, x_grid, variant: str, level: str,
                   quad: QuadratureSpec | None = None,
                   opt: OptimizerSpec | None = None,
                   flat_tol: float = 1e-3,
                   cross_term: str = CROSS_LITERAL,
                   cubic_formula: str = CUBIC_CORRECTED) -> CurveTable:
    """Evaluate one estimate along an increasing x grid, warm-starting the
    lifted optimizers from the previous point.  Per-point failures are
    recorded and the curve continues."""
    xs = [float(v) for v in x_grid]
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise InvalidArgumentError("x grid must be strictly increasing")
    quad = quad or QuadratureSpec()
    opt = opt or OptimizerSpec()
    rows, errors = [], []
    warm = None
    for x in xs:
        try:
            if variant == VARIANT_NONSQUARED and level == LEVEL_PLAIN:
                est = phi_plain(alpha, c, x, quad, cross_term)
            elif variant == VARIANT_NONSQUARED and level == LEVEL_LIFTED:
                est = phi_lifted(alpha, c, x, quad, opt, warm=warm)
                warm = (math.log(est.inner["c3"]), math.log(est.inner["ry"]))
            elif variant == VARIANT_SQUARED and level == LEVEL_PLAIN:
                est = phi_plain_sq(alpha, c, x, quad, opt, cubic_formula)
            elif variant == VARIANT_SQUARED and level == LEVEL_LIFTED:
                est = phi_lifted_sq(alpha, c, x, quad, opt, warm=warm,
                                    cubic_formula=cubic_formula)
                warm = (math.log(est.inner["c3"]), math.log(est.inner["ry"]))
            else:
                raise InvalidArgumentError(f"unknown curve kind {variant}/{level}")
            rows.append(est)
            errors.append(None)
        except (InvalidArgumentError, NumericFailureError) as exc:
            rows.append(None)
            errors.append(str(exc))
    flags = annotate_flat_region([r.value if r is not None else None for r in rows],
                                 flat_tol)
    return CurveTable(alpha=alpha, c=c, variant=variant, level=level,
                      rows=rows, in_flat_region=flags, errors=errors,
                      flat_tol=flat_tol, quad=quad, opt=opt)


def write_manifold_csv(table: CurveTable, path) -> None:
    with open(path, "w") as fh:
        fh.write("alpha,c,x,variant,level,value,sqrt_value,ry,c3,gamma,quad_err,in_flat_region\n")
        for row, flat in zip(table.rows, table.in_flat_region):
            if row is None:
                continue
            inner = row.inner
            ry = inner.get("ry", "")
            c3 = inner.get("c3", "")
            gm = inner.get("gamma", "")
            fmt = lambda v: f"{v:.17g}" if v != "" else ""
            fh.write(f"{table.alpha:.17g},{table.c:.17g},{row.query.x:.17g},"
                     f"{table.variant},{table.level},{row.value:.17g},"
                     f"{row.sqrt_value:.17g},{fmt(ry)},{fmt(c3)},{fmt(gm)},"
                     f"{row.quadrature_error:.17g},{int(flat)}\n")


def write_curve_sidecar(table: CurveTable, path) -> None:
    """Plain-text key-value record of the settings behind a curve file."""
    with open(path, "w") as fh:
        fh.write(f"alpha = {table.alpha:.17g}\n")
        fh.write(f"c = {table.c:.17g}\n")
        fh.write(f"variant = {table.variant}\n")
        fh.write(f"level = {table.level}\n")
        fh.write(f"flat_tol = {table.flat_tol:.17g}\n")
        q, o = table.quad, table.opt
        fh.write(f"quadrature.scheme = {q.scheme}\n")
        fh.write(f"quadrature.nodes_1d = {q.nodes_1d}\n")
        fh.write(f"quadrature.nodes_2d = {q.nodes_2d}\n")
        fh.write(f"quadrature.truncation = {q.truncation:.17g}\n")
        fh.write(f"quadrature.target_rel_err = {q.target_rel_err:.17g}\n")
        fh.write(f"optimizer.grid_points = {o.grid_points}\n")
        fh.write(f"optimizer.grid_lo = {o.grid_lo:.17g}\n")
        fh.write(f"optimizer.grid_hi = {o.grid_hi:.17g}\n")
        fh.write(f"optimizer.simplex_tol = {o.simplex_tol:.17g}\n")
        fh.write(f"optimizer.gamma_lo = {o.gamma_lo:.17g}\n")
        fh.write(f"optimizer.gamma_hi = {o.gamma_hi:.17g}\n")
        for err_ix, err in enumerate(table.errors):
            if err:
                fh.write(f"error.point_{err_ix} = {err}\n")
