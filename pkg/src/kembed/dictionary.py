"""Closed-form kernel mean embeddings for supported kernel/measure pairs.

An :class:`Embedding` bundles the single integral ``kp_at(x)`` of a
kernel against a measure with the double integral ``kpp``, tagged with
per-part provenance: ``closed_form`` when an exact expression exists,
``numeric_fallback`` when the value is produced by the quadrature or
Monte Carlo oracle. :func:`embed` dispatches a (kernel, measure) pair
to the right construction and falls back to the oracle for pairs with
no known expression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import oracle
from .errors import InvalidSpecError, UnsupportedPairError
from .kernels import (
    ComposedKernel,
    FbmKernel,
    GaussianKernel,
    Kernel,
    MaternKernel,
    MatrixValuedKernel,
    PeriodicSobolevKernel,
    PowerSeriesKernel,
    ProductKernel,
    SphereSmoothKernel,
    SphereSobolevKernel,
    SumKernel,
    WendlandKernel,
    as_point,
    _check_unit,
)
from .measures import (
    EmpiricalMeasure,
    GaussianMeasure,
    Measure,
    MixtureMeasure,
    PushforwardMeasure,
    ScoreMeasure,
    SphereUniformMeasure,
    UniformBoxMeasure,
)
from .specfun import (
    double_factorial,
    erf,
    erfcx,
    lower_incomplete_gamma_int,
    normal_cdf,
)

__all__ = [
    "Embedding",
    "MaternUniformCoefficients",
    "MaternGaussianShifts",
    "embed",
    "gauss_uniform",
    "gauss_gauss",
    "gauss_cross_kpq",
    "matern_uniform_general",
    "matern_uniform_special",
    "matern_gauss_kp",
    "wendland0_uniform",
    "wendland_gauss_kp",
    "fbm_uniform",
    "powerseries_uniform",
    "powerseries_gauss",
    "sphere_embed",
    "periodic_sobolev_embed",
    "empirical_embed",
]

CLOSED_FORM = "closed_form"
NUMERIC_FALLBACK = "numeric_fallback"

# Exponent size above which the exp * Phi products of the Matern-Gauss
# embeddings switch to the scaled-complementary-erf evaluation.
_STABLE_EXPONENT = 40.0


@dataclass(frozen=True, eq=False)
class Embedding:
    """A kernel mean embedding: x -> integral K(x, y) dP(y), plus the
    double integral of K against P in both arguments."""

    kp_fn: Callable
    kpp: object
    pair_id: str
    kp_provenance: str = CLOSED_FORM
    kpp_provenance: str = CLOSED_FORM
    kernel: Kernel | None = None
    measure: Measure | None = None
    kpp_stderr: float = 0.0

    def kp_at(self, x):
        """Evaluate the mean embedding at a point."""
        return self.kp_fn(x)

    @property
    def provenance(self) -> str:
        if self.kp_provenance == CLOSED_FORM and self.kpp_provenance == CLOSED_FORM:
            return CLOSED_FORM
        return NUMERIC_FALLBACK


# --- Gaussian kernel ------------------------------------------------------


def gauss_uniform(lengthscales, lows, highs) -> Embedding:
    """Gaussian kernel with diagonal lengthscales against a uniform box.

    Both integrals factorize over dimensions into erf differences.
    """
    kernel = GaussianKernel(lengthscales=tuple(np.atleast_1d(lengthscales)))
    measure = UniformBoxMeasure(tuple(np.atleast_1d(lows)), tuple(np.atleast_1d(highs)))
    if kernel.dim != measure.dim:
        raise InvalidSpecError("kernel and box dimensions differ")
    ls = np.asarray(kernel.lengthscales)
    a = np.asarray(measure.lows)
    b = np.asarray(measure.highs)
    r = b - a

    def kp(x):
        x = as_point(x, measure.dim)
        total = 1.0
        for i in range(x.size):
            s = ls[i] * math.sqrt(2.0)
            total *= (
                math.sqrt(math.pi / 2.0)
                * (ls[i] / r[i])
                * (erf((b[i] - x[i]) / s) - erf((a[i] - x[i]) / s))
            )
        return total

    kpp = 1.0
    for i in range(measure.dim):
        s = ls[i] * math.sqrt(2.0)
        # expm1 keeps the bracket accurate when r << l
        bracket = ls[i] * math.sqrt(2.0 / math.pi) * math.expm1(
            -r[i] ** 2 / (2.0 * ls[i] ** 2)
        ) + r[i] * erf(r[i] / s)
        kpp *= math.sqrt(2.0 * math.pi) * (ls[i] / r[i] ** 2) * bracket

    return Embedding(
        kp_fn=kp,
        kpp=kpp,
        pair_id="gaussian/uniform_box",
        kernel=kernel,
        measure=measure,
    )


def gauss_gauss(lam, mean, cov) -> Embedding:
    """Gaussian kernel (lengthscale matrix Lambda) against N(mean, cov).

    kp(x) = det(I + Sigma Lambda^{-1})^{-1/2}
            exp(-1/2 (x-mu)^T (Lambda+Sigma)^{-1} (x-mu)),
    kpp = sqrt(det Lambda / det(Lambda + 2 Sigma)).
    """
    lam = np.asarray(lam, dtype=float)
    if lam.ndim == 1:
        kernel = GaussianKernel(lengthscales=tuple(np.sqrt(lam)))
    else:
        kernel = GaussianKernel(matrix=lam)
    measure = GaussianMeasure(tuple(np.atleast_1d(mean)), cov)
    if kernel.dim != measure.dim:
        raise InvalidSpecError("kernel and measure dimensions differ")
    L = kernel.lam()
    S = measure.cov
    mu = np.asarray(measure.mean)
    d = measure.dim

    if kernel.diagonal and measure.diagonal:
        l2 = np.asarray(kernel.lengthscales) ** 2
        s2 = np.asarray(measure.cov_diag)

        def kp(x):
            x = as_point(x, d)
            z = (x - mu) ** 2 / (l2 + s2)
            return float(
                np.prod(np.sqrt(l2 / (l2 + s2))) * math.exp(-0.5 * float(np.sum(z)))
            )

        kpp = float(np.prod(np.asarray(kernel.lengthscales) / np.sqrt(l2 + 2.0 * s2)))
    else:
        ls_sum = L + S
        sign, logdet_ls = np.linalg.slogdet(ls_sum)
        _, logdet_l = np.linalg.slogdet(L)
        pref = math.exp(0.5 * (logdet_l - logdet_ls))

        def kp(x):
            x = as_point(x, d)
            v = x - mu
            return pref * math.exp(-0.5 * float(v @ np.linalg.solve(ls_sum, v)))

        _, logdet_l2s = np.linalg.slogdet(L + 2.0 * S)
        kpp = math.exp(0.5 * (logdet_l - logdet_l2s))

    return Embedding(
        kp_fn=kp,
        kpp=kpp,
        pair_id="gaussian/gaussian",
        kernel=kernel,
        measure=measure,
    )


def gauss_cross_kpq(lam, mean_p, cov_p, mean_q, cov_q) -> float:
    """Double integral of the Gaussian kernel against two Gaussian
    measures, one in each argument:
    sqrt(det Lambda / det(Lambda + Sigma_P + Sigma_Q))
    * exp(-1/2 delta^T (Lambda + Sigma_P + Sigma_Q)^{-1} delta)."""
    lam = np.asarray(lam, dtype=float)
    if lam.ndim == 1:
        lam = np.diag(lam)
    mp = np.atleast_1d(np.asarray(mean_p, dtype=float))
    mq = np.atleast_1d(np.asarray(mean_q, dtype=float))
    sp = _cov_matrix(cov_p, mp.size)
    sq = _cov_matrix(cov_q, mq.size)
    if not (lam.shape[0] == mp.size == mq.size):
        raise InvalidSpecError("dimension mismatch between kernel and measures")
    total = lam + sp + sq
    _, logdet_l = np.linalg.slogdet(lam)
    _, logdet_t = np.linalg.slogdet(total)
    delta = mp - mq
    return math.exp(0.5 * (logdet_l - logdet_t)) * math.exp(
        -0.5 * float(delta @ np.linalg.solve(total, delta))
    )


def _cov_matrix(cov, d: int) -> np.ndarray:
    c = np.asarray(cov, dtype=float)
    if c.ndim == 0:
        return np.eye(d) * float(c)
    if c.ndim == 1:
        if c.size != d:
            raise InvalidSpecError("diagonal covariance length mismatch")
        return np.diag(c)
    if c.shape != (d, d):
        raise InvalidSpecError("covariance shape mismatch")
    return c


# --- Matern kernels, uniform measure --------------------------------------


@dataclass(frozen=True)
class MaternUniformCoefficients:
    """Shared quantities of the half-integer Matern embeddings on [a, b]:
    alpha = l / sqrt(2n+1), rho = (b - a) / alpha, the polynomial
    coefficients c_m of Q(z) = e^{-z} sum_m c_m z^m, and the incomplete
    gamma values gamma_{m+1} at rho."""

    n: int
    lengthscale: float
    a: float
    b: float
    alpha: float = field(init=False)
    rho: float = field(init=False)
    c: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        if self.n not in (0, 1, 2, 3):
            raise InvalidSpecError(f"n must be in 0..3, got {self.n}")
        if self.lengthscale <= 0:
            raise InvalidSpecError("lengthscale must be positive")
        if not self.b > self.a:
            raise InvalidSpecError("need b > a")
        alpha = self.lengthscale / math.sqrt(2 * self.n + 1)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "rho", (self.b - self.a) / alpha)
        c = []
        for m in range(self.n + 1):
            s = 0
            for i in range(self.n - m + 1):
                s += math.factorial(self.n + i) // math.factorial(i) * 2 ** (self.n - i)
            c.append(s / math.factorial(m))
        object.__setattr__(self, "c", tuple(float(v) for v in c))

    def d(self, x: float, y: float) -> float:
        return (x - y) / self.alpha

    def q_poly(self, z: float) -> float:
        return math.exp(-z) * sum(cm * z**m for m, cm in enumerate(self.c))

    def gammas(self) -> tuple[float, ...]:
        return tuple(
            lower_incomplete_gamma_int(m, self.rho) for m in range(self.n + 1)
        )


def matern_uniform_general(n: int, lengthscale: float, a: float, b: float) -> Embedding:
    """Half-integer Matern kernel against the uniform measure on [a, b],
    via the general formulas in Q and the incomplete gamma function."""
    co = MaternUniformCoefficients(n, lengthscale, a, b)
    kernel = MaternKernel(nu=n + 0.5, lengthscale=lengthscale)
    measure = UniformBoxMeasure((a,), (b,))
    r = b - a
    lead = math.factorial(n) / math.factorial(2 * n)

    def kp(x):
        x = _scalar_in_box(x, a, b)
        return (
            (co.alpha / r)
            * lead
            * (2.0 * co.c[0] - co.q_poly((x - a) / co.alpha) - co.q_poly((b - x) / co.alpha))
        )

    gam = co.gammas()
    bracket = co.rho * co.c[0] - sum(cm * g for cm, g in zip(co.c, gam))
    kpp = 2.0 * co.alpha**2 / r**2 * lead * bracket

    return Embedding(
        kp_fn=kp,
        kpp=kpp,
        pair_id="matern/uniform_box",
        kernel=kernel,
        measure=measure,
    )


def matern_uniform_special(n: int, lengthscale: float, a: float, b: float) -> Embedding:
    """The four explicit Matern/uniform embeddings, used as a mutual
    cross-check of the general formulas."""
    co = MaternUniformCoefficients(n, lengthscale, a, b)
    kernel = MaternKernel(nu=n + 0.5, lengthscale=lengthscale)
    measure = UniformBoxMeasure((a,), (b,))
    rho = co.rho

    def kp(x):
        x = _scalar_in_box(x, a, b)
        u = co.d(a, x)  # (a - x) / alpha <= 0
        v = co.d(x, b)  # (x - b) / alpha <= 0
        if n == 0:
            return (2.0 - math.exp(u) - math.exp(v)) / rho
        if n == 1:
            return (
                4.0 - math.exp(v) * (2.0 - v) - math.exp(u) * (2.0 - u)
            ) / rho
        if n == 2:
            return (
                16.0
                - math.exp(v) * (8.0 - 5.0 * v + v * v)
                - math.exp(u) * (8.0 - 5.0 * u + u * u)
            ) / (3.0 * rho)
        return (
            96.0
            - math.exp(v) * (48.0 - 33.0 * v + 9.0 * v * v - v**3)
            - math.exp(u) * (48.0 - 33.0 * u + 9.0 * u * u - u**3)
        ) / (15.0 * rho)

    e = math.exp(-rho)
    if n == 0:
        kpp = 2.0 / rho**2 * (rho - 1.0 + e)
    elif n == 1:
        kpp = 2.0 / rho**2 * (2.0 * rho - 3.0 + e * (rho + 3.0))
    elif n == 2:
        kpp = 2.0 / (3.0 * rho**2) * (8.0 * rho - 15.0 + e * (rho**2 + 7.0 * rho + 15.0))
    else:
        kpp = (
            2.0
            / (15.0 * rho**2)
            * (3.0 * (16.0 * rho - 35.0) + e * (rho**3 + 12.0 * rho**2 + 57.0 * rho + 105.0))
        )

    return Embedding(
        kp_fn=kp,
        kpp=kpp,
        pair_id="matern/uniform_box",
        kernel=kernel,
        measure=measure,
    )


# --- Matern kernels, Gaussian measure --------------------------------------


@dataclass(frozen=True)
class MaternGaussianShifts:
    """The shifted means mu -+ sqrt(2n+1) sigma^2 / l entering the
    Matern-Gaussian embeddings, and s = sqrt(2) sigma."""

    mu: float
    sigma: float
    lengthscale: float

    @property
    def s(self) -> float:
        return math.sqrt(2.0) * self.sigma

    def shift(self, n: int, sign: float) -> float:
        root = math.sqrt(2 * n + 1)
        return self.mu + sign * root * self.sigma**2 / self.lengthscale

    @property
    def mu1(self):
        return self.shift(1, -1.0)

    @property
    def mu2(self):
        return self.shift(1, +1.0)

    @property
    def mu3(self):
        return self.shift(2, -1.0)

    @property
    def mu4(self):
        return self.shift(2, +1.0)


def _matern_gauss_term(
    n: int, beta: float, sigma: float, x: float, mu: float, sign: float
) -> float:
    """One of the two exp * Phi branches of the Matern-Gauss embedding.

    sign = +1 is the branch whose Gaussian tail argument is
    (mu - beta sigma^2 - x) / sigma; sign = -1 mirrors it. When the
    naive exponent exceeds the stability threshold the product is
    rewritten with the scaled complementary error function, whose
    combined exponent collapses to -(x - mu)^2 / (2 sigma^2) exactly.
    """
    if sign > 0:
        m = (mu - beta * sigma**2) - x
    else:
        m = x - (mu + beta * sigma**2)
    q = m / sigma
    if n == 0:
        p_coef, r_coef = 1.0, 0.0
    elif n == 1:
        p_coef, r_coef = 1.0 + beta * m, beta
    else:
        b23 = beta**2 / 3.0
        p_coef = 1.0 + beta * m + b23 * (m * m + sigma**2)
        r_coef = beta + b23 * m
    exponent = 0.5 * beta**2 * sigma**2 + sign * beta * (x - mu)
    if exponent > _STABLE_EXPONENT:
        # here q < 0 necessarily (a positive q forces a negative exponent)
        collapsed = math.exp(-((x - mu) ** 2) / (2.0 * sigma**2))
        return collapsed * (
            p_coef * 0.5 * erfcx(-q / math.sqrt(2.0))
            + r_coef * sigma / math.sqrt(2.0 * math.pi)
        )
    phi = math.exp(-0.5 * q * q) / math.sqrt(2.0 * math.pi)
    return math.exp(exponent) * (p_coef * normal_cdf(q) + r_coef * sigma * phi)


def matern_gauss_kp(
    nu: float,
    lengthscale: float,
    mu: float,
    sigma: float,
    budget: int | None = None,
    seed: int = 0,
) -> Embedding:
    """Matern kernel (nu in {1/2, 3/2, 5/2}) against N(mu, sigma^2):
    closed-form mean embedding; the double integral has no known
    expression and is estimated by panel quadrature."""
    n = nu - 0.5
    if abs(n - round(n)) > 1e-12 or round(n) not in (0, 1, 2):
        raise InvalidSpecError(f"nu must be 1/2, 3/2 or 5/2, got {nu}")
    n = int(round(n))
    if sigma <= 0 or lengthscale <= 0:
        raise InvalidSpecError("sigma and lengthscale must be positive")
    kernel = MaternKernel(nu=nu, lengthscale=lengthscale)
    measure = GaussianMeasure((mu,), sigma**2)
    beta = math.sqrt(2 * n + 1) / lengthscale

    def kp(x):
        x = float(as_point(x, 1)[0])
        return _matern_gauss_term(n, beta, sigma, x, mu, +1.0) + _matern_gauss_term(
            n, beta, sigma, x, mu, -1.0
        )

    est = oracle.estimate_kpp(kernel, measure, budget=budget, seed=seed)
    return Embedding(
        kp_fn=kp,
        kpp=est.value,
        pair_id="matern/gaussian",
        kpp_provenance=NUMERIC_FALLBACK,
        kernel=kernel,
        measure=measure,
        kpp_stderr=est.stderr,
    )


# --- Wendland kernels ------------------------------------------------------


def wendland0_uniform(lengthscale: float, a: float, b: float) -> Embedding:
    """Order-0 Wendland kernel against the uniform measure on [a, b]."""
    if lengthscale <= 0:
        raise InvalidSpecError("lengthscale must be positive")
    if not b > a:
        raise InvalidSpecError("need b > a")
    kernel = WendlandKernel(order=0, lengthscale=lengthscale)
    measure = UniformBoxMeasure((a,), (b,))
    ls = lengthscale
    r = b - a

    def kp(x):
        x = _scalar_in_box(x, a, b)
        if b >= x + ls and a + ls < x:
            return ls / r
        if b >= x + ls and a + ls >= x:
            return (2 * x * (a + ls) + ls**2 - a**2 - 2 * a * ls - x**2) / (2 * r * ls)
        if b < x + ls and a + ls < x:
            return (2 * b * (ls + x) + ls**2 - b**2 - 2 * ls * x - x**2) / (2 * r * ls)
        return (
            2 * (b * ls + b * x + a * x) - a**2 - b**2 - 2 * (a * ls + x**2)
        ) / (2 * r * ls)

    # The printed branch conditions for the double integral overlap: the
    # short-support case l < r captures everything its sibling branch
    # r > l would, leaving that branch's formula (valid for wide
    # support, r < l) unreachable as written. Ordering the branches by
    # the partition {r = 2l, l < r, r < l, r = l} applies each formula
    # on the region where it reproduces direct integration of the
    # kernel; the r = 2l and r = l cases agree with their neighbours.
    if r == 2.0 * ls:
        kpp = 5.0 / 12.0
    elif ls < r:
        kpp = ls * (3.0 * r - ls) / (3.0 * r**2)
    elif r < ls:
        kpp = 1.0 - r / (3.0 * ls)
    else:
        kpp = ls * (9.0 * r - 2.0 * ls) / (3.0 * r**2) + r / (3.0 * ls) - 2.0

    return Embedding(
        kp_fn=kp,
        kpp=kpp,
        pair_id="wendland/uniform_box",
        kernel=kernel,
        measure=measure,
    )


def wendland_gauss_kp(
    order: int,
    lengthscale: float,
    sigma: float,
    mu: float = 0.0,
    budget: int | None = None,
    seed: int = 0,
) -> Embedding:
    """Wendland kernel of order 0 or 2 against N(mu, sigma^2):
    closed-form mean embedding (the kernel is translation invariant, so
    a non-centered measure reduces to the centered expressions via
    x -> x - mu); the double integral is estimated by panel quadrature.
    """
    if order not in (0, 2):
        raise InvalidSpecError(f"order must be 0 or 2, got {order}")
    if sigma <= 0 or lengthscale <= 0:
        raise InvalidSpecError("sigma and lengthscale must be positive")
    kernel = WendlandKernel(order=order, lengthscale=lengthscale)
    measure = GaussianMeasure((mu,), sigma**2)
    ls = lengthscale
    s = math.sqrt(2.0) * sigma
    s2 = sigma**2

    def phi(t: float) -> float:
        return math.exp(-t * t / (2.0 * s2))

    def kp(x):
        x = float(as_point(x, 1)[0]) - mu
        if order == 0:
            return (
                (ls - x) * erf((ls - x) / s)
                + (ls + x) * erf((ls + x) / s)
                - 2.0 * x * erf(x / s)
                + s / math.sqrt(math.pi) * (phi(ls - x) + phi(ls + x) - 2.0 * phi(x))
            ) / (2.0 * ls)
        x2 = x * x
        gauss_part = (
            (phi(x - ls) + phi(x + ls)) * (ls**3 - ls * (7.0 * s2 + 5.0 * x2))
            + 16.0 * ls * (2.0 * s2 + x2) * phi(x)
            - (phi(x + ls) - phi(x - ls)) * (ls**2 * x + 3.0 * x * (5.0 * s2 + x2))
        )
        erf_minus = (
            ls**4
            - 6.0 * ls**2 * (s2 + x2)
            + 8.0 * ls * (3.0 * s2 * x + x**3)
            - 3.0 * (3.0 * s2**2 + 6.0 * s2 * x2 + x2 * x2)
        )
        erf_plus = (
            ls**4
            - 6.0 * ls**2 * (s2 + x2)
            - 8.0 * ls * (3.0 * s2 * x + x**3)
            - 3.0 * (3.0 * s2**2 + 6.0 * s2 * x2 + x2 * x2)
        )
        return (
            s / math.sqrt(math.pi) * gauss_part
            + erf_minus * erf((ls - x) / s)
            + erf_plus * erf((ls + x) / s)
            + 16.0 * ls * x * (3.0 * s2 + x2) * erf(x / s)
        ) / (2.0 * ls**4)

    est = oracle.estimate_kpp(kernel, measure, budget=budget, seed=seed)
    return Embedding(
        kp_fn=kp,
        kpp=est.value,
        pair_id="wendland/gaussian",
        kpp_provenance=NUMERIC_FALLBACK,
        kernel=kernel,
        measure=measure,
        kpp_stderr=est.stderr,
    )


# --- Fractional Brownian motion --------------------------------------------


def fbm_uniform(hurst: float, a: float, b: float) -> Embedding:
    """Fractional Brownian motion kernel against the uniform measure on
    [a, b] with 0 <= a < b."""
    if not 0.0 < hurst < 1.0:
        raise InvalidSpecError(f"hurst must lie in (0, 1), got {hurst}")
    if not (0.0 <= a < b):
        raise InvalidSpecError(f"need 0 <= a < b, got [{a}, {b}]")
    kernel = FbmKernel(hurst=hurst, domain=(a, b))
    measure = UniformBoxMeasure((a,), (b,))
    h = 2.0 * hurst + 1.0
    r = b - a

    def kp(x):
        x = _scalar_in_box(x, a, b)
        return (b**h - a**h - (b - x) ** h - (x - a) ** h) / (2.0 * h * r) + x ** (
            h - 1.0
        ) / 2.0

    kpp = ((h + 1.0) * (b**h - a**h) - r**h) / (h * (h + 1.0) * r)

    return Embedding(
        kp_fn=kp,
        kpp=kpp,
        pair_id="fbm/uniform_box",
        kernel=kernel,
        measure=measure,
    )


# --- Power series kernels ---------------------------------------------------


def powerseries_uniform(terms, lows, highs) -> Embedding:
    """Power series kernel against a uniform box: per-dimension moment
    factors (b^{alpha+1} - a^{alpha+1}) / ((alpha+1)(b - a))."""
    kernel = terms if isinstance(terms, PowerSeriesKernel) else PowerSeriesKernel(terms)
    measure = UniformBoxMeasure(tuple(np.atleast_1d(lows)), tuple(np.atleast_1d(highs)))
    if kernel.dim != measure.dim:
        raise InvalidSpecError("kernel and box dimensions differ")
    a = np.asarray(measure.lows)
    b = np.asarray(measure.highs)

    factors = []
    for alpha, c in kernel.terms:
        f = 1.0
        for i, ai in enumerate(alpha):
            f *= (b[i] ** (ai + 1) - a[i] ** (ai + 1)) / ((ai + 1) * (b[i] - a[i]))
        factors.append((alpha, c, f))

    def kp(x):
        x = as_point(x, measure.dim)
        total = 0.0
        for alpha, c, f in factors:
            total += c * float(np.prod(x ** np.asarray(alpha))) * f
        return total

    kpp = sum(c * f * f for _, c, f in factors)

    return Embedding(
        kp_fn=kp,
        kpp=kpp,
        pair_id="power_series/uniform_box",
        kernel=kernel,
        measure=measure,
    )


def powerseries_gauss(terms, sigmas) -> Embedding:
    """Power series kernel against a centered diagonal Gaussian: only
    even multi-indices contribute, with moment factors
    sigma^alpha (alpha - 1)!!."""
    kernel = terms if isinstance(terms, PowerSeriesKernel) else PowerSeriesKernel(terms)
    sig = np.atleast_1d(np.asarray(sigmas, dtype=float))
    if np.any(sig <= 0):
        raise InvalidSpecError("sigmas must be positive")
    if kernel.dim != sig.size:
        raise InvalidSpecError("kernel and measure dimensions differ")
    measure = GaussianMeasure(tuple(0.0 for _ in sig), sig**2)

    factors = []
    for alpha, c in kernel.terms:
        if any(ai % 2 for ai in alpha):
            continue
        f = 1.0
        for i, ai in enumerate(alpha):
            f *= sig[i] ** ai * double_factorial(ai - 1)
        factors.append((alpha, c, f))

    def kp(x):
        x = as_point(x, measure.dim)
        total = 0.0
        for alpha, c, f in factors:
            total += c * float(np.prod(x ** np.asarray(alpha))) * f
        return total

    kpp = sum(c * f * f for _, c, f in factors)

    return Embedding(
        kp_fn=kp,
        kpp=kpp,
        pair_id="power_series/gaussian",
        kernel=kernel,
        measure=measure,
    )


# --- Sphere and periodic kernels --------------------------------------------


def sphere_embed(kind: str) -> Embedding:
    """Stationary kernels on the unit sphere S^2 under the uniform
    spherical measure have constant embeddings: 2/3 for the Sobolev-3/2
    kernel 2 - ||x - y||, and 1 - exp(-48) for the smooth kernel."""
    if kind == "sobolev32":
        kernel: Kernel = SphereSobolevKernel()
        const = 2.0 / 3.0
    elif kind == "smooth":
        kernel = SphereSmoothKernel()
        const = 1.0 - math.exp(-48.0)
    else:
        raise InvalidSpecError(f"kind must be 'sobolev32' or 'smooth', got {kind!r}")
    measure = SphereUniformMeasure(2)

    def kp(x):
        _check_unit(as_point(x, 3))
        return const

    return Embedding(
        kp_fn=kp,
        kpp=const,
        pair_id=f"{kernel.family}/sphere_uniform",
        kernel=kernel,
        measure=measure,
    )


def periodic_sobolev_embed(r: int, on_circle: bool = False) -> Embedding:
    """Periodic Sobolev kernel of order 2r under the uniform measure on
    [0, 1] (or the circle S^1): every Fourier term integrates to zero,
    so both embeddings equal 1."""
    kernel = PeriodicSobolevKernel(r=r)
    measure: Measure
    if on_circle:
        measure = SphereUniformMeasure(1)

        def kp(x):
            _check_unit(as_point(x, 2))
            return 1.0

    else:
        measure = UniformBoxMeasure((0.0,), (1.0,))

        def kp(x):
            _scalar_in_box(x, 0.0, 1.0)
            return 1.0

    return Embedding(
        kp_fn=kp,
        kpp=1.0,
        pair_id=f"periodic_sobolev/{measure.family}",
        kernel=kernel,
        measure=measure,
    )


# --- Empirical measures ------------------------------------------------------


def empirical_embed(kernel: Kernel, measure: EmpiricalMeasure) -> Embedding:
    """Embedding against a weighted point set: finite sums, exact."""
    pts = measure.points
    w = np.asarray(measure.weights)

    def kp(x):
        return float(np.dot(w, kernel.batch(x, pts)))

    kpp = 0.0
    for i in range(pts.shape[0]):
        kpp += w[i] * float(np.dot(w, kernel.batch(pts[i], pts)))

    return Embedding(
        kp_fn=kp,
        kpp=kpp,
        pair_id=f"{kernel.family}/empirical",
        kernel=kernel,
        measure=measure,
    )


# --- generic fallback and dispatch ------------------------------------------


def _scalar_in_box(x, a: float, b: float) -> float:
    v = float(as_point(x, 1)[0])
    if not a <= v <= b:
        raise InvalidSpecError(
            f"the embedding is defined for x in [{a}, {b}], got {v}"
        )
    return v


def numeric_embedding(
    kernel: Kernel, measure: Measure, budget: int | None = None, seed: int = 0
) -> Embedding:
    """Oracle-backed embedding for pairs without a closed form."""
    est = oracle.estimate_kpp(kernel, measure, budget=budget, seed=seed)

    def kp(x):
        return oracle.estimate_kp(kernel, measure, x, budget=budget, seed=seed).value

    return Embedding(
        kp_fn=kp,
        kpp=est.value,
        pair_id=f"{kernel.family}/{measure.family}",
        kp_provenance=NUMERIC_FALLBACK,
        kpp_provenance=NUMERIC_FALLBACK,
        kernel=kernel,
        measure=measure,
        kpp_stderr=est.stderr,
    )


def embed(
    kernel: Kernel, measure: Measure, budget: int | None = None, seed: int = 0
) -> Embedding:
    """Embedding for a kernel/measure pair: closed form when one is
    known, otherwise an oracle-backed numeric fallback with the given
    budget and seed."""
    if not isinstance(kernel, Kernel):
        raise InvalidSpecError(f"not a kernel: {kernel!r}")
    if not isinstance(measure, Measure):
        raise InvalidSpecError(f"not a measure: {measure!r}")
    if kernel.dim is not None and kernel.dim != measure.dim:
        raise InvalidSpecError(
            f"kernel dimension {kernel.dim} does not match measure dimension "
            f"{measure.dim}"
        )

    from . import combinators, stein

    if isinstance(kernel, stein.SteinKernel):
        return stein.stein_embed(kernel)
    if isinstance(measure, ScoreMeasure):
        raise UnsupportedPairError(
            "score-only measures pair only with Stein kernels"
        )
    if isinstance(kernel, MatrixValuedKernel):
        inner = embed(kernel.base, measure, budget=budget, seed=seed)
        return combinators.matrix_valued_embed(inner, kernel.matrix)
    if isinstance(kernel, SumKernel):
        parts = [embed(c, measure, budget=budget, seed=seed) for c in kernel.children]
        return combinators.mixture_embed(
            [parts], [1.0], kernel.weights, budget=budget, seed=seed
        )
    if isinstance(measure, MixtureMeasure):
        children = (
            kernel.children if isinstance(kernel, SumKernel) else (kernel,)
        )
        gammas = kernel.weights if isinstance(kernel, SumKernel) else (1.0,)
        parts = [
            [embed(k, comp, budget=budget, seed=seed) for k in children]
            for comp in measure.components
        ]
        return combinators.mixture_embed(
            parts, measure.weights, gammas, budget=budget, seed=seed
        )
    if isinstance(measure, PushforwardMeasure):
        recognized = _recognize_pushforward(measure)
        if recognized is not None:
            return embed(kernel, recognized, budget=budget, seed=seed)
    if isinstance(kernel, ComposedKernel):
        image = PushforwardMeasure(measure, kernel.map)
        inner = embed(kernel.base, image, budget=budget, seed=seed)
        return combinators.pushforward_embed(inner, kernel.map)
    if isinstance(kernel, ProductKernel):
        factors = combinators.split_product_measure(measure, kernel.block_dims)
        if factors is not None:
            parts = [
                embed(k, m, budget=budget, seed=seed)
                for k, m in zip(kernel.children, factors)
            ]
            return combinators.product_embed(parts, kernel.block_dims)
    if isinstance(measure, EmpiricalMeasure):
        return empirical_embed(kernel, measure)

    pair = _closed_form_pair(kernel, measure, budget, seed)
    if pair is not None:
        return pair
    return numeric_embedding(kernel, measure, budget=budget, seed=seed)


def _closed_form_pair(
    kernel: Kernel, measure: Measure, budget: int | None, seed: int
) -> Embedding | None:
    if isinstance(kernel, GaussianKernel) and isinstance(measure, UniformBoxMeasure):
        if kernel.diagonal:
            return gauss_uniform(kernel.lengthscales, measure.lows, measure.highs)
        return None  # no known expression for full lengthscale matrices
    if isinstance(kernel, GaussianKernel) and isinstance(measure, GaussianMeasure):
        lam = (
            np.asarray(kernel.lengthscales) ** 2 if kernel.diagonal else kernel.matrix
        )
        cov = np.asarray(measure.cov_diag) if measure.diagonal else measure.cov
        return gauss_gauss(lam, measure.mean, cov)
    if isinstance(kernel, MaternKernel) and isinstance(measure, UniformBoxMeasure):
        if measure.dim == 1:
            return matern_uniform_general(
                kernel.n, kernel.lengthscale, measure.lows[0], measure.highs[0]
            )
        return None
    if isinstance(kernel, MaternKernel) and isinstance(measure, GaussianMeasure):
        if measure.dim == 1 and kernel.n <= 2:
            return matern_gauss_kp(
                kernel.nu,
                kernel.lengthscale,
                measure.mean[0],
                float(measure.stds()[0]),
                budget=budget,
                seed=seed,
            )
        return None
    if isinstance(kernel, WendlandKernel) and isinstance(measure, UniformBoxMeasure):
        if measure.dim == 1 and kernel.order == 0:
            return wendland0_uniform(
                kernel.lengthscale, measure.lows[0], measure.highs[0]
            )
        return None
    if isinstance(kernel, WendlandKernel) and isinstance(measure, GaussianMeasure):
        if measure.dim == 1 and kernel.order in (0, 2):
            return wendland_gauss_kp(
                kernel.order,
                kernel.lengthscale,
                float(measure.stds()[0]),
                mu=measure.mean[0],
                budget=budget,
                seed=seed,
            )
        return None
    if isinstance(kernel, FbmKernel):
        if isinstance(measure, UniformBoxMeasure) and measure.dim == 1:
            a, b = measure.lows[0], measure.highs[0]
            if a < 0:
                raise InvalidSpecError("fbm requires a box within [0, inf)")
            if kernel.domain is not None and (
                a < kernel.domain[0] or b > kernel.domain[1]
            ):
                raise InvalidSpecError("box exceeds the kernel's declared domain")
            return fbm_uniform(kernel.hurst, a, b)
        raise UnsupportedPairError("fbm kernels pair with uniform boxes only")
    if isinstance(kernel, PowerSeriesKernel):
        if isinstance(measure, UniformBoxMeasure):
            return powerseries_uniform(kernel, measure.lows, measure.highs)
        if (
            isinstance(measure, GaussianMeasure)
            and measure.diagonal
            and all(m == 0.0 for m in measure.mean)
        ):
            return powerseries_gauss(kernel, np.sqrt(np.asarray(measure.cov_diag)))
        return None
    if isinstance(kernel, (SphereSobolevKernel, SphereSmoothKernel)):
        if isinstance(measure, SphereUniformMeasure) and measure.d == 2:
            kind = "sobolev32" if isinstance(kernel, SphereSobolevKernel) else "smooth"
            return sphere_embed(kind)
        raise UnsupportedPairError(
            "sphere kernels pair with the uniform measure on S^2 only"
        )
    if isinstance(kernel, PeriodicSobolevKernel):
        if isinstance(measure, SphereUniformMeasure) and measure.d == 1:
            return periodic_sobolev_embed(kernel.r, on_circle=True)
        if (
            isinstance(measure, UniformBoxMeasure)
            and measure.dim == 1
            and measure.lows[0] == 0.0
            and measure.highs[0] == 1.0
        ):
            return periodic_sobolev_embed(kernel.r)
        if isinstance(measure, UniformBoxMeasure) and (
            measure.lows[0] < 0.0 or measure.highs[0] > 1.0
        ):
            raise InvalidSpecError("periodic Sobolev kernels live on [0, 1]")
        return None
    return None


def _recognize_pushforward(measure: PushforwardMeasure) -> Measure | None:
    """Rewrite the image of a simple measure under a recognizable map
    as an ordinary measure, enabling closed-form dispatch."""
    from .kernels import AffineMapSpec

    base = measure.base
    if isinstance(base, PushforwardMeasure):
        inner = _recognize_pushforward(base)
        if inner is None:
            return None
        base = inner
    m = measure.map
    if isinstance(m, AffineMapSpec):
        s = np.asarray(m.scale)
        t = np.asarray(m.shift)
        if isinstance(base, UniformBoxMeasure):
            lo = s * np.asarray(base.lows) + t
            hi = s * np.asarray(base.highs) + t
            return UniformBoxMeasure(
                tuple(np.minimum(lo, hi)), tuple(np.maximum(lo, hi))
            )
        if isinstance(base, GaussianMeasure):
            mean = s * np.asarray(base.mean) + t
            if base.diagonal:
                cov = np.asarray(base.cov_diag) * np.broadcast_to(s, mean.shape) ** 2
                return GaussianMeasure(tuple(mean), cov)
            sv = np.broadcast_to(s, mean.shape)
            return GaussianMeasure(tuple(mean), np.asarray(base.cov) * np.outer(sv, sv))
        return None
    if m.name == "normal_icdf" and isinstance(base, UniformBoxMeasure):
        if all(v == 0.0 for v in base.lows) and all(v == 1.0 for v in base.highs):
            return GaussianMeasure(
                tuple(0.0 for _ in range(base.dim)), np.ones(base.dim)
            )
    return None
