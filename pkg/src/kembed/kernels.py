"""Kernel families and their pointwise evaluation.

Every kernel is a small frozen description object with an ``__call__``
for scalar pairs and a vectorized ``batch`` used by the numerical
oracle. Families with closed-form mean embeddings are matched up with
measures in :mod:`kembed.dictionary`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidSpecError
from .specfun import bernoulli_poly

__all__ = [
    "Kernel",
    "GaussianKernel",
    "MaternKernel",
    "WendlandKernel",
    "FbmKernel",
    "PowerSeriesKernel",
    "SphereSobolevKernel",
    "SphereSmoothKernel",
    "PeriodicSobolevKernel",
    "SumKernel",
    "ProductKernel",
    "MatrixValuedKernel",
    "ComposedKernel",
    "Map",
    "AffineMap",
    "NormalICDFMap",
    "kernel_eval",
    "matern_half_integer",
    "periodic_sobolev_series",
]

_SPHERE_NORM_TOL = 1e-9


def as_point(x, dim: int | None = None) -> np.ndarray:
    """Coerce a scalar or sequence to a 1-d float array, checking length."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise InvalidSpecError(f"points must be scalars or 1-d, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise InvalidSpecError(f"expected a point of dimension {dim}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InvalidSpecError("points must be finite")
    return arr


def as_points(X, dim: int | None = None) -> np.ndarray:
    """Coerce input to an (n, d) array of points."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None] if dim in (None, 1) else arr[None, :]
    if arr.ndim != 2:
        raise InvalidSpecError(f"expected an (n, d) array, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise InvalidSpecError(
            f"expected points of dimension {dim}, got {arr.shape[1]}"
        )
    return arr


class Kernel:
    """Base kernel interface."""

    family: str = "kernel"

    @property
    def dim(self) -> int | None:
        """Input dimension, or None when any dimension is accepted."""
        return None

    def __call__(self, x, y) -> float:
        x = as_point(x, self.dim)
        y = as_point(y, self.dim)
        if x.size != y.size:
            raise InvalidSpecError("x and y must have the same dimension")
        return self._eval(x, y)

    def _eval(self, x: np.ndarray, y: np.ndarray) -> float:
        raise NotImplementedError

    def batch(self, x, Y) -> np.ndarray:
        """K(x, y_i) for rows y_i of Y. Default is a plain loop."""
        x = as_point(x, self.dim)
        Y = as_points(Y, x.size)
        return np.array([self._eval(x, row) for row in Y])

    def gram(self, X) -> np.ndarray:
        """Kernel matrix over rows of X."""
        X = as_points(X, self.dim)
        return np.vstack([self.batch(X[i], X) for i in range(X.shape[0])])


def _norm_diff(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.sqrt(np.sum((x - y) ** 2)))


@dataclass(frozen=True, eq=False)
class GaussianKernel(Kernel):
    """Squared-exponential kernel exp(-1/2 (x-y)^T Lambda^{-1} (x-y)).

    ``lengthscales`` gives a diagonal Lambda = diag(l_i^2); a full SPD
    ``matrix`` Lambda may be supplied instead.
    """

    lengthscales: tuple[float, ...] | None = None
    matrix: np.ndarray | None = None

    family = "gaussian"

    def __post_init__(self):
        if (self.lengthscales is None) == (self.matrix is None):
            raise InvalidSpecError(
                "gaussian kernel needs exactly one of lengthscales or matrix"
            )
        if self.lengthscales is not None:
            ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
            if any(v <= 0 for v in ls):
                raise InvalidSpecError("lengthscales must be positive")
            object.__setattr__(self, "lengthscales", ls)
        else:
            lam = np.asarray(self.matrix, dtype=float)
            if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
                raise InvalidSpecError("matrix must be square")
            if not np.allclose(lam, lam.T, atol=1e-12):
                raise InvalidSpecError("matrix must be symmetric")
            try:
                np.linalg.cholesky(lam)
            except np.linalg.LinAlgError:
                raise InvalidSpecError("matrix must be positive definite") from None
            object.__setattr__(self, "matrix", lam)

    @property
    def diagonal(self) -> bool:
        return self.lengthscales is not None

    @property
    def dim(self) -> int | None:
        if self.lengthscales is not None:
            return len(self.lengthscales)
        return self.matrix.shape[0]

    def lam(self) -> np.ndarray:
        """Lambda as a full matrix."""
        if self.diagonal:
            return np.diag(np.asarray(self.lengthscales) ** 2)
        return self.matrix

    def _eval(self, x, y):
        d = x - y
        if self.diagonal:
            z = d / np.asarray(self.lengthscales)
            return math.exp(-0.5 * float(z @ z))
        return math.exp(-0.5 * float(d @ np.linalg.solve(self.matrix, d)))

    def batch(self, x, Y):
        x = as_point(x, self.dim)
        Y = as_points(Y, x.size)
        D = Y - x
        if self.diagonal:
            Z = D / np.asarray(self.lengthscales)
            return np.exp(-0.5 * np.sum(Z * Z, axis=1))
        S = np.linalg.solve(self.matrix, D.T)
        return np.exp(-0.5 * np.sum(D.T * S, axis=0))


def matern_half_integer(n: int, tau: float) -> float:
    """Half-integer Matern correlation at scaled distance tau, nu = n + 1/2.

    The closed product form
    exp(-sqrt(2n+1) tau) * (n!/(2n)!) * sum_k ((n+k)!/(k!(n-k)!)) (2 sqrt(2n+1) tau)^{n-k}.
    """
    if n < 0 or n != int(n):
        raise InvalidSpecError(f"n must be a nonnegative integer, got {n}")
    n = int(n)
    tau = float(tau)
    c = math.sqrt(2 * n + 1)
    s = 0.0
    for k in range(n + 1):
        coef = math.factorial(n + k) / (math.factorial(k) * math.factorial(n - k))
        s += coef * (2.0 * c * tau) ** (n - k)
    return math.exp(-c * tau) * math.factorial(n) / math.factorial(2 * n) * s


def _matern_explicit(n: int, tau: float) -> float:
    t = float(tau)
    if n == 0:
        return math.exp(-t)
    if n == 1:
        z = math.sqrt(3.0) * t
        return (1.0 + z) * math.exp(-z)
    if n == 2:
        z = math.sqrt(5.0) * t
        return (1.0 + z + z * z / 3.0) * math.exp(-z)
    z = math.sqrt(7.0) * t
    return (1.0 + z + 2.0 * z * z / 5.0 + z ** 3 / 15.0) * math.exp(-z)


def _matern_explicit_vec(n: int, t: np.ndarray) -> np.ndarray:
    if n == 0:
        return np.exp(-t)
    if n == 1:
        z = math.sqrt(3.0) * t
        return (1.0 + z) * np.exp(-z)
    if n == 2:
        z = math.sqrt(5.0) * t
        return (1.0 + z + z * z / 3.0) * np.exp(-z)
    z = math.sqrt(7.0) * t
    return (1.0 + z + 0.4 * z * z + z ** 3 / 15.0) * np.exp(-z)


@dataclass(frozen=True, eq=False)
class MaternKernel(Kernel):
    """Matern kernel at half-integer smoothness nu = n + 1/2, n in {0..3}."""

    nu: float
    lengthscale: float = 1.0

    family = "matern"

    def __post_init__(self):
        n = self.nu - 0.5
        if abs(n - round(n)) > 1e-12 or not 0 <= round(n) <= 3:
            raise InvalidSpecError(
                f"nu must be one of 0.5, 1.5, 2.5, 3.5, got {self.nu}"
            )
        if self.lengthscale <= 0:
            raise InvalidSpecError("lengthscale must be positive")
        object.__setattr__(self, "nu", float(self.nu))
        object.__setattr__(self, "lengthscale", float(self.lengthscale))

    @property
    def n(self) -> int:
        return int(round(self.nu - 0.5))

    def _eval(self, x, y):
        return _matern_explicit(self.n, _norm_diff(x, y) / self.lengthscale)

    def batch(self, x, Y):
        x = as_point(x, self.dim)
        Y = as_points(Y, x.size)
        t = np.sqrt(np.sum((Y - x) ** 2, axis=1)) / self.lengthscale
        return _matern_explicit_vec(self.n, t)


def _wendland(order: int, t):
    base = np.maximum(0.0, 1.0 - t)
    if order == 0:
        return base
    if order == 2:
        return base ** 3 * (3.0 * t + 1.0)
    return base ** 5 * (8.0 * t * t + 5.0 * t + 1.0)


@dataclass(frozen=True, eq=False)
class WendlandKernel(Kernel):
    """Compactly supported Wendland kernel of even order 0, 2 or 4."""

    order: int
    lengthscale: float = 1.0

    family = "wendland"

    def __post_init__(self):
        if self.order not in (0, 2, 4):
            raise InvalidSpecError(f"order must be 0, 2 or 4, got {self.order}")
        if self.lengthscale <= 0:
            raise InvalidSpecError("lengthscale must be positive")
        object.__setattr__(self, "lengthscale", float(self.lengthscale))

    def _eval(self, x, y):
        return float(_wendland(self.order, _norm_diff(x, y) / self.lengthscale))

    def batch(self, x, Y):
        x = as_point(x, self.dim)
        Y = as_points(Y, x.size)
        t = np.sqrt(np.sum((Y - x) ** 2, axis=1)) / self.lengthscale
        return _wendland(self.order, t)


@dataclass(frozen=True, eq=False)
class FbmKernel(Kernel):
    """Fractional Brownian motion covariance on the half line.

    K(x, y) = (|x|^{2H} + |y|^{2H} - |x-y|^{2H}) / 2 for scalar inputs.
    When a ``domain`` [a, b] with 0 <= a < b is declared, evaluation
    outside it is an error.
    """

    hurst: float
    domain: tuple[float, float] | None = None

    family = "fbm"

    def __post_init__(self):
        if not 0.0 < self.hurst < 1.0:
            raise InvalidSpecError(f"hurst must lie in (0, 1), got {self.hurst}")
        object.__setattr__(self, "hurst", float(self.hurst))
        if self.domain is not None:
            a, b = (float(v) for v in self.domain)
            if not (0.0 <= a < b):
                raise InvalidSpecError(
                    f"domain must satisfy 0 <= a < b, got ({a}, {b})"
                )
            object.__setattr__(self, "domain", (a, b))

    @property
    def dim(self):
        return 1

    def _check(self, v: float):
        if self.domain is not None:
            a, b = self.domain
            if not a <= v <= b:
                raise InvalidSpecError(
                    f"input {v} lies outside the declared domain [{a}, {b}]"
                )
        elif v < 0.0:
            raise InvalidSpecError(f"input must be nonnegative, got {v}")

    def _eval(self, x, y):
        xv, yv = float(x[0]), float(y[0])
        self._check(xv)
        self._check(yv)
        h = 2.0 * self.hurst
        return 0.5 * (abs(xv) ** h + abs(yv) ** h - abs(xv - yv) ** h)

    def batch(self, x, Y):
        x = as_point(x, 1)
        Y = as_points(Y, 1)
        self._check(float(x[0]))
        lo, hi = self.domain if self.domain is not None else (0.0, math.inf)
        if np.any(Y < lo) or np.any(Y > hi):
            raise InvalidSpecError("batch input lies outside the declared domain")
        h = 2.0 * self.hurst
        yv = Y[:, 0]
        return 0.5 * (abs(float(x[0])) ** h + np.abs(yv) ** h - np.abs(float(x[0]) - yv) ** h)


@dataclass(frozen=True, eq=False)
class PowerSeriesKernel(Kernel):
    """Separable analytic kernel sum_alpha c_alpha x^alpha y^alpha.

    ``terms`` maps multi-indices (tuples of nonnegative ints) to
    nonnegative coefficients; the stored order is canonical
    (lexicographic) so evaluation order is deterministic.
    """

    terms: tuple[tuple[tuple[int, ...], float], ...]

    family = "power_series"

    def __post_init__(self):
        if isinstance(self.terms, dict):
            items = list(self.terms.items())
        else:
            items = [(tuple(a), float(c)) for a, c in self.terms]
        if not items:
            raise InvalidSpecError("power series needs at least one term")
        d = len(items[0][0])
        canon = []
        seen = set()
        for alpha, c in sorted(items, key=lambda it: tuple(it[0])):
            alpha = tuple(int(v) for v in alpha)
            if len(alpha) != d:
                raise InvalidSpecError("all multi-indices must share a dimension")
            if any(v < 0 for v in alpha):
                raise InvalidSpecError("multi-indices must be nonnegative")
            if alpha in seen:
                raise InvalidSpecError(f"duplicate multi-index {alpha}")
            c = float(c)
            if c < 0:
                raise InvalidSpecError("coefficients must be nonnegative")
            seen.add(alpha)
            canon.append((alpha, c))
        object.__setattr__(self, "terms", tuple(canon))

    @property
    def dim(self):
        return len(self.terms[0][0])

    def _eval(self, x, y):
        total = 0.0
        for alpha, c in self.terms:
            term = c
            for xi, yi, ai in zip(x, y, alpha):
                term *= (xi * yi) ** ai
            total += term
        return total

    def batch(self, x, Y):
        x = as_point(x, self.dim)
        Y = as_points(Y, x.size)
        out = np.zeros(Y.shape[0])
        for alpha, c in self.terms:
            a = np.asarray(alpha, dtype=float)
            out += c * np.prod(x ** a) * np.prod(Y ** a, axis=1)
        return out


def _check_unit(x: np.ndarray) -> np.ndarray:
    nrm = float(np.sqrt(x @ x))
    if abs(nrm - 1.0) > _SPHERE_NORM_TOL:
        raise InvalidSpecError(
            f"sphere kernel inputs must have unit norm within {_SPHERE_NORM_TOL}, "
            f"got norm {nrm}"
        )
    return x / nrm


@dataclass(frozen=True, eq=False)
class SphereSobolevKernel(Kernel):
    """K(x, y) = 2 - ||x - y|| on the unit sphere S^2 in R^3."""

    family = "sphere_sobolev32"

    @property
    def dim(self):
        return 3

    def _eval(self, x, y):
        x = _check_unit(x)
        y = _check_unit(y)
        return 2.0 - _norm_diff(x, y)

    def batch(self, x, Y):
        x = _check_unit(as_point(x, 3))
        Y = as_points(Y, 3)
        return 2.0 - np.sqrt(np.sum((Y - x) ** 2, axis=1))


@dataclass(frozen=True, eq=False)
class SphereSmoothKernel(Kernel):
    """Analytic kernel 48 exp(-12 ||x - y||^2) on the unit sphere S^2."""

    family = "sphere_smooth"

    @property
    def dim(self):
        return 3

    def _eval(self, x, y):
        x = _check_unit(x)
        y = _check_unit(y)
        return 48.0 * math.exp(-12.0 * float(np.sum((x - y) ** 2)))

    def batch(self, x, Y):
        x = _check_unit(as_point(x, 3))
        Y = as_points(Y, 3)
        return 48.0 * np.exp(-12.0 * np.sum((Y - x) ** 2, axis=1))


@dataclass(frozen=True, eq=False)
class PeriodicSobolevKernel(Kernel):
    """Periodic Sobolev kernel on [0, 1] of smoothness 2r, r in {1..6}.

    K(x, y) = 1 + (-1)^{r+1} (2 pi)^{2r} B_{2r}(|x - y|) / (2r)! where
    B_{2r} is the Bernoulli polynomial.
    """

    r: int

    family = "periodic_sobolev"

    def __post_init__(self):
        if self.r not in range(1, 7):
            raise InvalidSpecError(f"r must be an integer in [1, 6], got {self.r}")

    @property
    def dim(self):
        return 1

    def _scale(self) -> float:
        r = self.r
        return (-1.0) ** (r + 1) * (2.0 * math.pi) ** (2 * r) / math.factorial(2 * r)

    def _eval(self, x, y):
        xv, yv = float(x[0]), float(y[0])
        for v in (xv, yv):
            if not 0.0 <= v <= 1.0:
                raise InvalidSpecError(f"inputs must lie in [0, 1], got {v}")
        return 1.0 + self._scale() * bernoulli_poly(2 * self.r, abs(xv - yv))

    def batch(self, x, Y):
        x = as_point(x, 1)
        Y = as_points(Y, 1)
        if not 0.0 <= float(x[0]) <= 1.0 or np.any(Y < 0.0) or np.any(Y > 1.0):
            raise InvalidSpecError("inputs must lie in [0, 1]")
        t = np.abs(Y[:, 0] - float(x[0]))
        vals = np.array([bernoulli_poly(2 * self.r, v) for v in t])
        return 1.0 + self._scale() * vals


def periodic_sobolev_series(r: int, x: float, y: float, n_terms: int) -> float:
    """Truncated Fourier form 1 + 2 sum_k k^{-2r} cos(2 pi k (x - y)).

    Converges to the closed form with error O(n_terms^{-(2r-1)}).
    """
    if n_terms < 1:
        raise InvalidSpecError(f"n_terms must be >= 1, got {n_terms}")
    if r not in range(1, 7):
        raise InvalidSpecError(f"r must be an integer in [1, 6], got {r}")
    k = np.arange(1, n_terms + 1, dtype=float)
    return 1.0 + 2.0 * float(np.sum(np.cos(2.0 * math.pi * k * (x - y)) / k ** (2 * r)))


@dataclass(frozen=True, eq=False)
class SumKernel(Kernel):
    """Nonnegative combination sum_j gamma_j K_j on a shared domain."""

    children: tuple[Kernel, ...]
    weights: tuple[float, ...]

    family = "sum"

    def __post_init__(self):
        children = tuple(self.children)
        weights = tuple(float(w) for w in self.weights)
        if len(children) != len(weights) or not children:
            raise InvalidSpecError("children and weights must match and be nonempty")
        if any(w < 0 for w in weights):
            raise InvalidSpecError("weights must be nonnegative")
        dims = {c.dim for c in children if c.dim is not None}
        if len(dims) > 1:
            raise InvalidSpecError(f"children disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "children", children)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self):
        for c in self.children:
            if c.dim is not None:
                return c.dim
        return None

    def _eval(self, x, y):
        return sum(w * c._eval(x, y) for c, w in zip(self.children, self.weights))

    def batch(self, x, Y):
        x = as_point(x, self.dim)
        Y = as_points(Y, x.size)
        out = np.zeros(Y.shape[0])
        for c, w in zip(self.children, self.weights):
            out += w * c.batch(x, Y)
        return out


@dataclass(frozen=True, eq=False)
class ProductKernel(Kernel):
    """Product over coordinate blocks: K(x, y) = prod_j K_j(x_j, y_j).

    ``block_dims`` gives the width of each child's block; blocks must
    tile the input exactly.
    """

    children: tuple[Kernel, ...]
    block_dims: tuple[int, ...]

    family = "product"

    def __post_init__(self):
        children = tuple(self.children)
        dims = tuple(int(d) for d in self.block_dims)
        if len(children) != len(dims) or not children:
            raise InvalidSpecError("children and block_dims must match and be nonempty")
        if any(d < 1 for d in dims):
            raise InvalidSpecError("block dimensions must be positive")
        for c, d in zip(children, dims):
            if c.dim is not None and c.dim != d:
                raise InvalidSpecError(
                    f"child of dimension {c.dim} assigned a block of width {d}"
                )
        object.__setattr__(self, "children", children)
        object.__setattr__(self, "block_dims", dims)

    @property
    def dim(self):
        return sum(self.block_dims)

    def _blocks(self, v: np.ndarray):
        out = []
        i = 0
        for d in self.block_dims:
            out.append(v[i : i + d])
            i += d
        return out

    def _eval(self, x, y):
        total = 1.0
        for c, xb, yb in zip(self.children, self._blocks(x), self._blocks(y)):
            total *= c._eval(xb, yb)
        return total

    def batch(self, x, Y):
        x = as_point(x, self.dim)
        Y = as_points(Y, x.size)
        out = np.ones(Y.shape[0])
        i = 0
        for c, d in zip(self.children, self.block_dims):
            out *= c.batch(x[i : i + d], Y[:, i : i + d])
            i += d
        return out


@dataclass(frozen=True, eq=False)
class MatrixValuedKernel(Kernel):
    """Separable matrix-valued kernel K(x, y) B with B symmetric PSD."""

    base: Kernel
    matrix: np.ndarray

    family = "matrix_valued"

    def __post_init__(self):
        B = np.asarray(self.matrix, dtype=float)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise InvalidSpecError("matrix must be square")
        if not np.allclose(B, B.T, atol=1e-12):
            raise InvalidSpecError("matrix must be symmetric")
        eig = np.linalg.eigvalsh(B)
        if eig.min() < -1e-10 * max(1.0, eig.max()):
            raise InvalidSpecError("matrix must be positive semi-definite")
        object.__setattr__(self, "matrix", B)

    @property
    def dim(self):
        return self.base.dim

    def __call__(self, x, y) -> np.ndarray:
        x = as_point(x, self.dim)
        y = as_point(y, self.dim)
        return self.base._eval(x, y) * self.matrix

    def _eval(self, x, y):
        return self.base._eval(x, y) * self.matrix


@dataclass(frozen=True, eq=False)
class Map:
    """Invertible transport map with a stable name for serialization."""

    forward: Callable[[np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray], np.ndarray]
    name: str = "map"

    def __call__(self, x):
        return self.forward(x)


@dataclass(frozen=True, eq=False)
class AffineMapSpec(Map):
    """Affine map whose parameters stay inspectable, so that images of
    simple measures under it can be recognized in closed form."""

    scale: tuple = ()
    shift: tuple = ()


def AffineMap(scale, shift) -> Map:
    """Coordinatewise x -> scale * x + shift."""
    s = np.atleast_1d(np.asarray(scale, dtype=float))
    t = np.atleast_1d(np.asarray(shift, dtype=float))
    if np.any(s == 0.0):
        raise InvalidSpecError("affine map scale must be nonzero")
    return AffineMapSpec(
        forward=lambda x: s * np.asarray(x, dtype=float) + t,
        inverse=lambda z: (np.asarray(z, dtype=float) - t) / s,
        name=f"affine(scale={s.tolist()}, shift={t.tolist()})",
        scale=tuple(float(v) for v in s),
        shift=tuple(float(v) for v in t),
    )


def NormalICDFMap() -> Map:
    """Coordinatewise standard normal quantile transform."""
    from .specfun import normal_cdf, normal_icdf

    def fwd(x):
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        return np.array([normal_icdf(v) for v in arr])

    def inv(z):
        arr = np.atleast_1d(np.asarray(z, dtype=float))
        return np.array([normal_cdf(v) for v in arr])

    return Map(forward=fwd, inverse=inv, name="normal_icdf")


@dataclass(frozen=True, eq=False)
class ComposedKernel(Kernel):
    """Pullback kernel K(phi(x), phi(y)) for an invertible map phi."""

    base: Kernel
    map: Map

    family = "composed"

    @property
    def dim(self):
        return self.base.dim

    def _eval(self, x, y):
        fx = as_point(self.map(x), self.base.dim)
        fy = as_point(self.map(y), self.base.dim)
        return self.base._eval(fx, fy)

    def batch(self, x, Y):
        x = as_point(x)
        Y = as_points(Y, x.size)
        fx = as_point(self.map(x), self.base.dim)
        FY = np.vstack([as_point(self.map(row), self.base.dim) for row in Y])
        return self.base.batch(fx, FY)


def kernel_eval(kernel: Kernel, x, y):
    """Evaluate a kernel description at a pair of points.

    Returns a float for scalar-valued families and a square array for
    matrix-valued ones.
    """
    if not isinstance(kernel, Kernel):
        raise InvalidSpecError(f"not a kernel: {kernel!r}")
    return kernel(x, y)
