"""Stein reproducing kernels.

Given a base kernel K with analytic derivatives and a target measure
with score s = grad log p, the Stein kernel

    Kt(x, y) = s(x)^T s(y) K(x, y) + grad_x K(x, y)^T s(y)
             + grad_y K(x, y)^T s(x) + tr(grad_x grad_y K(x, y)) + c

integrates to c against the target in either argument, for any target
known only up to normalization. Derivatives come from a registry of
analytic rules keyed by base kernel family; there is no automatic
differentiation here, so unsupported bases are rejected up front.
"""

from __future__ import annotations

import math

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dictionary import Embedding
from .errors import InvalidSpecError, UnsupportedPairError
from .kernels import GaussianKernel, Kernel, as_point, as_points
from .measures import GaussianMeasure, Measure, MixtureMeasure

__all__ = [
    "SteinKernel",
    "stein_eval",
    "stein_embed",
    "register_derivatives",
    "base_derivatives",
]

# family -> fn(kernel, x, Y) returning (k, grad_x, grad_y, trace) with
# shapes (n,), (n, d), (n, d), (n,) for the rows y_i of Y.
_DERIVATIVES: dict[str, Callable] = {}


def register_derivatives(family: str, fn: Callable) -> None:
    """Register analytic derivative rules for a base kernel family."""
    _DERIVATIVES[family] = fn


def base_derivatives(kernel: Kernel, x, Y):
    """Evaluate (K, grad_x K, grad_y K, tr grad_x grad_y K) against the
    rows of Y using the registered rule for the kernel's family."""
    fn = _DERIVATIVES.get(kernel.family)
    if fn is None:
        raise UnsupportedPairError(
            f"no analytic derivatives registered for kernel family "
            f"'{kernel.family}'"
        )
    return fn(kernel, x, Y)


def _gaussian_derivatives(kernel: GaussianKernel, x, Y):
    x = as_point(x, kernel.dim)
    Y = as_points(Y, x.size)
    U = x[None, :] - Y
    if kernel.diagonal:
        inv = 1.0 / np.asarray(kernel.lengthscales) ** 2
        Q = U * inv[None, :]
        trace_inv = float(np.sum(inv))
    else:
        lam_inv = np.linalg.inv(kernel.lam())
        Q = U @ lam_inv
        trace_inv = float(np.trace(lam_inv))
    k = np.exp(-0.5 * np.sum(U * Q, axis=1))
    grad_x = -k[:, None] * Q
    grad_y = k[:, None] * Q
    trace = k * (trace_inv - np.sum(Q * Q, axis=1))
    return k, grad_x, grad_y, trace


register_derivatives("gaussian", _gaussian_derivatives)


def _score_rows(measure: Measure, Y: np.ndarray) -> np.ndarray:
    """Scores of the target at the rows of Y, vectorized when the
    measure allows it."""
    if isinstance(measure, GaussianMeasure):
        D = Y - np.asarray(measure.mean)[None, :]
        if measure.diagonal:
            return -D / np.asarray(measure.cov_diag)[None, :]
        return -np.linalg.solve(measure.cov, D.T).T
    if isinstance(measure, MixtureMeasure) and all(
        isinstance(c, GaussianMeasure) for c in measure.components
    ):
        # posterior-weighted component scores, all rows at once; log
        # densities are shifted by their max for stable exponentials
        logs = np.empty((len(measure.components), Y.shape[0]))
        scores = np.empty((len(measure.components),) + Y.shape)
        for j, comp in enumerate(measure.components):
            D = Y - np.asarray(comp.mean)[None, :]
            if comp.diagonal:
                var = np.asarray(comp.cov_diag)[None, :]
                q = np.sum(D * D / var, axis=1)
                scores[j] = -D / var
            else:
                sol = np.linalg.solve(comp.cov, D.T).T
                q = np.sum(D * sol, axis=1)
                scores[j] = -sol
            logdet = 2.0 * np.sum(np.log(np.diag(comp.chol)))
            logs[j] = math.log(measure.weights[j]) - 0.5 * (
                q + logdet + Y.shape[1] * math.log(2.0 * math.pi)
            )
        logs -= logs.max(axis=0, keepdims=True)
        resp = np.exp(logs)
        resp /= resp.sum(axis=0, keepdims=True)
        return np.einsum("jn,jnd->nd", resp, scores)
    return np.vstack([measure.score(row) for row in Y])


@dataclass(frozen=True, eq=False)
class SteinKernel(Kernel):
    """Stein kernel with base kernel, score-bearing target, and
    additive constant c (the value of both of its embeddings)."""

    base: Kernel
    target: Measure
    c: float = 0.0

    family = "stein"

    def __post_init__(self):
        if not isinstance(self.base, Kernel):
            raise InvalidSpecError("base must be a kernel")
        if not isinstance(self.target, Measure):
            raise InvalidSpecError("target must be a measure")
        if self.base.family not in _DERIVATIVES:
            raise UnsupportedPairError(
                f"no analytic derivatives registered for kernel family "
                f"'{self.base.family}'"
            )
        if self.base.dim is not None and self.base.dim != self.target.dim:
            raise InvalidSpecError(
                "base kernel and target measure dimensions differ"
            )

    @property
    def dim(self):
        return self.target.dim

    def _eval(self, x, y):
        return float(self.batch(x, y[None, :])[0])

    def batch(self, x, Y):
        x = as_point(x, self.dim)
        Y = as_points(Y, self.dim)
        k, gx, gy, tr = base_derivatives(self.base, x, Y)
        sx = self.target.score(x)
        sy = _score_rows(self.target, Y)
        return (
            k * (sy @ sx)
            + np.sum(gx * sy, axis=1)
            + gy @ sx
            + tr
            + self.c
        )


def stein_eval(kernel: SteinKernel, x, y) -> float:
    """Pointwise value of a Stein kernel."""
    if not isinstance(kernel, SteinKernel):
        raise InvalidSpecError("stein_eval expects a Stein kernel")
    return kernel(x, y)


def stein_embed(kernel: SteinKernel) -> Embedding:
    """Both embeddings of a Stein kernel against its own target are
    identically the additive constant c."""
    if not isinstance(kernel, SteinKernel):
        raise InvalidSpecError("stein_embed expects a Stein kernel")
    c = float(kernel.c)
    d = kernel.dim

    def kp(x):
        as_point(x, d)
        return c

    return Embedding(
        kp_fn=kp,
        kpp=c,
        pair_id=f"stein/{kernel.target.family}",
        kernel=kernel,
        measure=kernel.target,
    )
