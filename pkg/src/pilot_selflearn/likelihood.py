"""Density of the squared de-spread pilot under a two-UE LoS pilot collision.

Model (noise variance ``s2``, default 1)::

    Y = | A + b e^{j psi} |^2,   A = |sqrt(beta1) + w|,  w ~ CN(0, s2),
                                 b = sqrt(beta2),        psi ~ U[0, pi]

``A`` is Rice(sqrt(beta1), sqrt(s2/2)). Given ``A = a``, ``Y`` has an
arcsine-type density on ``[(a-b)^2, (a+b)^2]``; the unconditional density
is a Riemann sum of that conditional over a uniform grid of Rice nodes.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import i0e

PDF_FLOOR = 1e-300
SUPPORT_CLAMP = 1e-12
NODE_EPS = 1e-6
RICE_HALF_WIDTH = 6.0  # in Rice scale units


class DegenerateDistributionError(ValueError):
    """The conditional law collapses to a point mass (``b == 0``)."""


def log_bessel_i0(x):
    """``ln I0(x)`` for ``x >= 0``, stable for large ``x``.

    Uses the exponentially scaled Bessel function: ``ln I0(x) = ln(i0e(x)) + x``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("log_bessel_i0 requires x >= 0")
    out = np.log(i0e(x)) + x
    return out[()] if out.ndim == 0 else out


def rice_pdf_log(a, beta1: float, noise_var: float = 1.0):
    """Log density of ``A = |sqrt(beta1) + w|`` with ``w ~ CN(0, noise_var)``."""
    a = np.asarray(a, dtype=float)
    if np.any(~(a > 0)):
        raise ValueError("rice_pdf_log requires a > 0")
    if beta1 < 0:
        raise ValueError("beta1 must be nonnegative")
    s2 = noise_var
    out = (
        np.log(2 * a / s2)
        - (a * a + beta1) / s2
        + log_bessel_i0(2 * a * math.sqrt(beta1) / s2)
    )
    return out[()] if np.ndim(out) == 0 else out


def conditional_pdf(t, a: float, b: float):
    """Density of ``|a + b e^{j psi}|^2`` at ``t`` for ``psi ~ U[0, pi]``.

    Zero outside ``sqrt(t) in [|a-b|, a+b]``. The inverse square root that
    diverges at both ends of the support is bounded by clamping ``1 - x^2``
    at ``1e-12``.
    """
    if not a > 0:
        raise ValueError("conditional_pdf requires a > 0")
    if b == 0:
        raise DegenerateDistributionError("b == 0: Y is a point mass at a^2")
    if b < 0:
        raise ValueError("b must be nonnegative")
    t = np.asarray(t, dtype=float)
    x = (t - a * a - b * b) / (2 * a * b)
    r = 1.0 - x * x
    inside = r >= 0
    dens = 1.0 / (2 * np.pi * a * b * np.sqrt(np.maximum(r, SUPPORT_CLAMP)))
    out = np.where(inside, dens, 0.0)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class QuadratureRule:
    """Uniform Rice nodes ``a_j = lower + j * step`` with weights ``a_j - a_{j-1}``.

    The first weight is the grid step.
    """

    nodes: np.ndarray
    weights: np.ndarray
    beta1: float
    noise_var: float = 1.0

    @property
    def lower(self) -> float:
        return float(self.nodes[0])

    @property
    def step(self) -> float:
        return float(self.weights[0])

    def mass_weights(self) -> np.ndarray:
        """``p_A(a_j) * weight_j``; these sum to about 1."""
        return np.exp(rice_pdf_log(self.nodes, self.beta1, self.noise_var)) * self.weights


def quadrature_window(beta1: float, noise_var: float = 1.0) -> tuple[float, float]:
    nu = math.sqrt(beta1)
    sigma = math.sqrt(noise_var / 2)
    return max(NODE_EPS, nu - RICE_HALF_WIDTH * sigma), nu + RICE_HALF_WIDTH * sigma


def build_quadrature(beta1: float, node_count: int = 64, noise_var: float = 1.0) -> QuadratureRule:
    if node_count < 2:
        raise ValueError("node_count must be at least 2")
    if beta1 < 0 or not math.isfinite(beta1):
        raise ValueError("beta1 must be finite and nonnegative")
    lo, hi = quadrature_window(beta1, noise_var)
    step = (hi - lo) / (node_count - 1)
    nodes = lo + step * np.arange(node_count)
    weights = np.full(node_count, step)
    return QuadratureRule(nodes, weights, float(beta1), float(noise_var))


@dataclass(frozen=True)
class LikelihoodParams:
    beta1: float
    beta2: float

    def __post_init__(self):
        for name in ("beta1", "beta2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")

    @property
    def b(self) -> float:
        return math.sqrt(self.beta2)

    def swapped(self) -> "LikelihoodParams":
        return LikelihoodParams(self.beta2, self.beta1)


def noncentral_pdf(t, beta1: float, noise_var: float = 1.0):
    """Density of ``|sqrt(beta1) + w|^2``, ``w ~ CN(0, noise_var)``."""
    t = np.asarray(t, dtype=float)
    tt = np.maximum(t, 0.0)
    s2 = noise_var
    logp = -math.log(s2) - (tt + beta1) / s2 + log_bessel_i0(2 * np.sqrt(tt * beta1) / s2)
    out = np.where(t >= 0, np.exp(logp), 0.0)
    return out[()] if out.ndim == 0 else out


def marginal_pdf(t, params: LikelihoodParams, rule: QuadratureRule | None = None, noise_var: float = 1.0):
    """Riemann-sum density of ``Y`` at ``t`` (scalar or array).

    With ``beta2 == 0`` the exact noncentral density is returned instead.
    """
    if rule is None:
        rule = build_quadrature(params.beta1, noise_var=noise_var)
    elif not math.isclose(rule.beta1, params.beta1, rel_tol=1e-12, abs_tol=1e-300):
        raise ValueError("quadrature rule was built for a different beta1")
    if params.beta2 == 0:
        return noncentral_pdf(t, params.beta1, rule.noise_var)
    t_arr = np.asarray(t, dtype=float)
    b = params.b
    a = rule.nodes[:, None]
    x = (t_arr.reshape(1, -1) - a * a - b * b) / (2 * a * b)
    r = 1.0 - x * x
    terms = np.where(
        r >= 0,
        rule.mass_weights()[:, None] / (2 * np.pi * a * b * np.sqrt(np.maximum(r, SUPPORT_CLAMP))),
        0.0,
    )
    out = terms.sum(axis=0).reshape(t_arr.shape)
    return out[()] if out.ndim == 0 else out


def _powers(observations) -> tuple[np.ndarray, float]:
    if hasattr(observations, "normalized_power"):
        return observations.normalized_power(), observations.noise_var
    return np.atleast_1d(np.asarray(observations, dtype=float)), 1.0


def log_likelihood(
    observations,
    params: LikelihoodParams,
    rule: QuadratureRule | None = None,
    *,
    symmetric: bool = False,
) -> float:
    """Sum over blocks of ``ln max(p_Y(|y_i|^2), 1e-300)``.

    ``observations`` is a ``DespreadObservation`` (normalized by ``rho_p``
    internally) or an array of squared magnitudes with unit noise variance.
    With ``symmetric=True`` each block density is the average of the
    ``(beta1, beta2)`` and ``(beta2, beta1)`` quadratures; the exact density
    is invariant under that swap, so this only cancels quadrature asymmetry.
    """
    t, s2 = _powers(observations)
    if rule is None:
        rule = build_quadrature(params.beta1, noise_var=s2)
    p = marginal_pdf(t, params, rule)
    if symmetric:
        p2 = marginal_pdf(t, params.swapped(), build_quadrature(params.beta2, rule.nodes.size, s2))
        p = 0.5 * (p + p2)
    return float(np.sum(np.log(np.maximum(p, PDF_FLOOR))))


def pdf_csv(t_grid, params: LikelihoodParams, node_count: int = 64, noise_var: float = 1.0) -> str:
    t_grid = np.asarray(t_grid, dtype=float)
    rule = build_quadrature(params.beta1, node_count, noise_var)
    values = np.atleast_1d(marginal_pdf(t_grid, params, rule))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "pdf"])
    for t, p in zip(np.atleast_1d(t_grid), values):
        writer.writerow([repr(float(t)), repr(float(p))])
    return buf.getvalue()


# --- grid evaluation -------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _mixture_density(t, sqrt_t, b, lower, step, weights):
    n = weights.size
    # only nodes with |sqrt(t) - b| <= a <= sqrt(t) + b can contribute
    jl = int(math.floor((abs(sqrt_t - b) - lower) / step)) - 1
    jh = int(math.ceil((sqrt_t + b - lower) / step)) + 1
    if jl < 0:
        jl = 0
    if jh > n - 1:
        jh = n - 1
    acc = 0.0
    for j in range(jl, jh + 1):
        a = lower + step * j
        x = (t - a * a - b * b) / (2 * a * b)
        r = 1.0 - x * x
        if r < 0.0:
            continue
        if r < SUPPORT_CLAMP:
            r = SUPPORT_CLAMP
        acc += weights[j] / (2 * math.pi * a * b * math.sqrt(r))
    return acc


@numba.njit(cache=True, nogil=True)
def _surface_kernel(t, sqrt_b1, lower1, step1, w1, sqrt_b2, lower2, step2, w2, symmetric, out):
    sqrt_t = np.sqrt(t)
    for i1 in range(sqrt_b1.size):
        for i2 in range(sqrt_b2.size):
            total = 0.0
            for k in range(t.size):
                p = _mixture_density(t[k], sqrt_t[k], sqrt_b2[i2], lower1[i1], step1[i1], w1[i1])
                if symmetric:
                    q = _mixture_density(t[k], sqrt_t[k], sqrt_b1[i1], lower2[i2], step2[i2], w2[i2])
                    p = 0.5 * (p + q)
                if p < PDF_FLOOR:
                    p = PDF_FLOOR
                total += math.log(p)
            out[i1, i2] = total


def _rule_table(betas: np.ndarray, node_count: int, noise_var: float):
    lower = np.empty(betas.size)
    step = np.empty(betas.size)
    weights = np.empty((betas.size, node_count))
    for i, beta in enumerate(betas):
        rule = build_quadrature(float(beta), node_count, noise_var)
        lower[i], step[i] = rule.lower, rule.step
        weights[i] = rule.mass_weights()
    return lower, step, weights


def loglik_surface(
    observations,
    beta1_values,
    beta2_values,
    node_count: int = 64,
    *,
    symmetric: bool = False,
) -> np.ndarray:
    """Log-likelihood for every ``(beta1_values[i], beta2_values[j])`` pair.

    Agrees with :func:`log_likelihood` cell by cell up to summation order.
    Cells with a zero path loss go through the reference path.
    """
    t, s2 = _powers(observations)
    b1 = np.asarray(beta1_values, dtype=float)
    b2 = np.asarray(beta2_values, dtype=float)
    if b1.size == 0 or b2.size == 0:
        raise ValueError("empty beta grid")
    if np.any(b1 < 0) or np.any(b2 < 0):
        raise ValueError("negative path loss in grid")
    out = np.empty((b1.size, b2.size))
    nz1 = b1 > 0
    nz2 = b2 > 0
    if nz1.any() and nz2.any():
        lo1, st1, w1 = _rule_table(b1[nz1], node_count, s2)
        lo2, st2, w2 = _rule_table(b2[nz2], node_count, s2)
        sub = np.empty((nz1.sum(), nz2.sum()))
        _surface_kernel(
            np.ascontiguousarray(t), np.sqrt(b1[nz1]), lo1, st1, w1,
            np.sqrt(b2[nz2]), lo2, st2, w2, symmetric, sub,
        )
        out[np.ix_(nz1, nz2)] = sub
    for i, j in zip(*np.nonzero(~(nz1[:, None] & nz2[None, :]))):
        params = LikelihoodParams(float(b1[i]), float(b2[j]))
        rule = build_quadrature(params.beta1, node_count, s2)
        out[i, j] = log_likelihood(observations, params, rule, symmetric=symmetric)
    return out
