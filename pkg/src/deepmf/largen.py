"""Scalar order-parameter recursions of the wide-network limit.

Every Gaussian average here is of a function of sqrt(sigma_b) u + sqrt(v) t
with u, t independent standard normals, i.e. of a single normal variable
with variance sigma_b + v, so one 1-D rule suffices.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from deepmf.errors import DivergenceError, InvalidArgument, NumericalDomainError
from deepmf.numerics import QuadratureRule, default_rule

FIXED_POINT_TOL = 1e-12
FIXED_POINT_MAX_ITER = 10_000


@dataclass(frozen=True)
class LargeNState:
    """Order parameters of layer ``layer``.

    ``chi2`` and ``upsilon`` are the moments of tanh' under the mean
    pre-activation field that drives layer ``layer + 1`` (variance
    g * Q + sigma_b, with this layer's Q).
    """

    layer: int
    q: float
    k1: float
    k2: float
    sigma: float
    dim_norm: float
    chi2: float
    upsilon: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FixedPoint:
    value: float
    iterations: int
    residual: float
    converged: bool


def _gauss_mean(f, variance: float, rule: QuadratureRule) -> float:
    if variance < 0:
        raise NumericalDomainError(f"negative field variance {variance}")
    return float(np.dot(rule.weights, f(np.sqrt(variance) * rule.nodes)))


def _tanh2(x):
    return np.tanh(x) ** 2


def _dtanh(x):
    return 1.0 / np.cosh(x) ** 2


def q_step(q_prev: float, g: float, sigma_b: float, rule: QuadratureRule | None = None) -> float:
    """Q^l = E[tanh^2(sqrt(sigma_b) u + sqrt(g Q^{l-1}) t)]."""
    if q_prev < 0:
        raise InvalidArgument(f"Q must be nonnegative, got {q_prev}")
    return _gauss_mean(_tanh2, sigma_b + g * q_prev, rule or default_rule())


def phi_prime_moments(q: float, g: float, sigma_b: float, rule: QuadratureRule | None = None) -> tuple[float, float]:
    """(E[tanh'^2], E[tanh'^4] / E[tanh'^2]^2) under the field of variance
    sigma_b + g Q. At Q = 0 the first entry is kappa."""
    if q < 0:
        raise InvalidArgument(f"Q must be nonnegative, got {q}")
    rule = rule or default_rule()
    var = sigma_b + g * q
    chi2 = _gauss_mean(lambda x: _dtanh(x) ** 2, var, rule)
    chi4 = _gauss_mean(lambda x: _dtanh(x) ** 4, var, rule)
    return chi2, chi4 / (chi2 * chi2)


def kappa(sigma_b: float, rule: QuadratureRule | None = None) -> float:
    return phi_prime_moments(0.0, 1.0, sigma_b, rule)[0]


def k1_step(
    k1_prev: float, q_prev: float, q_next: float, g: float, sigma_b: float, rule: QuadratureRule | None = None
) -> float:
    """K1^l = E[tanh^2(sqrt(g (K1^{l-1} + Q^{l-1})) t + sqrt(sigma_b) u)] - Q^l."""
    return _gauss_mean(_tanh2, g * (k1_prev + q_prev) + sigma_b, rule or default_rule()) - q_next


def sigma_step(sigma_prev: float, k2_prev: float, chi2: float, g: float, n: int) -> float:
    """Sigma^l = g^2 chi2^2 (Sigma^{l-1} + K2^{l-1} / N)."""
    if sigma_prev < 0:
        raise InvalidArgument(f"Sigma must be nonnegative, got {sigma_prev}")
    slope = g * g * chi2 * chi2
    return slope * sigma_prev + slope * k2_prev / n


def operating_point(g: float, sigma_b: float, rule: QuadratureRule | None = None) -> float:
    """N Sigma* = g^2 kappa^2 / (1 - g^2 kappa^2)."""
    slope = (g * kappa(sigma_b, rule)) ** 2
    if slope >= 1.0:
        raise DivergenceError(f"g^2 kappa^2 = {slope:.6g} >= 1: no finite operating point")
    return slope / (1.0 - slope)


def layer1_map(n_sigma0: float, g: float, sigma_b: float, rule: QuadratureRule | None = None) -> float:
    """N Sigma^1 = g^2 kappa^2 (N Sigma^0 + 1) for unit-variance inputs."""
    slope = (g * kappa(sigma_b, rule)) ** 2
    return slope * (n_sigma0 + 1.0)


def iterate_fixed_point(f, x0: float, tol: float = FIXED_POINT_TOL, max_iter: int = FIXED_POINT_MAX_ITER) -> FixedPoint:
    """Plain iteration x <- f(x); non-convergence is reported, not raised."""
    x = x0
    for it in range(1, max_iter + 1):
        nxt = f(x)
        res = abs(nxt - x)
        x = nxt
        if res < tol:
            return FixedPoint(x, it, res, True)
    return FixedPoint(x, max_iter, res, False)


def dim_formulas(state: LargeNState, n: int) -> tuple[float, float, float]:
    """(D_norm^l, D_norm^{l+1}, additive term (K1^l)^2 Upsilon).

    The additive term enters only the denominator of the next layer's
    normalized dimensionality, so the second value is always smaller.
    """
    base = (n - 1) * state.sigma + state.k2
    if base <= 0:
        raise InvalidArgument("nonpositive dimensionality denominator")
    k1sq = state.k1 * state.k1
    add = k1sq * state.upsilon
    return k1sq / base, k1sq / (base + add), add


def trajectory(
    g: float,
    sigma_b: float,
    n: int,
    depth: int,
    sigma0: float,
    k1_0: float = 1.0,
    k2_0: float = 1.0,
    q0: float = 0.0,
    rule: QuadratureRule | None = None,
) -> list[LargeNState]:
    """Scalar recursions from layer 0 to ``depth``.

    For l >= 1, K2 is replaced by K1^2 (concentration of the diagonal).
    """
    rule = rule or default_rule()

    def make(layer, q, k1, k2, sigma):
        chi2, ups = phi_prime_moments(q, g, sigma_b, rule)
        base = (n - 1) * sigma + k2
        dn = k1 * k1 / base if base > 0 else float("nan")
        return LargeNState(layer, q, k1, k2, sigma, dn, chi2, ups)

    states = [make(0, q0, k1_0, k2_0, sigma0)]
    for l in range(1, depth + 1):
        prev = states[-1]
        q = q_step(prev.q, g, sigma_b, rule)
        k1 = k1_step(prev.k1, prev.q, q, g, sigma_b, rule)
        sigma = sigma_step(prev.sigma, prev.k2, prev.chi2, g, n)
        states.append(make(l, q, k1, k1 * k1, sigma))
    return states
