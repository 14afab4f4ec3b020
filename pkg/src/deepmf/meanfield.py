"""Layer-to-layer propagation of activity means and covariances.

For pre-activations treated as jointly Gaussian, one tanh layer maps the
moments (m, C) of the layer below to

    m_i  = E_t[ tanh(sqrt(D_ii) t + x0_i) ]
    C_ij = E_{x,y}[ tanh(sqrt(D_ii) x + x0_i)
                    * tanh(sqrt(D_jj)(psi x + sqrt(1-psi^2) y) + x0_j) ] - m_i m_j

with D = w C w^T, x0 = w m + b and psi = D_ij / sqrt(D_ii D_jj).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from deepmf.ensembles import LayerWeights
from deepmf.errors import InvalidArgument, NumericalDomainError
from deepmf.numerics import QuadratureRule, clamp_correlation, default_rule

log = logging.getLogger(__name__)

NEG_VARIANCE_TOL = 1e-12
DEGENERATE_VARIANCE = 1e-14
# Number of (pair, node, node) evaluations held in memory at once.
_BLOCK_EVALS = 4_000_000


@dataclass(frozen=True, eq=False)
class LayerMoments:
    """Mean ``mean`` and connected covariance ``cov`` of one layer."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float)
        c = np.asarray(self.cov, dtype=float)
        if m.ndim != 1 or c.shape != (m.size, m.size):
            raise InvalidArgument(f"inconsistent shapes: mean {m.shape}, cov {c.shape}")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", c)

    @property
    def width(self) -> int:
        return self.mean.size

    @classmethod
    def centered(cls, cov) -> "LayerMoments":
        cov = np.asarray(cov, dtype=float)
        return cls(np.zeros(cov.shape[0]), cov)


@dataclass(frozen=True, eq=False)
class PreActivationStats:
    delta: np.ndarray
    x0: np.ndarray

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.delta), 0.0, None))

    @property
    def psi(self) -> np.ndarray:
        """Pairwise correlation of pre-activations, clamped to [-1, 1].
        Rows/columns of degenerate units are 0."""
        s = self.std
        ok = s * s >= DEGENERATE_VARIANCE
        denom = np.outer(s, s)
        psi = np.zeros_like(self.delta)
        mask = np.outer(ok, ok)
        psi[mask] = self.delta[mask] / denom[mask]
        psi, _ = clamp_correlation(psi)
        return psi


def preactivation_stats(weights: LayerWeights, prev: LayerMoments) -> PreActivationStats:
    w = weights.w
    if w.shape[1] != prev.width:
        raise InvalidArgument(
            f"weight matrix has {w.shape[1]} inputs but previous layer has width {prev.width}"
        )
    delta = w @ prev.cov @ w.T
    delta = 0.5 * (delta + delta.T)
    x0 = w @ prev.mean + weights.b
    return PreActivationStats(delta=delta, x0=x0)


def _pair_blocks(n_pairs: int, k: int):
    step = max(1, _BLOCK_EVALS // (k * k))
    for start in range(0, n_pairs, step):
        yield slice(start, min(start + step, n_pairs))


def propagate_moments(
    weights: LayerWeights, prev: LayerMoments, rule: QuadratureRule | None = None
) -> LayerMoments:
    rule = rule or default_rule()
    stats = preactivation_stats(weights, prev)
    delta = stats.delta
    var = np.diag(delta).copy()
    if np.any(var < -NEG_VARIANCE_TOL):
        bad = int(np.argmin(var))
        raise NumericalDomainError(
            f"pre-activation variance {var[bad]:.3e} of unit {bad} is negative beyond rounding"
        )
    var = np.clip(var, 0.0, None)
    s = np.sqrt(var)
    x0 = stats.x0
    n = x0.size
    t, wq = rule.nodes, rule.weights

    live = var >= DEGENERATE_VARIANCE
    # a[i, k] = tanh(s_i t_k + x0_i)
    a = np.tanh(s[:, None] * t[None, :] + x0[:, None])
    mean = a @ wq
    mean[~live] = np.tanh(x0[~live])
    second = (a * a) @ wq
    cov = np.zeros((n, n))
    diag = second - mean * mean
    diag[~live] = 0.0

    idx = np.flatnonzero(live)
    iu, ju = np.triu_indices(idx.size, k=1)
    pi, pj = idx[iu], idx[ju]
    psi_raw = delta[pi, pj] / (s[pi] * s[pj])
    psi, n_clamped = clamp_correlation(psi_raw)
    if n_clamped:
        log.warning("clamped %d pre-activation correlations into [-1, 1]", n_clamped)
    root = np.sqrt(1.0 - psi * psi)

    vals = np.empty(pi.size)
    for blk in _pair_blocks(pi.size, t.size):
        i, j = pi[blk], pj[blk]
        sj = s[j][:, None, None]
        # inner integral over y for every outer node x_k
        arg = sj * (psi[blk][:, None, None] * t[None, :, None] + root[blk][:, None, None] * t[None, None, :])
        inner = np.tanh(arg + x0[j][:, None, None]) @ wq
        vals[blk] = np.einsum("pk,pk,k->p", a[i], inner, wq)
    cov[pi, pj] = vals - mean[pi] * mean[pj]
    cov[pj, pi] = cov[pi, pj]
    cov[np.diag_indices(n)] = diag
    return LayerMoments(mean, cov)


def propagate_chain(
    net: list[LayerWeights], inputs: LayerMoments, rule: QuadratureRule | None = None
) -> list[LayerMoments]:
    """Moments of every layer, input included (length ``len(net) + 1``)."""
    rule = rule or default_rule()
    out = [inputs]
    for lw in net:
        out.append(propagate_moments(lw, out[-1], rule))
    return out
