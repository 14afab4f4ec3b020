"""Sampling oracle for deterministic tanh networks.

Correlated Gaussian inputs are drawn, pushed through the layers sample by
sample, and the empirical moments are compared with the mean-field ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from deepmf.ensembles import LayerWeights
from deepmf.errors import FactorizationError, InvalidArgument
from deepmf.meanfield import LayerMoments
from deepmf.metrics import dimensionality
from deepmf.numerics import STREAM_SAMPLES, RngStream, nearest_psd

DEFAULT_SAMPLES = 100_000
JITTER_DOUBLINGS = 10


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """``S x N`` activities of one layer (sample-major)."""

    values: np.ndarray
    layer: int = 0

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class MomentComparison:
    diff: np.ndarray
    rmse_offdiag: float
    stderr: np.ndarray
    median_stderr: float
    dim_empirical: float
    dim_theory: float

    @property
    def dim_rel_diff(self) -> float:
        return abs(self.dim_empirical - self.dim_theory) / self.dim_theory

    def to_dict(self) -> dict:
        return {
            "rmse_offdiag": self.rmse_offdiag,
            "median_stderr": self.median_stderr,
            "rmse_over_stderr": self.rmse_offdiag / self.median_stderr if self.median_stderr > 0 else None,
            "dim_empirical": self.dim_empirical,
            "dim_theory": self.dim_theory,
            "dim_rel_diff": self.dim_rel_diff,
        }


def psd_cholesky(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of the PSD projection of ``cov``.

    Diagonal jitter starts at 1e-12 * trace / N and doubles on each failure.
    """
    a = nearest_psd(cov)
    n = a.shape[0]
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-12 * max(float(np.trace(a)), 1e-300) / n
    for _ in range(JITTER_DOUBLINGS):
        try:
            return np.linalg.cholesky(a + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            jitter *= 2.0
    raise FactorizationError(f"Cholesky failed with diagonal jitter up to {jitter / 2:.3e}")


def sample_inputs(c0: np.ndarray, n_samples: int, rng: RngStream) -> SampleBatch:
    if n_samples < 2:
        raise InvalidArgument("need at least 2 samples")
    chol = psd_cholesky(c0)
    z = rng.stream(STREAM_SAMPLES).generator().standard_normal((n_samples, chol.shape[0]))
    return SampleBatch(z @ chol.T, layer=0)


def _forward(lw: LayerWeights, x: np.ndarray) -> np.ndarray:
    if lw.n_in != x.shape[1]:
        raise InvalidArgument(f"layer expects {lw.n_in} inputs, batch has {x.shape[1]}")
    return np.tanh(x @ lw.w.T + lw.b)


def simulate_chain(net: list[LayerWeights], batch: SampleBatch) -> list[SampleBatch]:
    """All layers' activities, input batch included. Memory grows with depth;
    use :func:`simulate_moments` for large runs."""
    out = [batch]
    x = batch.values
    for l, lw in enumerate(net, start=batch.layer + 1):
        x = _forward(lw, x)
        out.append(SampleBatch(x, layer=l))
    return out


def simulate_moments(net: list[LayerWeights], batch: SampleBatch) -> list[LayerMoments]:
    """Empirical moments of every layer, keeping one layer of samples alive."""
    out = [empirical_moments(batch)]
    x = batch.values
    for lw in net:
        x = _forward(lw, x)
        out.append(empirical_moments(SampleBatch(x)))
    return out


def empirical_moments(batch: SampleBatch) -> LayerMoments:
    x = np.asarray(batch.values, dtype=float)
    if x.shape[0] < 2:
        raise InvalidArgument("need at least 2 samples")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (x.shape[0] - 1)
    return LayerMoments(mean, 0.5 * (cov + cov.T))


def compare(theory: LayerMoments, empirical: LayerMoments, n_samples: int) -> MomentComparison:
    ct, ce = theory.cov, empirical.cov
    if ct.shape != ce.shape:
        raise InvalidArgument(f"shape mismatch {ct.shape} vs {ce.shape}")
    n = ct.shape[0]
    diff = ce - ct
    off = ~np.eye(n, dtype=bool)
    rmse = float(np.sqrt(np.mean(diff[off] ** 2))) if n > 1 else 0.0
    d = np.diag(ct)
    stderr = np.sqrt((np.outer(d, d) + ct * ct) / n_samples)
    return MomentComparison(
        diff=diff,
        rmse_offdiag=rmse,
        stderr=stderr,
        median_stderr=float(np.median(stderr[off])) if n > 1 else 0.0,
        dim_empirical=dimensionality(ce)[0],
        dim_theory=dimensionality(ct)[0],
    )
