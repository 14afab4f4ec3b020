"""Collective observables of a covariance matrix: participation-ratio
dimensionality, covariance strength, and eigenvalue spectra against the
Marchenko-Pastur reference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from deepmf.errors import InvalidArgument
from deepmf.numerics import RngStream, sym_eigvals

HIST_BINS = 40
EIG_CLIP = 1e-12


@dataclass(frozen=True)
class MetricsReport:
    dim: float
    dim_norm: float
    sigma: float
    k1: float
    k2: float
    width: int

    @property
    def n_sigma(self) -> float:
        return self.width * self.sigma


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    eigenvalues: np.ndarray
    bin_edges: np.ndarray
    density: np.ndarray
    mp_scale: float

    @property
    def lambda_minus(self) -> float:
        return 0.0

    @property
    def lambda_plus(self) -> float:
        return 4.0 * self.mp_scale


def _clipped_eigs(c: np.ndarray) -> np.ndarray:
    lam = sym_eigvals(c)
    top = np.max(np.abs(lam)) if lam.size else 0.0
    lam = lam.copy()
    lam[np.abs(lam) < EIG_CLIP * top] = 0.0
    return lam


def dimensionality(c: np.ndarray) -> tuple[float, float]:
    """Participation ratio D = (sum lambda)^2 / sum lambda^2 and D / N."""
    lam = _clipped_eigs(c)
    denom = float(np.sum(lam * lam))
    if denom == 0.0:
        raise InvalidArgument("dimensionality is undefined for the zero matrix")
    d = float(np.sum(lam)) ** 2 / denom
    return d, d / lam.size


def dimensionality_traces(c: np.ndarray) -> tuple[float, float]:
    """Same quantity as :func:`dimensionality` via tr(C)^2 / tr(C^2)."""
    c = np.asarray(c, dtype=float)
    tr2 = float(np.sum(c * c.T))
    if tr2 == 0.0:
        raise InvalidArgument("dimensionality is undefined for the zero matrix")
    d = float(np.trace(c)) ** 2 / tr2
    return d, d / c.shape[0]


def trace_stats(c: np.ndarray) -> tuple[float, float]:
    """K1 = mean of the diagonal, K2 = mean of the squared diagonal."""
    d = np.diag(np.asarray(c, dtype=float))
    return float(d.mean()), float(np.mean(d * d))


def covariance_strength(c: np.ndarray) -> float:
    """Mean squared off-diagonal entry, 2/(N(N-1)) sum_{i<j} C_ij^2."""
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    if n < 2:
        raise InvalidArgument("covariance strength needs N >= 2")
    iu = np.triu_indices(n, k=1)
    return float(np.mean(c[iu] ** 2))


def sigma_dim_identity(c: np.ndarray) -> float:
    """Covariance strength recovered from the normalized dimensionality:
    Sigma = (K1^2 / D_norm - K2) / (N - 1)."""
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    if n < 2:
        raise InvalidArgument("covariance strength needs N >= 2")
    _, dn = dimensionality(c)
    k1, k2 = trace_stats(c)
    return (k1 * k1 / dn - k2) / (n - 1)


def metrics_report(c: np.ndarray) -> MetricsReport:
    d, dn = dimensionality(c)
    k1, k2 = trace_stats(c)
    return MetricsReport(dim=d, dim_norm=dn, sigma=covariance_strength(c), k1=k1, k2=k2, width=c.shape[0])


def mp_density(scale: float, lam):
    """Marchenko-Pastur density at aspect ratio 1 with entry variance
    ``scale``; support (0, 4 * scale]."""
    if not scale > 0:
        raise InvalidArgument(f"MP scale must be positive, got {scale}")
    lam = np.asarray(lam, dtype=float)
    hi = 4.0 * scale
    inside = (lam > 0) & (lam <= hi)
    safe = np.where(inside, lam, 1.0)
    out = np.where(inside, np.sqrt(np.clip(safe * (hi - safe), 0.0, None)) / (2 * np.pi * safe * scale), 0.0)
    return float(out) if out.ndim == 0 else out


def mp_cdf(scale: float, lam):
    """Closed-form cumulative of :func:`mp_density`."""
    if not scale > 0:
        raise InvalidArgument(f"MP scale must be positive, got {scale}")
    s = np.clip(np.asarray(lam, dtype=float) / (4.0 * scale), 0.0, 1.0)
    return (2.0 / np.pi) * (np.sqrt(s * (1.0 - s)) + np.arcsin(np.sqrt(s)))


def fit_mp_scale(eigenvalues) -> float:
    """Entry variance whose MP upper edge matches the largest eigenvalue."""
    return float(np.max(eigenvalues)) / 4.0


def spectrum_report(eigenvalues, bins: int = HIST_BINS, mp_scale: float | None = None) -> SpectrumReport:
    lam = np.sort(np.clip(np.asarray(eigenvalues, dtype=float), 0.0, None))[::-1]
    top = float(lam[0])
    if top <= 0.0:
        edges = np.linspace(0.0, 1.0, bins + 1)
        density = np.zeros(bins)
        density[0] = bins
    else:
        edges = np.linspace(0.0, top, bins + 1)
        counts, _ = np.histogram(lam, bins=edges)
        density = counts / (lam.size * (edges[1] - edges[0]))
    if mp_scale is None:
        mp_scale = fit_mp_scale(lam) if top > 0 else 0.0
    return SpectrumReport(lam, edges, density, float(mp_scale))


def mp_bin_mass(report: SpectrumReport, scale: float | None = None) -> np.ndarray:
    scale = report.mp_scale if scale is None else scale
    return np.diff(mp_cdf(scale, report.bin_edges))


def mp_total_variation(report: SpectrumReport, scale: float | None = None) -> float:
    """Total-variation distance between the histogram and the MP law,
    counting MP mass outside the histogram range as mismatch."""
    scale = report.mp_scale if scale is None else scale
    mass = mp_bin_mass(report, scale)
    emp = report.density * np.diff(report.bin_edges)
    outside = 1.0 - float(mass.sum())
    return 0.5 * (float(np.abs(emp - mass).sum()) + outside)


def wishart_reference(n: int, p: int, scale: float, rng: RngStream, bins: int = HIST_BINS) -> SpectrumReport:
    """Spectrum of (1/N) X X^T with X an N x P matrix of N(0, scale) entries."""
    if n < 1 or p < 1:
        raise InvalidArgument("N and P must be positive")
    if not scale >= 0:
        raise InvalidArgument("scale must be nonnegative")
    xi = rng.generator().normal(0.0, 1.0, size=(n, p)) * np.sqrt(scale)
    lam = sym_eigvals(xi @ xi.T / n)
    return spectrum_report(lam, bins=bins, mp_scale=scale if scale > 0 else None)
