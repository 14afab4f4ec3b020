"""Shared numerical kernels: Gaussian quadrature, symmetric eigen-solves,
PSD projection and seeded random streams."""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from deepmf.errors import InvalidArgument, NumericalDomainError

# Uniform rule by default: tanh has poles a distance pi/(2a) off the real
# axis, where Gauss-Hermite converges only like exp(-c sqrt(order)) while the
# trapezoid sum converges like exp(-pi^2 / (a h)).
DEFAULT_KIND = "trapezoid"
DEFAULT_ORDER = 81
GH_DEFAULT_ORDER = 40
TRAPEZOID_HALF_WIDTH = 8.5
TRAPEZOID_MIN_ORDER = 25
RULE_KINDS = ("trapezoid", "gauss-hermite")

# Stream ids for the independent random sources of one experiment.
STREAM_WEIGHTS = 1
STREAM_BIASES = 2
STREAM_INPUTS = 3
STREAM_GIBBS = 4
STREAM_SAMPLES = 5
STREAM_TRAINING = 6
STREAM_MESSAGES = 7


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Quadrature rule normalized to the standard normal measure:
    ``sum(weights * f(nodes))`` approximates E[f(t)] for t ~ N(0, 1)."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int
    kind: str = "gauss-hermite"

    @property
    def outer_weights(self) -> np.ndarray:
        return np.outer(self.weights, self.weights)


@functools.lru_cache(maxsize=32)
def gauss_hermite_rule(order: int = GH_DEFAULT_ORDER) -> QuadratureRule:
    """Exact for polynomials of degree up to ``2 * order - 1``."""
    if not isinstance(order, (int, np.integer)) or order < 1:
        raise InvalidArgument(f"quadrature order must be a positive integer, got {order!r}")
    x, w = hermegauss(int(order))
    # Enforce exact mirror symmetry; hermegauss is symmetric only to rounding.
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    w = w / w.sum()
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(nodes=x, weights=w, order=int(order), kind="gauss-hermite")


@functools.lru_cache(maxsize=32)
def trapezoid_rule(order: int = DEFAULT_ORDER, half_width: float = TRAPEZOID_HALF_WIDTH) -> QuadratureRule:
    """``order`` equispaced nodes on [-half_width, half_width] with weights
    proportional to the normal density.

    Going from ``order`` to ``2 * order - 1`` halves the step and keeps every
    old node.
    """
    if not isinstance(order, (int, np.integer)) or order < TRAPEZOID_MIN_ORDER:
        raise InvalidArgument(f"trapezoid rule needs an integer order >= {TRAPEZOID_MIN_ORDER}, got {order!r}")
    if not half_width > 0:
        raise InvalidArgument("half width must be positive")
    x = np.linspace(-half_width, half_width, int(order))
    x = 0.5 * (x - x[::-1])
    w = np.exp(-0.5 * x * x)
    w = w / w.sum()
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(nodes=x, weights=w, order=int(order), kind="trapezoid")


def quadrature_rule(order: int | None = None, kind: str = DEFAULT_KIND) -> QuadratureRule:
    if kind == "trapezoid":
        return trapezoid_rule(DEFAULT_ORDER if order is None else order)
    if kind == "gauss-hermite":
        return gauss_hermite_rule(GH_DEFAULT_ORDER if order is None else order)
    raise InvalidArgument(f"unknown quadrature kind {kind!r}; expected one of {RULE_KINDS}")


def default_rule() -> QuadratureRule:
    return quadrature_rule()


def expect_1d(f: Callable[[np.ndarray], np.ndarray], rule: QuadratureRule) -> float:
    """E[f(t)] for standard normal t. ``f`` must accept an array of nodes."""
    vals = np.asarray(f(rule.nodes), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise NumericalDomainError("integrand is not finite on the quadrature nodes")
    return float(np.dot(rule.weights, vals))


def expect_2d_correlated(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray], psi: float, rule: QuadratureRule
) -> float:
    """E[f(u, v)] for standard normals with correlation ``psi``.

    Parametrized as u = x, v = psi*x + sqrt(1 - psi^2)*y with x, y
    independent, and integrated with the tensor-product rule.
    """
    if not abs(psi) <= 1.0:
        raise InvalidArgument(f"correlation must lie in [-1, 1], got {psi!r}")
    x = rule.nodes[:, None]
    y = rule.nodes[None, :]
    v = psi * x + np.sqrt(1.0 - psi * psi) * y
    vals = np.asarray(f(np.broadcast_to(x, v.shape), v), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise NumericalDomainError("integrand is not finite on the quadrature nodes")
    return float(np.sum(rule.outer_weights * vals))


def clamp_correlation(psi: np.ndarray) -> tuple[np.ndarray, int]:
    """Clip correlations into [-1, 1]; returns the clipped array and how many
    entries had to be moved."""
    psi = np.asarray(psi, dtype=float)
    n_out = int(np.count_nonzero(np.abs(psi) > 1.0))
    return np.clip(psi, -1.0, 1.0), n_out


def _check_symmetric(matrix: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgument(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if a.size and np.max(np.abs(a - a.T)) > tol * scale:
        raise InvalidArgument("matrix is not symmetric")
    return a


def nearest_psd(matrix: np.ndarray) -> np.ndarray:
    """Project a symmetric matrix onto the PSD cone by clipping negative
    eigenvalues (the Frobenius-nearest PSD matrix)."""
    a = _check_symmetric(matrix)
    lam, vec = np.linalg.eigh(0.5 * (a + a.T))
    if lam.size == 0 or lam[0] >= 0.0:
        return a.copy()
    lam = np.clip(lam, 0.0, None)
    out = (vec * lam) @ vec.T
    return 0.5 * (out + out.T)


def sym_eigvals(matrix: np.ndarray) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, sorted in descending order."""
    a = _check_symmetric(matrix)
    return np.linalg.eigvalsh(0.5 * (a + a.T))[::-1]


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by a master seed and a
    stream id. Children derived with :meth:`child` are statistically
    independent of their parent and of each other."""

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgument("seed must be a 64-bit unsigned integer")
        if not 0 <= int(self.stream_id) < 2**64:
            raise InvalidArgument("stream id must be a 64-bit unsigned integer")

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + (int(index),))

    def stream(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, int(stream_id), self.path)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),) + self.path)
        return np.random.Generator(np.random.PCG64(ss))
