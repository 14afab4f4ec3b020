"""Random deep networks with Gaussian weights and the correlated Gaussian
input ensemble."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from deepmf.errors import InvalidArgument
from deepmf.numerics import STREAM_BIASES, STREAM_INPUTS, STREAM_WEIGHTS, RngStream


@dataclass(frozen=True)
class DeepNetConfig:
    """Width ``N``, depth ``d``; weights ~ N(0, g/N), biases ~ N(0, sigma_b).

    ``sigma_b`` is a variance, not a standard deviation.
    """

    width: int
    depth: int
    g: float = 0.8
    sigma_b: float = 0.1
    activation: str = "tanh"

    def __post_init__(self):
        if self.width < 2:
            raise InvalidArgument(f"width must be >= 2, got {self.width}")
        if self.depth < 1:
            raise InvalidArgument(f"depth must be >= 1, got {self.depth}")
        if not self.g > 0:
            raise InvalidArgument(f"g must be positive, got {self.g}")
        if not self.sigma_b >= 0:
            raise InvalidArgument(f"sigma_b must be nonnegative, got {self.sigma_b}")
        if self.activation != "tanh":
            raise InvalidArgument("only the tanh activation is supported")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class LayerWeights:
    """Weights into one layer: row ``i`` of ``w`` holds the incoming
    connections of unit ``i``; ``b`` is the bias vector."""

    w: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise InvalidArgument(f"inconsistent shapes: w {w.shape}, b {b.shape}")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)

    @property
    def n_out(self) -> int:
        return self.w.shape[0]

    @property
    def n_in(self) -> int:
        return self.w.shape[1]


@dataclass(frozen=True)
class InputEnsembleConfig:
    """Zero-mean Gaussian inputs with unit variances and off-diagonal
    covariances r_ij / sqrt(N), r_ij ~ U[-rho, rho].

    ``rho_ratio`` is rho / sqrt(N), so off-diagonals lie in
    [-rho_ratio, rho_ratio] whatever the width.
    """

    width: int
    rho_ratio: float = 0.05

    def __post_init__(self):
        if self.width < 2:
            raise InvalidArgument(f"width must be >= 2, got {self.width}")
        if not self.rho_ratio >= 0:
            raise InvalidArgument(f"rho_ratio must be nonnegative, got {self.rho_ratio}")

    @property
    def rho(self) -> float:
        return self.rho_ratio * np.sqrt(self.width)

    @property
    def sigma0(self) -> float:
        """Expected covariance strength of the ensemble, E[C_ij^2]."""
        return self.rho_ratio**2 / 3.0

    def to_dict(self) -> dict:
        return asdict(self)


def sample_deep_net(config: DeepNetConfig, rng: RngStream) -> list[LayerWeights]:
    n = config.width
    wgen = rng.stream(STREAM_WEIGHTS).generator()
    bgen = rng.stream(STREAM_BIASES).generator()
    w_std = np.sqrt(config.g / n)
    b_std = np.sqrt(config.sigma_b)
    layers = []
    for _ in range(config.depth):
        w = wgen.normal(0.0, 1.0, size=(n, n)) * w_std
        b = bgen.normal(0.0, 1.0, size=n) * b_std
        layers.append(LayerWeights(w, b))
    return layers


def sample_input_covariance(config: InputEnsembleConfig, rng: RngStream) -> np.ndarray:
    n = config.width
    gen = rng.stream(STREAM_INPUTS).generator()
    iu = np.triu_indices(n, k=1)
    r = gen.uniform(-config.rho, config.rho, size=iu[0].size)
    c = np.eye(n)
    c[iu] = r / np.sqrt(n)
    c[(iu[1], iu[0])] = c[iu]
    return c
