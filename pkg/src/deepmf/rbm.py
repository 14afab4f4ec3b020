"""Restricted Boltzmann machines with +/-1 units: block Gibbs sampling,
CD-1 learning, greedy layer-wise DBN training, exact enumeration."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from deepmf.ensembles import LayerWeights
from deepmf.errors import InvalidArgument
from deepmf.numerics import STREAM_BIASES, STREAM_GIBBS, STREAM_WEIGHTS, RngStream

log = logging.getLogger(__name__)

MAX_ENUM_VISIBLE = 20


@dataclass(frozen=True, eq=False)
class RbmModel:
    """Energy E(s, v) = -sum_{ia} s_a w_ia v_i - sum_a bh_a s_a - sum_i bv_i v_i.

    ``w`` is ``n_visible x n_hidden``.
    """

    w: np.ndarray
    bv: np.ndarray
    bh: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        bv = np.asarray(self.bv, dtype=float)
        bh = np.asarray(self.bh, dtype=float)
        if w.ndim != 2 or bv.shape != (w.shape[0],) or bh.shape != (w.shape[1],):
            raise InvalidArgument(f"inconsistent shapes: w {w.shape}, bv {bv.shape}, bh {bh.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(bv)) and np.all(np.isfinite(bh))):
            raise InvalidArgument("RBM parameters must be finite")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "bv", bv)
        object.__setattr__(self, "bh", bh)

    @property
    def n_visible(self) -> int:
        return self.w.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.w.shape[1]

    def as_layer(self) -> LayerWeights:
        """The deterministic visible -> hidden-mean map as a network layer."""
        return LayerWeights(self.w.T.copy(), self.bh.copy())

    @classmethod
    def zeros(cls, n_visible: int, n_hidden: int) -> "RbmModel":
        return cls(np.zeros((n_visible, n_hidden)), np.zeros(n_visible), np.zeros(n_hidden))


def random_rbm(n_visible: int, n_hidden: int, g: float, sigma_b: float, rng: RngStream) -> RbmModel:
    """Weights ~ N(0, g / n_visible), both bias vectors ~ N(0, sigma_b)."""
    wgen = rng.stream(STREAM_WEIGHTS).generator()
    bgen = rng.stream(STREAM_BIASES).generator()
    w = wgen.normal(size=(n_visible, n_hidden)) * math.sqrt(g / n_visible)
    bv = bgen.normal(size=n_visible) * math.sqrt(sigma_b)
    bh = bgen.normal(size=n_hidden) * math.sqrt(sigma_b)
    return RbmModel(w, bv, bh)


def hidden_field(model: RbmModel, v) -> np.ndarray:
    return np.asarray(v, dtype=float) @ model.w + model.bh


def visible_field(model: RbmModel, s) -> np.ndarray:
    return np.asarray(s, dtype=float) @ model.w.T + model.bv


def _prob_plus(theta):
    # e^theta / (2 cosh theta), written to stay exact under saturation
    return 0.5 * (1.0 + np.tanh(theta))


def hidden_conditional(model: RbmModel, v) -> np.ndarray:
    """p(s_a = +1 | v) for every hidden unit (rows of ``v`` are samples)."""
    return _prob_plus(hidden_field(model, v))


def visible_conditional(model: RbmModel, s) -> np.ndarray:
    """p(v_i = +1 | s)."""
    return _prob_plus(visible_field(model, s))


def _spins(p: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    return np.where(gen.random(p.shape) < p, 1.0, -1.0)


def gibbs_generate(
    model: RbmModel,
    n_samples: int,
    rng: RngStream,
    burn_in: int = 1000,
    thinning: int = 10,
    chain_length: int = 10_000,
) -> np.ndarray:
    """Visible samples from the RBM marginal by block Gibbs sampling.

    Independent chains each contribute ``chain_length`` samples (the last
    chain may contribute fewer); all chains advance together.
    """
    if n_samples < 1:
        raise InvalidArgument("need at least one sample")
    n_chains = -(-n_samples // chain_length)
    per_chain = -(-n_samples // n_chains)
    gen = rng.stream(STREAM_GIBBS).generator()
    v = np.where(gen.random((n_chains, model.n_visible)) < 0.5, 1.0, -1.0)

    def sweep(v):
        s = _spins(hidden_conditional(model, v), gen)
        return _spins(visible_conditional(model, s), gen)

    for _ in range(burn_in):
        v = sweep(v)
    out = np.empty((per_chain, n_chains, model.n_visible))
    for k in range(per_chain):
        for _ in range(thinning):
            v = sweep(v)
        out[k] = v
    # chain-major order so each chain's samples stay contiguous
    return out.transpose(1, 0, 2).reshape(-1, model.n_visible)[:n_samples]


@dataclass(frozen=True)
class TrainConfig:
    """CD-1 hyperparameters; the learning rate at epoch t (1-based) is
    ``lr0 / ceil(t / lr_period)``."""

    lr0: float = 0.12
    lr_period: int = 10
    weight_decay: float = 0.0025
    batch_size: int = 150
    max_epochs: int = 50
    min_epochs: int = 1
    patience: int = 5
    min_improvement: float = 1e-4
    init_scale: float = 0.01
    cd_steps: int = 1

    def __post_init__(self):
        if not self.lr0 > 0:
            raise InvalidArgument("lr0 must be positive")
        if self.batch_size < 1:
            raise InvalidArgument("batch size must be >= 1")
        if self.max_epochs < 1:
            raise InvalidArgument("max_epochs must be >= 1")
        if self.cd_steps != 1:
            raise InvalidArgument("only CD-1 is supported")

    def learning_rate(self, epoch: int) -> float:
        return self.lr0 / math.ceil(epoch / self.lr_period)

    def validate_dataset(self, n_examples: int):
        if n_examples < self.batch_size:
            raise InvalidArgument(f"dataset size {n_examples} is smaller than the batch size {self.batch_size}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainLog:
    initial_error: float = float("nan")
    errors: list[float] = field(default_factory=list)
    dims: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)
    snapshots: dict[int, RbmModel] = field(default_factory=dict)
    stalled: bool = False
    stopped_early: bool = False

    @property
    def epochs(self) -> int:
        return len(self.errors)


def cd1_gradients(model: RbmModel, batch: np.ndarray, gen: np.random.Generator):
    """Data-minus-model statistics for one minibatch.

    Data side uses the exact hidden means tanh(theta). Model side takes one
    Gibbs step: binary hidden sample, mean-field visible reconstruction,
    then a binary hidden sample paired with the reconstruction.
    """
    v0 = np.asarray(batch, dtype=float)
    h0_mean = np.tanh(hidden_field(model, v0))
    h0 = _spins(0.5 * (1.0 + h0_mean), gen)
    v1 = np.tanh(visible_field(model, h0))
    h1 = _spins(hidden_conditional(model, v1), gen)
    m = v0.shape[0]
    dw = (v0.T @ h0_mean - v1.T @ h1) / m
    dbv = v0.mean(axis=0) - v1.mean(axis=0)
    dbh = h0_mean.mean(axis=0) - h1.mean(axis=0)
    return dw, dbv, dbh


def apply_update(model: RbmModel, grads, lr: float, weight_decay: float) -> RbmModel:
    """Gradient ascent step with l2 decay on the weights only."""
    dw, dbv, dbh = grads
    return RbmModel(
        model.w + lr * (dw - weight_decay * model.w),
        model.bv + lr * dbv,
        model.bh + lr * dbh,
    )


def cd1_update(model: RbmModel, batch, config: TrainConfig, rng, lr: float | None = None) -> RbmModel:
    """One CD-1 step; ``rng`` is an RngStream or a numpy Generator."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    lr = config.lr0 if lr is None else lr
    return apply_update(model, cd1_gradients(model, batch, gen), lr, config.weight_decay)


def reconstruct(model: RbmModel, batch) -> np.ndarray:
    h = np.tanh(hidden_field(model, batch))
    return np.tanh(visible_field(model, h))


def reconstruction_error(model: RbmModel, batch) -> float:
    """Mean over the batch of ||v' - v||^2 for the mean-field reconstruction."""
    v = np.atleast_2d(np.asarray(batch, dtype=float))
    r = reconstruct(model, v)
    return float(np.mean(np.sum((r - v) ** 2, axis=1)))


def init_rbm(n_visible: int, n_hidden: int, config: TrainConfig, gen: np.random.Generator) -> RbmModel:
    w = gen.normal(size=(n_visible, n_hidden)) * config.init_scale
    return RbmModel(w, np.zeros(n_visible), np.zeros(n_hidden))


def train_rbm(
    data: np.ndarray,
    n_hidden: int,
    config: TrainConfig,
    rng: RngStream,
    dim_probe: Callable[[RbmModel], float] | None = None,
    snapshot_every: int = 0,
) -> tuple[RbmModel, TrainLog]:
    """CD-1 training with uniform-random minibatches.

    Stops once the reconstruction error has not improved by
    ``min_improvement`` for ``patience`` epochs, or at ``max_epochs``.
    ``dim_probe`` is evaluated on the model after every epoch (and on the
    initial model) and stored in ``log.dims``.
    """
    data = np.asarray(data, dtype=float)
    if data.size and np.max(np.abs(data)) > 1.0:
        raise InvalidArgument("training data must lie in [-1, 1]")
    m, n_visible = data.shape
    config.validate_dataset(m)
    gen = rng.generator()
    model = init_rbm(n_visible, n_hidden, config, gen)
    log_ = TrainLog(initial_error=reconstruction_error(model, data))
    if dim_probe is not None:
        log_.dims.append(dim_probe(model))
    best = log_.initial_error
    since_best = 0
    n_batches = m // config.batch_size
    for epoch in range(1, config.max_epochs + 1):
        lr = config.learning_rate(epoch)
        order = gen.permutation(m)
        for k in range(n_batches):
            idx = order[k * config.batch_size : (k + 1) * config.batch_size]
            model = apply_update(model, cd1_gradients(model, data[idx], gen), lr, config.weight_decay)
        err = reconstruction_error(model, data)
        log_.errors.append(err)
        log_.learning_rates.append(lr)
        if dim_probe is not None:
            log_.dims.append(dim_probe(model))
        if snapshot_every and epoch % snapshot_every == 0:
            log_.snapshots[epoch] = model
        if err < best - config.min_improvement:
            best = err
            since_best = 0
        else:
            since_best += 1
        if since_best >= config.patience and epoch >= config.min_epochs:
            log_.stopped_early = True
            break
    if log_.errors and log_.errors[-1] >= log_.initial_error:
        log_.stalled = True
        log.warning("reconstruction error never dropped below its initial value")
    return model, log_


def mean_activity(model: RbmModel, v) -> np.ndarray:
    return np.tanh(hidden_field(model, v))


def train_dbn(
    layer_sizes: list[int],
    data: np.ndarray,
    config: TrainConfig,
    rng: RngStream,
    dim_probes: list[Callable[[RbmModel], float] | None] | None = None,
) -> tuple[list[RbmModel], list[TrainLog]]:
    """Greedy bottom-up training; each RBM sees the mean hidden activity
    of the frozen RBM below it."""
    models, logs = [], []
    x = np.asarray(data, dtype=float)
    for l, n_hidden in enumerate(layer_sizes):
        probe = dim_probes[l] if dim_probes is not None else None
        model, tlog = train_rbm(x, n_hidden, config, rng.child(l), dim_probe=probe)
        models.append(model)
        logs.append(tlog)
        x = mean_activity(model, x)
    return models, logs


def all_spin_configs(n: int) -> np.ndarray:
    return np.array(list(itertools.product((-1.0, 1.0), repeat=n)))


def visible_log_weights(model: RbmModel, v: np.ndarray) -> np.ndarray:
    """log of prod_a 2 cosh(theta_a) prod_i e^{v_i bv_i}, without Z."""
    theta = hidden_field(model, v)
    logcosh = np.abs(theta) + np.log1p(np.exp(-2.0 * np.abs(theta)))
    return logcosh.sum(axis=1) + v @ model.bv


def visible_distribution(model: RbmModel) -> tuple[np.ndarray, np.ndarray]:
    if model.n_visible > MAX_ENUM_VISIBLE:
        raise InvalidArgument(f"enumeration is limited to {MAX_ENUM_VISIBLE} visible units")
    v = all_spin_configs(model.n_visible)
    lw = visible_log_weights(model, v)
    p = np.exp(lw - lw.max())
    return v, p / p.sum()


def exact_moments(model: RbmModel) -> tuple[np.ndarray, np.ndarray]:
    """Exact mean and connected covariance of the visible marginal."""
    v, p = visible_distribution(model)
    mean = p @ v
    second = (v * p[:, None]).T @ v
    cov = second - np.outer(mean, mean)
    return mean, 0.5 * (cov + cov.T)
