"""End-to-end experiment pipelines behind the command line tool.

Every run writes into its own directory::

    <out>/manifest.json    resolved config, seed, package version
    <out>/metrics.csv      per-layer observables
    <out>/spectra/         eigenvalues and histogram / MP tables
    <out>/models/          network or RBM snapshots
    <out>/comparisons/     theory-vs-sampling tables
"""

from __future__ import annotations

import dataclasses
import json
import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from deepmf import __version__, io
from deepmf.bethe import SolverConfig, solve
from deepmf.ensembles import DeepNetConfig, InputEnsembleConfig, sample_deep_net, sample_input_covariance
from deepmf.errors import DivergenceError, InvalidArgument
from deepmf.largen import dim_formulas, operating_point, trajectory
from deepmf.meanfield import LayerMoments, propagate_chain, propagate_moments
from deepmf.metrics import (
    covariance_strength,
    dimensionality,
    fit_mp_scale,
    metrics_report,
    mp_bin_mass,
    mp_density,
    mp_total_variation,
    spectrum_report,
    wishart_reference,
)
from deepmf.montecarlo import compare, sample_inputs, simulate_moments
from deepmf.numerics import DEFAULT_KIND, RngStream, STREAM_TRAINING, quadrature_rule, sym_eigvals
from deepmf.rbm import TrainConfig, gibbs_generate, mean_activity, random_rbm, train_dbn

log = logging.getLogger(__name__)

KINDS = ("random-net", "largen-sweep", "dbn", "spectrum", "mc-verify")

METRICS_HEADER = ["width", "realization", "layer", "D", "D_norm", "Sigma", "N_Sigma", "K1", "K2"]
MC_HEADER = [
    "width",
    "realization",
    "layer",
    "rmse_offdiag",
    "median_stderr",
    "rmse_over_stderr",
    "D_theory",
    "D_empirical",
    "D_rel_diff",
]
LARGEN_HEADER = [
    "g",
    "sigma_b",
    "layer",
    "Q",
    "K1",
    "Sigma",
    "N_Sigma",
    "D_norm",
    "additive_term",
    "N_Sigma_star",
    "divergent",
]
DBN_METRICS_HEADER = [
    "layer",
    "D_theory",
    "D_empirical",
    "Sigma_theory",
    "Sigma_empirical",
    "N_Sigma_theory",
    "K1_theory",
    "K1_empirical",
    "corr_slope",
    "cov_slope",
]
RECON_HEADER = ["layer", "epoch", "learning_rate", "reconstruction_error"]
DIMS_HEADER = ["layer", "epoch", "D"]
SCATTER_HEADER = ["layer", "i", "j", "corr_theory", "corr_empirical", "cov_theory", "cov_empirical"]
SPECTRUM_HEADER = ["bin_left", "bin_right", "density", "mp_density_mid", "mp_bin_density"]


@dataclass
class ExperimentConfig:
    kind: str = "random-net"
    seed: int = 0
    out: str = ""
    realizations: int = 10
    samples: int = 100_000
    quad_order: int | None = None
    quad_kind: str = DEFAULT_KIND
    # random networks
    widths: list[int] = field(default_factory=lambda: [100, 150])
    depth: int = 5
    g: float = 0.8
    sigma_b: float = 0.1
    rho_ratio: float = 0.05
    mc_verify: bool = False
    mc_realizations: int = 1
    # large-N sweep
    g_grid: list[float] = field(default_factory=lambda: [0.2, 0.4, 0.6, 0.8, 1.0, 1.2])
    sigma_b_grid: list[float] = field(default_factory=lambda: [0.0, 0.05, 0.1, 0.5])
    largen_width: int = 100
    largen_depth: int = 10
    # DBN
    dbn_width: int = 150
    dbn_layers: int = 3
    n_examples: int = 60_000
    burn_in: int = 1000
    thinning: int = 10
    dim_probe_layer: int = 1
    train: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    # spectra
    spectrum_source: str = "random-net"
    spectrum_layers: list[int] = field(default_factory=list)
    spectrum_instances: int = 100
    spectrum_width: int = 100
    wishart_width: int = 400
    spectrum_bins: int = 40

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgument("seed must be a 64-bit unsigned integer")
        if self.realizations < 1:
            raise InvalidArgument("realizations must be >= 1")
        if self.samples < 2:
            raise InvalidArgument("samples must be >= 2")
        self.rule()
        if self.spectrum_source not in ("random-net", "wishart", "dbn"):
            raise InvalidArgument(f"unknown spectrum source {self.spectrum_source!r}")
        # validate nested sections early so bad configs fail before any work
        self.train_config()
        self.solver_config()
        if self.kind in ("dbn",) or (self.kind == "spectrum" and self.spectrum_source == "dbn"):
            self.train_config().validate_dataset(self.n_examples)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidArgument(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        data = json.loads(Path(path).read_text()) if path else {}
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(data)

    def rule(self):
        return quadrature_rule(self.quad_order, self.quad_kind)

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.train)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver)

    def out_dir(self) -> Path:
        return Path(self.out or f"runs/{self.kind}-seed{self.seed}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def write_run_manifest(out: Path, config: ExperimentConfig, summary: dict, elapsed: float) -> Path:
    return io.write_manifest(
        out,
        {
            "kind": config.kind,
            "seed": config.seed,
            "config": config.to_dict(),
            "resolved": {
                "quadrature": {"kind": config.rule().kind, "order": config.rule().order},
                "train": config.train_config().to_dict(),
                "solver": config.solver_config().to_dict(),
            },
            "summary": summary,
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "elapsed_seconds": elapsed,
        },
    )


def _metric_row(width, realization, layer, cov):
    rep = metrics_report(cov)
    return [width, realization, layer, rep.dim, rep.dim_norm, rep.sigma, rep.n_sigma, rep.k1, rep.k2]


def _random_realization(width: int, config: ExperimentConfig, rng: RngStream):
    net = sample_deep_net(DeepNetConfig(width, config.depth, config.g, config.sigma_b), rng)
    c0 = sample_input_covariance(InputEnsembleConfig(width, config.rho_ratio), rng)
    return net, c0


def realization_stream(config: ExperimentConfig, width: int, realization: int) -> RngStream:
    return RngStream(config.seed).child(width).child(realization)


def run_random_net(config: ExperimentConfig) -> dict:
    """Mean-field chains for many random networks, optionally checked by
    Monte Carlo sampling."""
    t0 = time.perf_counter()
    out = config.out_dir()
    rule = config.rule()
    rows, mc_rows = [], []
    monotone = True
    for width in config.widths:
        for r in range(config.realizations):
            rng = realization_stream(config, width, r)
            net, c0 = _random_realization(width, config, rng)
            chain = propagate_chain(net, LayerMoments.centered(c0), rule)
            dims = []
            for l, mo in enumerate(chain):
                rows.append(_metric_row(width, r, l, mo.cov))
                dims.append(rows[-1][3])
            monotone &= all(b < a for a, b in zip(dims, dims[1:]))
            if r == 0:
                io.save_network(out / "models" / f"net_w{width}_r{r}", net, {"width": width, "realization": r})
            if config.mc_verify and r < config.mc_realizations:
                mc_rows.extend(_mc_compare(out, width, r, net, c0, chain, config, rng))
    io.write_rows(out / "metrics.csv", METRICS_HEADER, rows)
    if mc_rows:
        io.write_rows(out / "comparisons" / "mc.csv", MC_HEADER, mc_rows)
    summary = {"layers_per_realization": config.depth + 1, "dimensionality_decreasing": bool(monotone)}
    if mc_rows:
        summary["max_rmse_over_stderr"] = max(r[5] for r in mc_rows)
        summary["max_dim_rel_diff"] = max(r[8] for r in mc_rows)
    write_run_manifest(out, config, summary, time.perf_counter() - t0)
    return summary


def _mc_compare(out, width, r, net, c0, chain, config, rng):
    batch = sample_inputs(c0, config.samples, rng)
    empirical = simulate_moments(net, batch)
    rows = []
    for l, (th, em) in enumerate(zip(chain, empirical)):
        cmp_ = compare(th, em, config.samples)
        d = cmp_.to_dict()
        rows.append(
            [width, r, l, d["rmse_offdiag"], d["median_stderr"], d["rmse_over_stderr"], d["dim_theory"], d["dim_empirical"], d["dim_rel_diff"]]
        )
        io.write_manifest(out / "comparisons" / f"mc_w{width}_r{r}_l{l}", {"kind": "moment-comparison", **d})
    return rows


def run_mc_verify(config: ExperimentConfig) -> dict:
    """Monte Carlo check of the mean-field chain for ``mc_realizations``
    networks per width."""
    t0 = time.perf_counter()
    out = config.out_dir()
    rule = config.rule()
    rows, mc_rows = [], []
    for width in config.widths:
        for r in range(config.mc_realizations):
            rng = realization_stream(config, width, r)
            net, c0 = _random_realization(width, config, rng)
            chain = propagate_chain(net, LayerMoments.centered(c0), rule)
            rows.extend(_metric_row(width, r, l, mo.cov) for l, mo in enumerate(chain))
            mc_rows.extend(_mc_compare(out, width, r, net, c0, chain, config, rng))
    io.write_rows(out / "metrics.csv", METRICS_HEADER, rows)
    io.write_rows(out / "comparisons" / "mc.csv", MC_HEADER, mc_rows)
    summary = {
        "max_rmse_over_stderr": max(r[5] for r in mc_rows),
        "max_dim_rel_diff": max(r[8] for r in mc_rows),
    }
    write_run_manifest(out, config, summary, time.perf_counter() - t0)
    return summary


def largen_rows(config: ExperimentConfig) -> list[list]:
    rule = config.rule()
    sigma0 = config.rho_ratio**2 / 3.0
    n = config.largen_width
    rows = []
    for g in config.g_grid:
        for sb in config.sigma_b_grid:
            try:
                nss = operating_point(g, sb, rule)
                divergent = False
            except DivergenceError:
                nss, divergent = "", True
            for st in trajectory(g, sb, n, config.largen_depth, sigma0, rule=rule):
                _, _, add = dim_formulas(st, n)
                rows.append([g, sb, st.layer, st.q, st.k1, st.sigma, n * st.sigma, st.dim_norm, add, nss, divergent])
    return rows


def run_largen_sweep(config: ExperimentConfig) -> dict:
    t0 = time.perf_counter()
    out = config.out_dir()
    rows = largen_rows(config)
    io.write_rows(out / "metrics.csv", LARGEN_HEADER, rows)
    monotone = True
    for g in config.g_grid:
        for sb in config.sigma_b_grid:
            dn = [r[7] for r in rows if r[0] == g and r[1] == sb]
            monotone &= all(b < a for a, b in zip(dn, dn[1:]))
    summary = {
        "grid_points": len(config.g_grid) * len(config.sigma_b_grid),
        "divergent_points": len({(r[0], r[1]) for r in rows if r[10]}),
        "dim_norm_decreasing": bool(monotone),
    }
    write_run_manifest(out, config, summary, time.perf_counter() - t0)
    return summary


def excess_kurtosis(x) -> float:
    x = np.asarray(x, dtype=float)
    z = x - x.mean()
    var = np.mean(z * z)
    return float(np.mean(z**4) / (var * var) - 3.0)


def mp_deviation(eigenvalues, scale: float | None = None, low_frac: float = 0.1, tail_frac: float = 0.5) -> dict:
    """Mass near zero and in the upper tail relative to the MP law with the
    edge matched to the largest eigenvalue."""
    lam = np.clip(np.asarray(eigenvalues, dtype=float), 0.0, None)
    scale = fit_mp_scale(lam) if scale is None else scale
    from deepmf.metrics import mp_cdf

    top = 4.0 * scale
    low_emp = float(np.mean(lam <= low_frac * top))
    tail_emp = float(np.mean(lam >= tail_frac * top))
    low_mp = float(mp_cdf(scale, low_frac * top))
    tail_mp = float(1.0 - mp_cdf(scale, tail_frac * top))
    return {
        "mp_scale": scale,
        "low_mass_empirical": low_emp,
        "low_mass_mp": low_mp,
        "tail_mass_empirical": tail_emp,
        "tail_mass_mp": tail_mp,
        "excess_near_zero": low_emp > low_mp,
        "tail_deficit": tail_emp < tail_mp,
    }


def _pooled_report(eig_lists, bins):
    """Pool instances after rescaling each to its own MP edge so that the
    shape, not the overall scale, is compared."""
    pooled = np.concatenate([e / (4.0 * fit_mp_scale(e)) for e in eig_lists])
    return spectrum_report(pooled, bins=bins, mp_scale=0.25)


def write_spectrum(directory: Path, name: str, eig_lists: list[np.ndarray], bins: int) -> dict:
    directory.mkdir(parents=True, exist_ok=True)
    n = max(len(e) for e in eig_lists)
    cols = [np.pad(np.sort(e)[::-1], (0, n - len(e)), constant_values=np.nan) for e in eig_lists]
    io.write_rows(
        directory / f"{name}_eigenvalues.csv",
        [f"instance_{k}" for k in range(len(cols))],
        np.column_stack(cols).tolist(),
    )
    rep = _pooled_report(eig_lists, bins)
    edges = rep.bin_edges
    mid = 0.5 * (edges[1:] + edges[:-1])
    width = np.diff(edges)
    io.write_rows(
        directory / f"{name}_histogram.csv",
        SPECTRUM_HEADER,
        zip(edges[:-1], edges[1:], rep.density, mp_density(rep.mp_scale, mid), mp_bin_mass(rep) / width),
    )
    dev = mp_deviation(rep.eigenvalues, rep.mp_scale)
    dev["total_variation"] = mp_total_variation(rep)
    dev["excess_kurtosis"] = excess_kurtosis(rep.eigenvalues)
    return dev


def random_net_spectra(config: ExperimentConfig, layers: list[int]) -> dict[int, list[np.ndarray]]:
    rule = config.rule()
    width = config.spectrum_width
    spectra = {l: [] for l in layers}
    for r in range(config.spectrum_instances):
        rng = realization_stream(config, width, r)
        net, c0 = _random_realization(width, config, rng)
        chain = propagate_chain(net, LayerMoments.centered(c0), rule)
        for l in layers:
            spectra[l].append(sym_eigvals(chain[l].cov))
    return spectra


def run_spectrum(config: ExperimentConfig) -> dict:
    t0 = time.perf_counter()
    out = config.out_dir()
    sdir = out / "spectra"
    summary = {}
    wish = wishart_reference(config.wishart_width, config.wishart_width, 1.0, RngStream(config.seed).child(0))
    summary["wishart"] = {
        "total_variation": mp_total_variation(wish),
        "lambda_max": float(wish.eigenvalues[0]),
        "lambda_plus": wish.lambda_plus,
    }
    write_spectrum(sdir, "wishart", [wish.eigenvalues], config.spectrum_bins)
    if config.spectrum_source == "random-net":
        layers = config.spectrum_layers or [config.depth]
        for l, eigs in random_net_spectra(config, layers).items():
            summary[f"layer_{l}"] = write_spectrum(sdir, f"layer_{l}", eigs, config.spectrum_bins)
    elif config.spectrum_source == "dbn":
        result = dbn_pipeline(config)
        layers = config.spectrum_layers or list(range(1, config.dbn_layers + 1))
        for l in layers:
            summary[f"layer_{l}"] = write_spectrum(
                sdir, f"layer_{l}", [sym_eigvals(result["theory"][l].cov)], config.spectrum_bins
            )
    rows = [[k, *(v.get(c, "") for c in ("total_variation", "excess_near_zero", "tail_deficit", "excess_kurtosis"))] for k, v in summary.items()]
    io.write_rows(out / "metrics.csv", ["spectrum", "total_variation", "excess_near_zero", "tail_deficit", "excess_kurtosis"], rows)
    write_run_manifest(out, config, summary, time.perf_counter() - t0)
    return summary


def correlation_matrix(c: np.ndarray) -> np.ndarray:
    """C_ij / sqrt(C_ii C_jj); units with zero variance get zero rows."""
    c = np.asarray(c, dtype=float)
    s = np.sqrt(np.clip(np.diag(c), 0.0, None))
    inv = np.divide(1.0, s, out=np.zeros_like(s), where=s > 0)
    return c * np.outer(inv, inv)


def regression_slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


def dbn_pipeline(config: ExperimentConfig) -> dict:
    """Random-RBM data, Bethe input moments, layer-wise DBN training and
    mean-field propagation through the trained layers."""
    n = config.dbn_width
    root = RngStream(config.seed)
    generator = random_rbm(n, n, config.g, config.sigma_b, root.child(0))
    data = gibbs_generate(generator, config.n_examples, root.child(1), burn_in=config.burn_in, thinning=config.thinning)
    cavity = solve(generator, config.solver_config(), root.child(2))
    if not cavity.converged:
        log.warning("Bethe solve of the data generator did not converge (residual %.3e)", cavity.residual)
    rule = config.rule()
    inputs = cavity.moments()

    def probe(model):
        return dimensionality(propagate_moments(model.as_layer(), inputs, rule).cov)[0]

    probes = [probe if l + 1 == config.dim_probe_layer else None for l in range(config.dbn_layers)]
    models, logs = train_dbn([n] * config.dbn_layers, data, config.train_config(), root.stream(STREAM_TRAINING), probes)
    theory = propagate_chain([m.as_layer() for m in models], inputs, rule)
    empirical = [np.cov(data.T)]
    x = data
    for m in models:
        x = mean_activity(m, x)
        empirical.append(np.cov(x.T))
    return {
        "generator": generator,
        "cavity": cavity,
        "models": models,
        "logs": logs,
        "theory": theory,
        "empirical": empirical,
        "data": data,
    }


def dbn_analysis(res: dict) -> tuple[list, list, dict]:
    """Per-layer metric rows, scatter rows (Fig. 3b data) and a summary for
    the output of :func:`dbn_pipeline`."""
    n = res["theory"][0].width
    off = ~np.eye(n, dtype=bool)
    iu = np.triu_indices(n, k=1)
    metric_rows, scatter_rows = [], []
    pooled_th, pooled_em = [], []
    for l, (th, em) in enumerate(zip(res["theory"], res["empirical"])):
        rt, re_ = correlation_matrix(th.cov), correlation_matrix(em)
        pooled_th.append(rt[off])
        pooled_em.append(re_[off])
        metric_rows.append(
            [
                l,
                dimensionality(th.cov)[0],
                dimensionality(em)[0],
                covariance_strength(th.cov),
                covariance_strength(em),
                n * covariance_strength(th.cov),
                float(np.mean(np.diag(th.cov))),
                float(np.mean(np.diag(em))),
                regression_slope(rt[off], re_[off]),
                regression_slope(th.cov[off], em[off]),
            ]
        )
        scatter_rows.extend([l, i, j, rt[i, j], re_[i, j], th.cov[i, j], em[i, j]] for i, j in zip(*iu))
    logs = res["logs"]
    summary = {
        "pooled_corr_slope": regression_slope(np.concatenate(pooled_th), np.concatenate(pooled_em)),
        "layer_corr_slopes": [r[8] for r in metric_rows],
        "layer_dims_theory": [r[1] for r in metric_rows],
        "layer_dims_empirical": [r[2] for r in metric_rows],
        "reconstruction_decreased": [bool(t.errors and t.errors[-1] < t.initial_error) for t in logs],
        "stalled_layers": [l for l, t in enumerate(logs, start=1) if t.stalled],
        "epochs": [t.epochs for t in logs],
        "bethe_converged": bool(res["cavity"].converged),
        "bethe_iterations": res["cavity"].iterations,
        "bethe_raw_asymmetry": res["cavity"].asymmetry,
    }
    return metric_rows, scatter_rows, summary


def run_dbn(config: ExperimentConfig) -> dict:
    t0 = time.perf_counter()
    out = config.out_dir()
    res = dbn_pipeline(config)
    metric_rows, scatter_rows, summary = dbn_analysis(res)
    io.write_rows(out / "metrics.csv", DBN_METRICS_HEADER, metric_rows)
    io.write_rows(out / "comparisons" / "scatter.csv", SCATTER_HEADER, scatter_rows)
    recon, dims = [], []
    for l, tlog in enumerate(res["logs"], start=1):
        recon.append([l, 0, "", tlog.initial_error])
        recon.extend([l, e, lr, err] for e, (lr, err) in enumerate(zip(tlog.learning_rates, tlog.errors), start=1))
        dims.extend([l, e, d] for e, d in enumerate(tlog.dims))
    io.write_rows(out / "reconstruction.csv", RECON_HEADER, recon)
    io.write_rows(out / "dims.csv", DIMS_HEADER, dims)
    io.save_rbm(out / "models" / "generator", res["generator"], {"role": "data generator"})
    for l, m in enumerate(res["models"], start=1):
        io.save_rbm(out / "models" / f"layer_{l}", m, {"layer": l})
    io.save_moments(
        out / "models" / "theory_moments",
        res["theory"],
        {"source": "bethe", "asymmetry": res["cavity"].asymmetry, "symmetrized": res["cavity"].symmetrized},
    )
    write_run_manifest(out, config, summary, time.perf_counter() - t0)
    return summary


RUNNERS = {
    "random-net": run_random_net,
    "largen-sweep": run_largen_sweep,
    "dbn": run_dbn,
    "spectrum": run_spectrum,
    "mc-verify": run_mc_verify,
}


def run(config: ExperimentConfig) -> dict:
    return RUNNERS[config.kind](config)
