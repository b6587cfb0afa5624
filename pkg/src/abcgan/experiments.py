"""Experiment registry: simulator, observed data and network wiring for each benchmark."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .layers import MLP, ConvSummarizer, Dense, LSTMChain, Module, PriorSpec, orthogonal_init
from .model import AbcGanModel, Approximator, Decoder, Generator, Summarizer, TrainConfig
from .simulators import (N_ATTENDEES, N_CENTERS, N_STRAINS, SimulatorSpec,
                         dcc_features_gutmann, sim_dcc, sim_glm, sim_mixture_normal,
                         sim_mvn, sim_ricker, sim_univariate_normal)
from .simulators.base import derive_seed

# Sub-seed tags derived from the CLI seed.
OBSERVED_STREAM, TRAIN_STREAM, INIT_STREAM, BASELINE_STREAM = 11, 12, 13, 14


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    true_theta: tuple[float, ...] = ()
    prior_lo: tuple[float, ...] = ()
    prior_hi: tuple[float, ...] = ()
    n_observed: int = 1000
    unit_size: int = 1
    options: dict = field(default_factory=dict)


@dataclass
class NetworkConfig:
    summary_dim: int = 10
    noise_dim: int | None = None
    generator_hidden: tuple[int, ...] = (20,)
    approximator_hidden: tuple[int, ...] = ()
    summarizer_hidden: tuple[int, ...] = ()
    decoder_hidden: tuple[int, ...] = ()
    activation: str = "relu"
    init_std: float = 1.0
    generator_init_std: float | None = None
    generator_noise_dim: int = 0
    lstm_units: int = 10
    conv_filters: int = 8
    input_scale: float = 1.0
    summarizer_init: str = "normal"


@dataclass
class BaselineConfig:
    proposals: int = 10000
    quantile: float = 0.01
    epsilon: float | None = None


@dataclass
class ExperimentConfig:
    name: str
    method: str = "abcgan"
    data: DataConfig = field(default_factory=DataConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    posterior_window: int = 1000
    metrics: tuple[str, ...] = ("posterior",)

    @property
    def prior(self) -> PriorSpec:
        return PriorSpec(self.data.prior_lo, self.data.prior_hi, EXPERIMENTS[self.name].param_names)

    def validate(self) -> None:
        if self.name not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.name!r}")
        if self.method not in ("abcgan", "rejection"):
            raise ConfigError(f"unknown method {self.method!r}")
        d = EXPERIMENTS[self.name].dim
        for key in ("true_theta", "prior_lo", "prior_hi"):
            if len(getattr(self.data, key)) != d:
                raise ConfigError(f"data.{key} must have {d} entries")
        try:
            prior = self.prior
        except ValueError as err:
            raise ConfigError(str(err)) from None
        if not prior.contains(np.array(self.data.true_theta), strict=False):
            raise ConfigError("data.true_theta lies outside the prior box")
        if self.posterior_window < 1:
            raise ConfigError("posterior_window must be positive")
        if self.method == "abcgan" and self.posterior_window > max(self.train.iterations, 1):
            raise ConfigError("posterior_window exceeds train.iterations")
        if self.data.n_observed < 1 or self.data.unit_size < 1:
            raise ConfigError("data.n_observed and data.unit_size must be positive")
        if self.network.summarizer_init not in ("normal", "orthogonal"):
            raise ConfigError(f"unknown summarizer_init {self.network.summarizer_init!r}")
        if not self.network.input_scale > 0:
            raise ConfigError("network.input_scale must be positive")
        if self.network.summary_dim < 1:
            raise ConfigError("network.summary_dim must be positive")
        if not 0 < self.baseline.quantile <= 1:
            raise ConfigError("baseline.quantile must lie in (0, 1]")
        if self.network.activation not in ("relu", "tanh", "sigmoid", "none"):
            raise ConfigError(f"unknown activation {self.network.activation!r}")
        unknown = set(self.metrics) - METRIC_NAMES
        if unknown:
            raise ConfigError(f"unknown metrics {sorted(unknown)}")


METRIC_NAMES = {"posterior", "kl_mixture", "l1_mean_error", "low_prob_fraction", "true_box_mass"}


@dataclass
class Experiment:
    name: str
    description: str
    dim: int
    param_names: tuple[str, ...]
    defaults: Callable[[], ExperimentConfig]
    simulator: Callable[[ExperimentConfig], SimulatorSpec]
    observed: Callable[[ExperimentConfig, SimulatorSpec, int], list]
    summarizer: Callable[[ExperimentConfig, np.random.Generator], Summarizer]
    baseline_summary: Callable[[Any], np.ndarray] | None = None


# ------------------------------------------------------------- preprocessing

def _stack(units: list) -> np.ndarray:
    return np.stack([np.asarray(u, float) for u in units])


def _sorted_rows(units: list) -> np.ndarray:
    return np.sort(_stack(units).reshape(len(units), -1), axis=1)


def _flat_rows(units: list) -> np.ndarray:
    return _stack(units).reshape(len(units), -1)


def _ricker_sequences(units: list) -> np.ndarray:
    return np.log1p(_stack(units))[:, :, None]


def _gutmann_rows(units: list) -> np.ndarray:
    feats = dcc_features_gutmann([np.asarray(u) for u in units])
    # Rescale to O(1): singular-value norm and rank are counts up to ~33.
    return feats / np.array([10.0, 10.0, 1.0, 1.0, 1.0])


def _matrices(units: list) -> np.ndarray:
    return _stack(units)


class _Chain(Module):
    def __init__(self, *stages):
        self.stages = list(stages)

    def forward(self, x):
        for s in self.stages:
            x = s(x)
        return x


def _mlp_summarizer(in_dim: int, preprocess) -> Callable:
    def build(cfg: ExperimentConfig, rng: np.random.Generator) -> Summarizer:
        net = cfg.network
        sizes = [in_dim, *net.summarizer_hidden, net.summary_dim]
        acts = [net.activation] * len(net.summarizer_hidden) + ["none"]
        body = MLP(sizes, acts, rng, net.init_std, "Z")
        if net.summarizer_init == "orthogonal":
            orthogonal_init(body, rng)
        prep = preprocess
        if net.input_scale != 1.0:
            prep = lambda units: net.input_scale * preprocess(units)  # noqa: E731
        return Summarizer(body, prep, net.summary_dim)
    return build


def _lstm_summarizer(cfg: ExperimentConfig, rng: np.random.Generator) -> Summarizer:
    net = cfg.network
    k = net.lstm_units
    body = _Chain(LSTMChain(1, k, rng, net.init_std, "Z.lstm"),
                  Dense(k, net.summary_dim, "none", rng, net.init_std, "Z.head"))
    return Summarizer(body, _ricker_sequences, net.summary_dim)


def _conv_summarizer(cfg: ExperimentConfig, rng: np.random.Generator) -> Summarizer:
    net = cfg.network
    shape = (_dcc_rows(cfg), cfg.data.options.get("n_strains", N_STRAINS))
    conv = ConvSummarizer(shape, net.conv_filters, 5, 2, 2, 160, rng, net.init_std, "Z.conv")
    body = conv if net.summary_dim == 160 else _Chain(
        conv, Dense(160, net.summary_dim, "none", rng, net.init_std, "Z.proj"))
    return Summarizer(body, _matrices, net.summary_dim)


def _dcc_rows(cfg: ExperimentConfig) -> int:
    n = cfg.data.options.get("attendees", N_ATTENDEES)
    frac = cfg.data.options.get("sampled_fraction", 1.0)
    return n if frac >= 1.0 else max(1, int(round(frac * n)))


# --------------------------------------------------------------- simulators

def _normal_sim(cfg):
    return SimulatorSpec("univariate_normal", 2, cfg.prior, sim_univariate_normal, (cfg.data.unit_size,),
                         cfg.data.unit_size)


def _mixture_sim(cfg):
    return SimulatorSpec("mixture_normal", 1, cfg.prior, sim_mixture_normal, (cfg.data.unit_size,),
                         cfg.data.unit_size)


def _mvn_sim(cfg):
    return SimulatorSpec("mvn16", 16, cfg.prior, sim_mvn, (cfg.data.unit_size, 16), cfg.data.unit_size)


def _glm_sim(cfg):
    return SimulatorSpec("glm16", 16, cfg.prior, sim_glm, (cfg.data.unit_size, 16), cfg.data.unit_size)


def _ricker_sim(cfg):
    opts = {k: v for k, v in cfg.data.options.items() if k in ("n0", "burn_in")}
    return SimulatorSpec("ricker", 3, cfg.prior, sim_ricker, (cfg.data.unit_size,),
                         cfg.data.unit_size, opts)


def _dcc_sim(cfg):
    keys = ("attendees", "n_strains", "horizon", "sampled_fraction")
    opts = {k: v for k, v in cfg.data.options.items() if k in keys}
    opts["n_centers"] = int(cfg.data.options.get("centers_per_call", 1))

    def one_center(theta, seed, **kw):
        mats = sim_dcc(theta, seed, **kw)
        return mats[0] if len(mats) == 1 else np.stack(mats)

    return SimulatorSpec(cfg.name, 3, cfg.prior, one_center, (_dcc_rows(cfg), opts.get("n_strains", N_STRAINS)),
                         None, opts)


# ------------------------------------------------------------ observed data

def _iid_units(cfg, sim, seed):
    """n_observed draws at the true theta, split into units of unit_size."""
    w = cfg.data.unit_size
    n_units = cfg.data.n_observed // w
    draws = np.asarray(sim(np.array(cfg.data.true_theta), derive_seed(seed, OBSERVED_STREAM), n_units * w))
    units = draws.reshape(n_units, w, *draws.shape[1:])
    return list(units[:, 0] if w == 1 else units)


def _ricker_observed(cfg, sim, seed):
    opts = {k: v for k, v in cfg.data.options.items() if k in ("n0", "burn_in")}
    series = sim_ricker(np.array(cfg.data.true_theta), derive_seed(seed, OBSERVED_STREAM),
                        cfg.data.n_observed, **opts)
    w = cfg.data.unit_size
    return [series[k * w:(k + 1) * w] for k in range(len(series) // w)]


def _dcc_observed(cfg, sim, seed):
    keys = ("attendees", "n_strains", "horizon", "sampled_fraction")
    opts = {k: v for k, v in cfg.data.options.items() if k in keys}
    return sim_dcc(np.array(cfg.data.true_theta), derive_seed(seed, OBSERVED_STREAM),
                   n_centers=cfg.data.n_observed, **opts)


# ----------------------------------------------------------------- defaults

def _univariate_defaults():
    return ExperimentConfig(
        name="univariate_normal",
        data=DataConfig(true_theta=(3.0, 1.0), prior_lo=(0.0, 1.0), prior_hi=(5.0, 5.0),
                        n_observed=1000, unit_size=10),
        network=NetworkConfig(summary_dim=4, generator_hidden=(16,), approximator_hidden=(16,),
                              summarizer_hidden=(16,), decoder_hidden=(16,), init_std=0.5),
        train=TrainConfig(lr=1e-3, minibatch=50, iterations=5000, approx_rounds_per_accept=5,
                          approx_loss="conditional", explore_fraction=0.5),
        posterior_window=500,
        metrics=("posterior",),
    )


def _mixture_defaults():
    return ExperimentConfig(
        name="mixture_normal",
        data=DataConfig(true_theta=(0.0,), prior_lo=(-10.0,), prior_hi=(10.0,),
                        n_observed=1000, unit_size=1),
        # Frozen linear summary: a trained one flattens the wide component.
        network=NetworkConfig(summary_dim=2, noise_dim=0, generator_hidden=(16,),
                              generator_noise_dim=2, approximator_hidden=(16,),
                              summarizer_hidden=(), decoder_hidden=(16,), init_std=0.5),
        train=TrainConfig(lr=1e-3, minibatch=10, iterations=5000, approx_rounds_per_accept=5,
                          approx_loss="conditional", explore_fraction=0.5,
                          frozen_groups=("summarizer",)),
        posterior_window=1000,
        metrics=("posterior", "kl_mixture", "low_prob_fraction"),
    )


def _mvn_defaults():
    return ExperimentConfig(
        name="mvn16",
        data=DataConfig(true_theta=(1.0,) * 16, prior_lo=(0.0,) * 16, prior_hi=(10.0,) * 16,
                        n_observed=1000, unit_size=1),
        # Frozen orthogonal linear summary and linear approximator: E[Z | theta]
        # is then exactly representable and the paired loss identifies it.
        # Inputs are scaled by the inverse prior half-width.
        network=NetworkConfig(summary_dim=16, noise_dim=0, generator_hidden=(16,), approximator_hidden=(),
                              summarizer_hidden=(), decoder_hidden=(16,), init_std=0.5,
                              input_scale=0.2, summarizer_init="orthogonal"),
        train=TrainConfig(lr=1e-3, minibatch=50, iterations=4000, approx_loss="paired",
                          explore_fraction=0.5, frozen_groups=("summarizer",)),
        posterior_window=500,
        metrics=("posterior", "l1_mean_error"),
    )


def _glm_defaults():
    return ExperimentConfig(
        name="glm16",
        data=DataConfig(true_theta=(0.0,) * 16, prior_lo=(-100.0,) * 16, prior_hi=(100.0,) * 16,
                        n_observed=1000, unit_size=1),
        # Same wiring as mvn16 with a linear generator; inputs scaled by the
        # prior half-width.
        network=NetworkConfig(summary_dim=16, noise_dim=0, generator_hidden=(), approximator_hidden=(),
                              summarizer_hidden=(), decoder_hidden=(16,), init_std=0.5,
                              input_scale=0.01, summarizer_init="orthogonal"),
        train=TrainConfig(lr=1e-2, minibatch=10, iterations=4000, approx_loss="paired",
                          explore_fraction=0.5, frozen_groups=("summarizer",)),
        posterior_window=500,
        metrics=("posterior", "l1_mean_error"),
    )


def _ricker_defaults():
    return ExperimentConfig(
        name="ricker",
        data=DataConfig(true_theta=(3.8, 0.3, 10.0), prior_lo=(0.0, 0.0, 0.0),
                        prior_hi=(5.0, 1.0, 15.0), n_observed=50, unit_size=10,
                        options={"n0": 1.0, "burn_in": 0}),
        # The decoder also reads y_S, so the LSTM learns theta-informative
        # summaries that the paired loss cannot shrink away.
        network=NetworkConfig(summary_dim=10, noise_dim=0, generator_hidden=(20,),
                              approximator_hidden=(), decoder_hidden=(), lstm_units=10,
                              init_std=0.5),
        train=TrainConfig(lr=1e-3, minibatch=10, iterations=30000, approx_loss="paired",
                          explore_fraction=0.5, decoder_target="both"),
        posterior_window=1000,
        metrics=("posterior",),
    )


def _dcc_defaults():
    return ExperimentConfig(
        name="dcc",
        data=DataConfig(true_theta=(3.6, 0.6, 0.1), prior_lo=(0.0, 0.0, 0.0),
                        prior_hi=(12.0, 2.0, 1.0), n_observed=N_CENTERS, unit_size=1,
                        options={"attendees": N_ATTENDEES, "n_strains": N_STRAINS,
                                 "horizon": 10.0, "sampled_fraction": 1.0,
                                 "centers_per_call": 1}),
        network=NetworkConfig(summary_dim=5, generator_hidden=(), approximator_hidden=(),
                              summarizer_hidden=(), decoder_hidden=(), init_std=1.0),
        train=TrainConfig(lr=1e-3, minibatch=2, iterations=1000),
        posterior_window=200,
        metrics=("posterior", "true_box_mass"),
    )


def _dcc_conv_defaults():
    cfg = _dcc_defaults()
    cfg.name = "dcc_conv"
    cfg.network = NetworkConfig(summary_dim=160, noise_dim=0, generator_hidden=(),
                                approximator_hidden=(), decoder_hidden=(), conv_filters=8,
                                init_std=1.0)
    # decoder on y_S keeps the conv features tied to theta under the paired loss
    cfg.train = TrainConfig(lr=1e-3, minibatch=10, iterations=1000, approx_loss="paired",
                            decoder_target="both", explore_fraction=0.5)
    return cfg


def _normal_baseline_summary(unit) -> np.ndarray:
    x = np.asarray(unit, float)
    return np.array([x.mean(), x.var(ddof=1)])


EXPERIMENTS: dict[str, Experiment] = {
    e.name: e for e in [
        Experiment("univariate_normal", "N(mu, var) from 1000 observations", 2, ("mu", "var"),
                   _univariate_defaults, _normal_sim, _iid_units,
                   _mlp_summarizer(10, _sorted_rows), _normal_baseline_summary),
        Experiment("mixture_normal", "0.5 N(theta, 0.01) + 0.5 N(theta, 1), posterior given y = 0", 1,
                   ("theta",), _mixture_defaults, _mixture_sim, _iid_units,
                   _mlp_summarizer(1, _sorted_rows), lambda u: np.atleast_1d(np.mean(u))),
        Experiment("mvn16", "16-d normal mean, identity covariance", 16,
                   tuple(f"x{i + 1}" for i in range(16)), _mvn_defaults, _mvn_sim, _iid_units,
                   _mlp_summarizer(16, _flat_rows), lambda u: np.asarray(u, float).reshape(-1, 16).mean(0)),
        Experiment("glm16", "s = C theta + eps, n = 16", 16,
                   tuple(f"theta{i + 1}" for i in range(16)), _glm_defaults, _glm_sim, _iid_units,
                   _mlp_summarizer(16, _flat_rows), lambda u: np.asarray(u, float).reshape(-1, 16).mean(0)),
        Experiment("ricker", "Ricker map with Poisson observations, LSTM summarizer", 3,
                   ("log_r", "sigma", "phi"), _ricker_defaults, _ricker_sim, _ricker_observed,
                   _lstm_summarizer),
        Experiment("dcc", "day care center carriage, non-random matrix features", 3,
                   ("Lambda", "beta", "theta"), _dcc_defaults, _dcc_sim, _dcc_observed,
                   _mlp_summarizer(5, _gutmann_rows)),
        Experiment("dcc_conv", "day care center carriage, convolutional summarizer", 3,
                   ("Lambda", "beta", "theta"), _dcc_conv_defaults, _dcc_sim, _dcc_observed,
                   _conv_summarizer),
    ]
}


def registry() -> list[Experiment]:
    return list(EXPERIMENTS.values())


def default_config(name: str) -> ExperimentConfig:
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    return EXPERIMENTS[name].defaults()


def build_model(cfg: ExperimentConfig, seed: int) -> AbcGanModel:
    exp = EXPERIMENTS[cfg.name]
    net = cfg.network
    prior = cfg.prior
    rng = np.random.default_rng(derive_seed(seed, INIT_STREAM))
    noise_dim = prior.dim if net.noise_dim is None else net.noise_dim
    g_std = net.init_std if net.generator_init_std is None else net.generator_init_std
    gen = Generator(prior, net.generator_hidden, net.activation, net.generator_noise_dim, rng, g_std)
    approx = Approximator(prior, net.summary_dim, noise_dim, net.approximator_hidden,
                          net.activation, rng, net.init_std)
    summ = exp.summarizer(cfg, rng)
    dec = Decoder(net.summary_dim, prior.dim, net.decoder_hidden, net.activation, rng, net.init_std)
    return AbcGanModel(gen, approx, summ, dec, prior)


def build(cfg: ExperimentConfig, seed: int):
    """(model, simulator, observed units, train config) for one seeded run."""
    cfg.validate()
    exp = EXPERIMENTS[cfg.name]
    sim = exp.simulator(cfg)
    observed = exp.observed(cfg, sim, seed)
    model = build_model(cfg, seed)
    train_cfg = dataclasses.replace(cfg.train, seed=int(derive_seed(seed, TRAIN_STREAM).generate_state(1)[0]))
    return model, sim, observed, train_cfg
