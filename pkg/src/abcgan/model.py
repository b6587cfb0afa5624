"""ABC-GAN: generator, approximator, summarizer and decoder trained in two
alternating phases against a black-box simulator.

improve_approx fits the approximator, summarizer and decoder so that the
approximator's summaries match the summaries of simulated data (plus a
decoder reconstruction term).  improve_accept moves the generator so the
approximator's summaries match those of the observed data.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, RMSProp, Tape, Var, frozen
from .layers import MLP, Module, PriorSpec, prior_squash, to_unit
from .mmd import KernelSpec, mmd_unbiased
from .simulators.base import SimulatorSpec, derive_seed

logger = logging.getLogger(__name__)

# Stream tags for seed derivation: (run seed, tag, iteration, ...).
_BATCH, _SIM, _INIT = 0, 1, 2


class NonFiniteLoss(FloatingPointError):
    def __init__(self, name: str, iteration: int, trace=None):
        self.iteration = iteration
        self.trace = trace
        super().__init__(f"non-finite {name} at iteration {iteration}")


# ----------------------------------------------------------------- networks

class Generator(Module):
    """Prior draws (rescaled to [-1, 1]) -> MLP -> squash onto the prior box."""

    def __init__(self, prior: PriorSpec, hidden: Sequence[int] = (20,),
                 activation: str = "relu", noise_dim: int = 0,
                 rng: np.random.Generator | None = None, init_std: float = 1.0):
        self.prior = prior
        self.noise_dim = noise_dim
        sizes = [prior.dim + noise_dim, *hidden, prior.dim]
        acts = [activation] * len(hidden) + ["none"]
        self.net = MLP(sizes, acts, rng, init_std, "G")

    def draw_inputs(self, rng: np.random.Generator, m: int) -> np.ndarray:
        u = self.prior.to_unit(self.prior.sample(rng, m))
        if self.noise_dim:
            u = np.concatenate([u, rng.standard_normal((m, self.noise_dim))], axis=1)
        return u

    def forward(self, inputs) -> Var:
        return prior_squash(self.net(inputs), self.prior)


class Approximator(Module):
    """(theta, noise) -> summary space; theta enters rescaled to [-1, 1]."""

    def __init__(self, prior: PriorSpec, summary_dim: int, noise_dim: int,
                 hidden: Sequence[int] = (), activation: str = "relu",
                 rng: np.random.Generator | None = None, init_std: float = 1.0):
        self.prior = prior
        self.noise_dim = noise_dim
        sizes = [prior.dim + noise_dim, *hidden, summary_dim]
        acts = [activation] * len(hidden) + ["none"]
        self.net = MLP(sizes, acts, rng, init_std, "A")

    @property
    def summary_dim(self) -> int:
        return self.net.n_out

    def forward(self, theta, noise: np.ndarray | None = None) -> Var:
        x = to_unit(theta, self.prior)
        if self.noise_dim:
            x = ad.concat([x, ad.constant(noise)], axis=1)
        return self.net(x)

    def __call__(self, theta, noise=None):
        return self.forward(theta, noise)


class Summarizer(Module):
    """Fixed preprocessing of raw units followed by a trainable body."""

    def __init__(self, body: Module, preprocess: Callable[[list], np.ndarray],
                 summary_dim: int):
        self.body = body
        self.preprocess = preprocess
        self.summary_dim = summary_dim

    def forward(self, units: list) -> Var:
        return self.body(ad.constant(self.preprocess(units)))


class Decoder(Module):
    """Summary -> theta in [-1, 1] coordinates."""

    def __init__(self, summary_dim: int, d: int, hidden: Sequence[int] = (),
                 activation: str = "relu", rng: np.random.Generator | None = None,
                 init_std: float = 1.0):
        sizes = [summary_dim, *hidden, d]
        acts = [activation] * len(hidden) + ["none"]
        self.net = MLP(sizes, acts, rng, init_std, "Ad")

    def forward(self, y) -> Var:
        return self.net(y)


@dataclass
class AbcGanModel:
    generator: Generator
    approximator: Approximator
    summarizer: Summarizer
    decoder: Decoder
    prior: PriorSpec

    def __post_init__(self):
        if self.approximator.summary_dim != self.summarizer.summary_dim:
            raise ValueError(
                f"approximator outputs {self.approximator.summary_dim} summaries but the "
                f"summarizer outputs {self.summarizer.summary_dim}")
        if self.decoder.net.n_out != self.prior.dim:
            raise ValueError("decoder output must match the parameter dimension")
        self.version = 0

    @property
    def summary_dim(self) -> int:
        return self.summarizer.summary_dim

    @property
    def dim(self) -> int:
        return self.prior.dim

    def groups(self) -> dict[str, list[Parameter]]:
        return {
            "generator": self.generator.parameters(),
            "approximator": self.approximator.parameters(),
            "summarizer": self.summarizer.parameters(),
            "decoder": self.decoder.parameters(),
        }

    def snapshot(self) -> dict[str, list[np.ndarray]]:
        return {k: [p.value.copy() for p in ps] for k, ps in self.groups().items()}


# ------------------------------------------------------------------- config

APPROX_LOSSES = ("marginal", "conditional", "paired")


@dataclass
class TrainConfig:
    lr: float = 1e-3
    accept_lr: float | None = None
    minibatch: int = 50
    iterations: int = 1000
    approx_rounds_per_accept: int = 1
    decoder_weight: float = 1.0
    seed: int = 0
    rmsprop_decay: float = 0.9
    rmsprop_eps: float = 1e-8
    bandwidth: float | None = None
    approx_loss: str = "marginal"
    explore_fraction: float = 0.0
    frozen_groups: tuple[str, ...] = ()
    decoder_target: str = "approx"

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.minibatch < 2:
            raise ValueError("minibatch must be at least 2 for the MMD estimator")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.approx_rounds_per_accept < 1:
            raise ValueError("approx_rounds_per_accept must be at least 1")
        if self.decoder_weight < 0:
            raise ValueError("decoder_weight must be non-negative")
        if not 0 < self.rmsprop_decay < 1:
            raise ValueError("rmsprop_decay must lie in (0, 1)")
        if self.approx_loss not in APPROX_LOSSES:
            raise ValueError(f"approx_loss must be one of {APPROX_LOSSES}")
        if not 0.0 <= self.explore_fraction < 1.0:
            raise ValueError("explore_fraction must lie in [0, 1)")
        if self.decoder_target not in ("approx", "both"):
            raise ValueError("decoder_target must be 'approx' or 'both'")
        self.frozen_groups = tuple(self.frozen_groups)

    @property
    def kernel(self) -> KernelSpec:
        return KernelSpec(self.bandwidth)


@dataclass
class TraceRecord:
    iteration: int
    theta: np.ndarray
    loss_approx: float
    loss_accept: float
    loss_decoder: float
    elapsed: float
    approx_rounds: list[tuple[float, float]] = field(default_factory=list)


@dataclass
class Batch:
    gen_input: np.ndarray
    approx_noise: np.ndarray
    theta: np.ndarray
    sim_units: list
    obs_units: list
    sim_theta: np.ndarray | None = None
    y_A: Var | None = None
    y_S: Var | None = None
    y_O: Var | None = None
    theta_d: Var | None = None


class Optimizers:
    """One RMSProp per phase over the non-frozen parameter groups."""

    def __init__(self, model: AbcGanModel, cfg: TrainConfig):
        groups = model.groups()
        approx = [p for g in ("approximator", "summarizer", "decoder")
                  if g not in cfg.frozen_groups for p in groups[g]]
        gen = [] if "generator" in cfg.frozen_groups else groups["generator"]
        kw = dict(decay=cfg.rmsprop_decay, eps=cfg.rmsprop_eps)
        self.approx = RMSProp(approx, lr=cfg.lr, **kw)
        self.accept = RMSProp(gen, lr=cfg.lr if cfg.accept_lr is None else cfg.accept_lr, **kw)


# --------------------------------------------------------------- operations

def _observed_subset(obs_units: Sequence, m: int, rng: np.random.Generator) -> list:
    if len(obs_units) == 0:
        raise ValueError("observed dataset is empty")
    if len(obs_units) > m:
        idx = np.sort(rng.choice(len(obs_units), size=m, replace=False))
        return [obs_units[i] for i in idx]
    return list(obs_units)


def sample_minibatch(model: AbcGanModel, simulator: SimulatorSpec, observed: Sequence,
                     m: int, seed: int, iteration: int = 0, forward: bool = True,
                     explore: float = 0.0) -> Batch:
    """Draw generator inputs, run the simulator once per row and summarize.

    ``explore`` > 0 swaps the last round(explore * m) simulated rows for prior
    draws, so the approximator keeps seeing parameters away from where the
    generator currently sits.  ``theta`` (the generator output) is unchanged;
    the simulated rows are ``sim_theta``.

    With ``forward`` the batch also carries y_A, y_S, y_O and theta_d on the
    active tape; the simulator output itself is never on the tape.
    """
    rng = np.random.default_rng(derive_seed(seed, _BATCH, iteration))
    gen_input = model.generator.draw_inputs(rng, m)
    noise = rng.standard_normal((m, model.approximator.noise_dim))
    obs = _observed_subset(observed, m, rng)
    theta_var = model.generator(gen_input)
    theta = theta_var.value.copy()
    sim_theta = theta.copy()
    k = int(round(explore * m))
    if k:
        sim_theta[m - k:] = model.prior.sample(rng, k)
    seeds = [derive_seed(seed, _SIM, iteration, row) for row in range(m)]
    sim_units = simulator.simulate_batch(sim_theta, seeds)
    batch = Batch(gen_input, noise, theta, sim_units, obs, sim_theta)
    if forward:
        batch.y_A = model.approximator(theta_var, noise)
        batch.y_S = model.summarizer(sim_units)
        batch.y_O = model.summarizer(obs)
        batch.theta_d = model.decoder(batch.y_A)
    return batch


def approx_losses(model: AbcGanModel, batch: Batch, kernel: KernelSpec,
                  mode: str | bool = "marginal", decoder_target: str = "approx") -> tuple[Var, Var]:
    """(L_A, L_theta) with the generator output held constant.

    ``mode`` "marginal" is MMD(y_A, y_S).  "conditional" pairs each
    approximator and simulator summary with the theta that produced it (see
    :func:`mmd_unbiased`).  "paired" regresses y_S on theta by mean squared
    row distance; it needs a frozen summarizer, which could otherwise shrink
    to a constant.

    ``decoder_target`` "both" also decodes theta from y_S, which keeps a
    trained summarizer informative about theta.
    """
    if isinstance(mode, bool):
        mode = "conditional" if mode else "marginal"
    sim_theta = batch.theta if batch.sim_theta is None else batch.sim_theta
    y_A = model.approximator(ad.constant(sim_theta), batch.approx_noise)
    y_S = model.summarizer(batch.sim_units)
    if mode == "paired":
        loss_a = ad.mean(ad.sum(ad.square(ad.subtract(y_A, y_S)), axis=1))
    else:
        context = model.prior.to_unit(sim_theta) if mode == "conditional" else None
        loss_a = mmd_unbiased(y_A, y_S, kernel, context)
    target = ad.constant(model.prior.to_unit(sim_theta))
    loss_t = ad.mean(ad.l2norm_rows(ad.subtract(target, model.decoder(y_A))))
    if decoder_target == "both":
        loss_s = ad.mean(ad.l2norm_rows(ad.subtract(target, model.decoder(y_S))))
        loss_t = ad.add(loss_t, loss_s)
    return loss_a, loss_t


def improve_approx_step(model: AbcGanModel, batch: Batch, opt: RMSProp,
                        cfg: TrainConfig) -> tuple[float, float]:
    """One RMSProp step on approximator, summarizer and decoder; generator untouched."""
    held = [p for g in cfg.frozen_groups for p in model.groups()[g]]
    with Tape(), frozen(held):
        loss_a, loss_t = approx_losses(model, batch, cfg.kernel, cfg.approx_loss, cfg.decoder_target)
        total = loss_a if cfg.decoder_weight == 0 else ad.add(loss_a, ad.scale(loss_t, cfg.decoder_weight))
        if not ad.is_finite(total):
            raise NonFiniteLoss("improve_approx loss", -1)
        opt.zero_grad()
        ad.backward(total)
    opt.step()
    model.version += 1
    return float(loss_a.value), float(loss_t.value)


def accept_loss(model: AbcGanModel, batch: Batch, kernel: KernelSpec) -> Var:
    """L_G = MMD(y_A, y_O) with only the generator on the tape."""
    others = [p for g in ("approximator", "summarizer", "decoder") for p in model.groups()[g]]
    with frozen(others):
        theta = model.generator(batch.gen_input)
        y_A = model.approximator(theta, batch.approx_noise)
        y_O = ad.detach(model.summarizer(batch.obs_units))
        return mmd_unbiased(y_A, y_O, kernel)


def improve_accept_step(model: AbcGanModel, batch: Batch, opt: RMSProp,
                        cfg: TrainConfig) -> float:
    """One RMSProp step on the generator only."""
    with Tape():
        loss = accept_loss(model, batch, cfg.kernel)
        if not ad.is_finite(loss):
            raise NonFiniteLoss("improve_accept loss", -1)
        opt.zero_grad()
        if loss.requires_grad:
            ad.backward(loss)
    opt.step()
    model.version += 1
    return float(loss.value)


def train(model: AbcGanModel, simulator: SimulatorSpec, observed: Sequence,
          cfg: TrainConfig, callback: Callable[[TraceRecord], None] | None = None,
          log_every: int = 0) -> tuple[list[TraceRecord], AbcGanModel]:
    """Fixed-budget alternating optimisation; returns the trace and the model."""
    opts = Optimizers(model, cfg)
    trace: list[TraceRecord] = []
    start = time.perf_counter()
    for it in range(cfg.iterations):
        batch = sample_minibatch(model, simulator, observed, cfg.minibatch, cfg.seed, it,
                                 forward=False, explore=cfg.explore_fraction)
        rounds = []
        try:
            for _ in range(cfg.approx_rounds_per_accept):
                rounds.append(improve_approx_step(model, batch, opts.approx, cfg))
            loss_g = improve_accept_step(model, batch, opts.accept, cfg)
        except (NonFiniteLoss, ad.NonFiniteGradient) as err:
            raise NonFiniteLoss(str(err), it, trace) from err
        rec = TraceRecord(it, batch.theta, rounds[-1][0], loss_g, rounds[-1][1],
                          time.perf_counter() - start, rounds)
        trace.append(rec)
        if callback is not None:
            callback(rec)
        if log_every and (it + 1) % log_every == 0:
            logger.info("iter %d  L_A=%.4f  L_G=%.4f  L_theta=%.4f  theta_mean=%s",
                        it + 1, rec.loss_approx, rec.loss_accept, rec.loss_decoder,
                        np.array2string(batch.theta.mean(axis=0), precision=3))
    return trace, model


@dataclass
class Posterior:
    samples: np.ndarray
    mean: np.ndarray
    std: np.ndarray


def posterior_from_trace(trace: Sequence[TraceRecord], last_k: int | None = None) -> Posterior:
    """Pool theta samples of the last ``last_k`` iterations (population std)."""
    if not trace:
        raise ValueError("empty trace")
    last_k = len(trace) if last_k is None else last_k
    if not 0 < last_k <= len(trace):
        raise ValueError(f"last_k={last_k} outside 1..{len(trace)}")
    samples = np.concatenate([r.theta for r in trace[-last_k:]], axis=0)
    return Posterior(samples, samples.mean(axis=0), samples.std(axis=0))
