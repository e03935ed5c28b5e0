"""Synchronous-round simulation driver, metrics and analysis diagnostics."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, replace

import numpy as np

from .algorithms import ALGORITHMS, STREAM_BATCH, STREAM_INIT, HyperParams, NetworkState, agent_rng
from .compression import CompressorSpec, parse_compressor
from .config import ExperimentConfig
from .problems import Problem, estimate_lipschitz, generate_synthetic, quadratic_pl_problem, sigmoid_classifier_problem
from .theory import TheoryConstants, safe_step_sizes, rate_optimal_schedule
from .topology import MixingMatrix, make_topology

__all__ = [
    "DivergenceError",
    "MetricsRecord",
    "Experiment",
    "build",
    "iterate",
    "measure",
    "run",
    "lyapunov_diagnostic",
    "VarianceProbe",
    "momentum_variance_probe",
]


class DivergenceError(RuntimeError):
    def __init__(self, t: int):
        super().__init__(f"non-finite state at iteration {t}")
        self.t = t


@dataclass(frozen=True)
class MetricsRecord:
    iter: int
    floats_values_only: int
    floats_with_indices: int
    worst_loss: float
    mean_loss: float
    consensus_gap: float
    grad_norm_sq: float
    optimality_gap: float | None = None
    train_accuracy: float | None = None
    wallclock_ms: float | None = None


@dataclass
class Experiment:
    """Everything :func:`iterate` needs, resolved from a config."""

    config: ExperimentConfig
    problem: Problem
    topology: MixingMatrix
    compressor: CompressorSpec
    hyper: HyperParams

    @property
    def algorithm(self):
        return ALGORITHMS[self.config.algo]


def build_problem(cfg: ExperimentConfig) -> Problem:
    if cfg.problem == "sigmoid":
        ds = generate_synthetic(
            cfg.partition_sizes(), d_feat=cfg.d_feat, classes=cfg.classes, rng=cfg.data_seed_value,
            dominant_classes=cfg.dominant_classes, skew=cfg.skew,
            mean_scale=cfg.mean_scale, noise_scale=cfg.noise_scale,
        )
        return sigmoid_classifier_problem(ds, cfg.lam, cfg.labels)
    rng = np.random.default_rng([cfg.data_seed_value, 0xC0FFEE])
    return quadratic_pl_problem(cfg.n, cfg.quad_dim, rng, cfg.sigma, rows=cfg.quad_rows, rank=cfg.quad_rank)


def resolve_hyper(cfg: ExperimentConfig, problem: Problem, topology: MixingMatrix, compressor: CompressorSpec) -> HyperParams:
    """Hyperparameters from the config's ``step_rule``.

    ``manual`` uses ``eta/gamma/beta/b0`` as given; ``safe`` takes
    ``(eta, gamma)`` from :func:`safe_step_sizes`; ``rate_optimal`` uses the
    order-optimal schedule for ``iters`` with ``gamma`` from the safe bound.
    The ``*_mult`` keys scale whatever the rule produces.
    """
    eta, gamma, beta, b0 = cfg.eta, cfg.gamma, cfg.beta, cfg.b0
    if cfg.step_rule != "manual":
        L = cfg.lipschitz or problem.lipschitz or estimate_lipschitz(problem, 3, np.random.default_rng([cfg.seed, 0x11]))
        delta = compressor.delta if ALGORITHMS[cfg.algo].compressed else 1.0
        if cfg.step_rule == "rate_optimal":
            s = rate_optimal_schedule(problem.n, max(cfg.iters, 1), L)
            beta, b0 = min(1.0, s["beta"]), s["b0"]
        safe_beta = min(beta, 1.0 - 1e-12)
        eta_safe, gamma = safe_step_sizes(L, topology.rho, delta, topology.omega_bar, problem.n, safe_beta)
        eta = eta_safe if cfg.step_rule == "safe" else min(s["eta"], eta_safe)
    if b0 is not None:
        b0 = max(1, int(round(b0 * cfg.b0_mult)))
    return HyperParams(
        eta=eta * cfg.eta_mult,
        gamma=min(1.0, gamma * cfg.gamma_mult),
        beta=min(1.0, beta * cfg.beta_mult),
        b0=b0,
        batch_size=cfg.batch,
    )


def build(cfg: ExperimentConfig) -> Experiment:
    """Construct problem, topology, compressor and hyperparameters; all errors surface here."""
    if cfg.algo is None or cfg.iters is None:
        raise ValueError("config needs algo and iters")
    problem = build_problem(cfg)
    topology = make_topology(cfg.topology, problem.n)
    compressor = parse_compressor(cfg.compressor, problem.d)
    if not ALGORITHMS[cfg.algo].compressed:
        compressor = CompressorSpec("identity", problem.d)
    hyper = resolve_hyper(cfg, problem, topology, compressor)
    return Experiment(cfg, problem, topology, compressor, hyper)


def iterate(exp: Experiment, executor=None):
    """Yield ``(state, hyper_used_for_next_step)`` for ``t = 0..iters``.

    Raises :class:`DivergenceError` as soon as any agent state is non-finite.
    """
    cfg, algo = exp.config, exp.algorithm
    state = algo.init(exp.problem, exp.topology, exp.hyper, seed=cfg.seed)
    for t in range(cfg.iters + 1):
        hyper = replace(exp.hyper, eta=cfg.eta_at(t, exp.hyper.eta))
        yield state, hyper
        if t == cfg.iters:
            return
        with np.errstate(over="ignore", invalid="ignore"):
            state = algo.step(state, exp.problem, exp.topology, hyper, exp.compressor, executor)
        if not state.is_finite():
            raise DivergenceError(state.t)


def measure(state: NetworkState, problem: Problem, wallclock_ms: float | None = None) -> MetricsRecord:
    """Full-data metrics at the current iterates (never stochastic); overflow reports ``inf``."""
    with np.errstate(over="ignore", invalid="ignore"):
        return _measure(state, problem, wallclock_ms)


def _measure(state, problem, wallclock_ms):
    thetas = state.thetas
    bar = thetas.mean(axis=0)
    values = problem.global_values(np.vstack([thetas, bar]))
    mean_loss = float(values[-1])
    grad = problem.global_grad(bar)
    return MetricsRecord(
        iter=state.t,
        floats_values_only=state.floats_values,
        floats_with_indices=state.floats_with_indices,
        worst_loss=float(values[:-1].max()),
        mean_loss=mean_loss,
        consensus_gap=float(np.max(np.sum((thetas - bar) ** 2, axis=1))),
        grad_norm_sq=float(grad @ grad),
        optimality_gap=None if problem.f_star is None else mean_loss - problem.f_star,
        train_accuracy=problem.accuracy(bar),
        wallclock_ms=wallclock_ms,
    )


def run(config: ExperimentConfig | Experiment) -> list[MetricsRecord]:
    """Run ``iters`` iterations, recording at ``t = 0``, every ``stride`` and ``t = iters``."""
    exp = config if isinstance(config, Experiment) else build(config)
    cfg = exp.config
    records = []
    start = time.perf_counter()
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else nullcontext()
    with pool as executor:
        for state, _ in iterate(exp, executor):
            if state.t % cfg.stride == 0 or state.t == cfg.iters:
                wall = (time.perf_counter() - start) * 1e3 if cfg.record_wallclock else None
                records.append(measure(state, exp.problem, wall))
    return records


def _proj_sq(m: np.ndarray) -> float:
    c = m - m.mean(axis=0)
    return float(np.sum(c * c))


def lyapunov_diagnostic(state: NetworkState, k: TheoryConstants, problem: Problem) -> float:
    """Single-trajectory value of the Lyapunov function.

    ``L^2||Theta_o||^2 + n||vbar - gradbar||^2 + (1/n)||V - gradF||^2 + a||G_o||^2
    + b||G - Ghat||^2 + c||Theta - eta G - Thetahat||^2``, with consensus parts
    taken through ``I - 11^T/n`` and hats from each agent's self-copy.
    """
    theta, v, g = state.thetas, state.vs, state.gs
    grad_f = np.stack([problem.full_grad(i, theta[i]) for i in range(state.n)])
    g_hat = state.self_hats("g_hat")
    theta_hat = state.self_hats("theta_hat")
    n = state.n
    vbar_err = v.mean(axis=0) - grad_f.mean(axis=0)
    track = theta - k.eta * g - theta_hat
    return (
        k.L**2 * _proj_sq(theta)
        + n * float(vbar_err @ vbar_err)
        + float(np.sum((v - grad_f) ** 2)) / n
        + k.a * _proj_sq(g)
        + k.b * float(np.sum((g - g_hat) ** 2))
        + k.c * float(np.sum(track * track))
    )


@dataclass(frozen=True)
class VarianceProbe:
    var_with_momentum: float
    var_without: float
    se_with: float
    se_without: float


def momentum_variance_probe(config: ExperimentConfig | Experiment, trials: int = 100, burn_in: int = 200) -> VarianceProbe:
    """Compare ``E||vbar - gradbar||^2`` of the momentum estimator to a plain minibatch average.

    The iterates are frozen at the initial point.  Each trial draws an initial
    ``v`` from a ``b0`` batch, applies ``burn_in`` momentum recursions with
    fresh shared batches, and records the squared error of ``vbar``; the
    baseline records the squared error of one network-averaged minibatch
    gradient.  Trial ``r`` uses seed ``config.seed + r``.
    """
    if trials < 30:
        raise ValueError("need at least 30 trials")
    exp = config if isinstance(config, Experiment) else build(config)
    problem, hyper, seed0 = exp.problem, exp.hyper, exp.config.seed
    n, beta = problem.n, hyper.beta
    theta = np.zeros(problem.d)
    exact = problem.global_grad(theta)
    with_m, without = [], []
    for r in range(trials):
        seed = seed0 + r
        v = [problem.stoch_grad(i, theta, problem.sample_batch(i, hyper.b0, agent_rng(seed, i, 0, STREAM_INIT))) for i in range(n)]
        for t in range(burn_in):
            for i in range(n):
                batch = problem.sample_batch(i, hyper.batch_size, agent_rng(seed, i, t, STREAM_BATCH))
                g_new, g_old = problem.stoch_grad_pair(i, theta, theta, batch)
                v[i] = beta * g_new + (1.0 - beta) * (v[i] + g_new - g_old)
        e = np.mean(v, axis=0) - exact
        with_m.append(float(e @ e))
        plain = np.mean(
            [problem.stoch_grad(i, theta, problem.sample_batch(i, hyper.batch_size, agent_rng(seed, i, burn_in, STREAM_BATCH))) for i in range(n)],
            axis=0,
        )
        e = plain - exact
        without.append(float(e @ e))
    with_m, without = np.array(with_m), np.array(without)
    return VarianceProbe(
        float(with_m.mean()),
        float(without.mean()),
        float(with_m.std(ddof=1) / np.sqrt(trials)),
        float(without.std(ddof=1) / np.sqrt(trials)),
    )
