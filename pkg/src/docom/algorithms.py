"""Decentralized update rules as state transitions.

Each ``*_step`` takes a :class:`NetworkState` and returns a new one; inputs
are never mutated.  Compressed gossip follows the error-compensation
protocol: agent ``i`` sends ``Q(x_i - xhat_{i,i})`` once per round, and every
holder ``j`` of a copy of ``xhat_i`` (its closed neighborhood, ``i``
included) adds the same message to its copy, so the replicas never drift.

Randomness (minibatches, ``rand_k`` masks) comes from counter-based streams
keyed by ``(seed, agent, iteration, purpose)``; the schedule of per-agent
work therefore cannot change the draws.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .compression import CompressorSpec, compress
from .problems import Problem
from .topology import MixingMatrix

__all__ = [
    "HyperParams",
    "AgentState",
    "NetworkState",
    "agent_rng",
    "docom_init",
    "consensus_init",
    "docom_step",
    "choco_step",
    "dsgd_step",
    "hsgd_step",
    "tracking_step",
    "ALGORITHMS",
    "floats_per_iteration",
]

STREAM_INIT = 0
STREAM_BATCH = 1
STREAM_Q_THETA = 2
STREAM_Q_G = 3


def agent_rng(seed: int, agent: int, t: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(agent), int(t), int(stream)])


@dataclass(frozen=True)
class HyperParams:
    """Step sizes and sampling sizes.

    ``b0=None`` initializes ``v`` with the full local dataset (or the exact
    gradient for noise-model problems).
    """

    eta: float
    gamma: float = 1.0
    beta: float = 1.0
    b0: int | None = None
    batch_size: int = 1

    def __post_init__(self):
        if not (self.eta >= 0 and np.isfinite(self.eta)):
            raise ValueError(f"eta must be finite and >= 0, got {self.eta}")
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if self.b0 is not None and self.b0 < 1:
            raise ValueError(f"b0 must be >= 1, got {self.b0}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class AgentState:
    theta: np.ndarray
    v: np.ndarray
    g: np.ndarray
    theta_hat: dict[int, np.ndarray]
    g_hat: dict[int, np.ndarray]


@dataclass
class NetworkState:
    agents: list[AgentState]
    t: int = 0
    seed: int = 0
    floats_values: int = 0
    floats_with_indices: int = 0

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def thetas(self) -> np.ndarray:
        return np.stack([a.theta for a in self.agents])

    @property
    def vs(self) -> np.ndarray:
        return np.stack([a.v for a in self.agents])

    @property
    def gs(self) -> np.ndarray:
        return np.stack([a.g for a in self.agents])

    def self_hats(self, which: str = "theta_hat") -> np.ndarray:
        """Each agent's own copy ``xhat_{i,i}`` stacked into an ``n x d`` matrix."""
        return np.stack([getattr(a, which)[i] for i, a in enumerate(self.agents)])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a.theta)) and np.all(np.isfinite(a.v)) and np.all(np.isfinite(a.g)) for a in self.agents)


def _check(problem: Problem, topology: MixingMatrix, theta0):
    if topology.n != problem.n:
        raise ValueError(f"topology has {topology.n} agents, problem has {problem.n}")
    if theta0.shape != (problem.d,):
        raise ValueError(f"initial iterate must have length {problem.d}, got shape {theta0.shape}")


def _theta0(problem, theta0):
    return np.zeros(problem.d) if theta0 is None else np.array(theta0, dtype=float)


def docom_init(problem: Problem, topology: MixingMatrix, hyper: HyperParams, seed: int = 0, theta0=None) -> NetworkState:
    """Consensus start with ``g_i = v_i`` = a ``b0``-sample gradient average and zero ``ghat``."""
    theta0 = _theta0(problem, theta0)
    _check(problem, topology, theta0)
    agents = []
    for i in range(problem.n):
        batch = problem.sample_batch(i, hyper.b0, agent_rng(seed, i, 0, STREAM_INIT))
        v = problem.stoch_grad(i, theta0, batch)
        nbhd = topology.closed_neighborhood(i)
        agents.append(
            AgentState(
                theta=theta0.copy(),
                v=v,
                g=v.copy(),
                theta_hat={j: theta0.copy() for j in nbhd},
                g_hat={j: np.zeros(problem.d) for j in nbhd},
            )
        )
    return NetworkState(agents, t=0, seed=seed)


def consensus_init(problem: Problem, topology: MixingMatrix, hyper: HyperParams, seed: int = 0, theta0=None) -> NetworkState:
    """Start for methods without a tracking variable (``v = g = 0``)."""
    theta0 = _theta0(problem, theta0)
    _check(problem, topology, theta0)
    agents = []
    for i in range(problem.n):
        nbhd = topology.closed_neighborhood(i)
        agents.append(
            AgentState(
                theta=theta0.copy(),
                v=np.zeros(problem.d),
                g=np.zeros(problem.d),
                theta_hat={j: theta0.copy() for j in nbhd},
                g_hat={j: np.zeros(problem.d) for j in nbhd},
            )
        )
    return NetworkState(agents, t=0, seed=seed)


def _map(executor, fn, n):
    if executor is None:
        return [fn(i) for i in range(n)]
    return list(executor.map(fn, range(n)))


def _gossip_round(hats: list[dict], values: list[np.ndarray], compressor, topology, seed, t, stream):
    """One compressed exchange; returns updated copies of every agent's hat dict."""
    n = len(values)
    new = [dict(h) for h in hats]
    for i in range(n):
        rng = agent_rng(seed, i, t, stream) if compressor.kind == "rand_k" else None
        msg = compress(compressor, values[i] - hats[i][i], rng)
        for j in topology.closed_neighborhood(i):
            new[j][i] = hats[j][i] + msg
    return new


def _mix(topology: MixingMatrix, i: int, hats: dict) -> np.ndarray:
    # sum_j W_ij (xhat_{i,j} - xhat_{i,i}); the j = i term is identically zero
    w = topology.weights[i]
    own = hats[i]
    acc = np.zeros_like(own)
    for j in topology.neighbor_lists[i]:
        acc += w[j] * (hats[j] - own)
    return acc


def _account(state: NetworkState, rounds: int, topology: MixingMatrix, compressor: CompressorSpec):
    msgs = rounds * topology.total_degree
    return (
        state.floats_values + msgs * compressor.payload_floats,
        state.floats_with_indices + msgs * (compressor.payload_floats + compressor.index_floats),
    )


def docom_step(state, problem, topology, hyper, compressor, executor=None) -> NetworkState:
    """One iteration of doubly compressed momentum-assisted gradient tracking.

    Order: iterate half-step, compressed iterate gossip, momentum update on a
    fresh shared batch, tracker half-step, compressed tracker gossip.
    """
    agents, t, n = state.agents, state.t, state.n
    eta, gamma, beta = hyper.eta, hyper.gamma, hyper.beta

    theta_half = [a.theta - eta * a.g for a in agents]
    theta_hat = _gossip_round([a.theta_hat for a in agents], theta_half, compressor, topology, state.seed, t, STREAM_Q_THETA)
    theta_new = [theta_half[i] + gamma * _mix(topology, i, theta_hat[i]) for i in range(n)]

    def local(i):
        batch = problem.sample_batch(i, hyper.batch_size, agent_rng(state.seed, i, t, STREAM_BATCH))
        return problem.stoch_grad_pair(i, theta_new[i], agents[i].theta, batch)

    grads = _map(executor, local, n)
    v_new = [beta * g_new + (1.0 - beta) * (a.v + g_new - g_old) for a, (g_new, g_old) in zip(agents, grads)]
    g_half = [a.g + v_new[i] - a.v for i, a in enumerate(agents)]
    g_hat = _gossip_round([a.g_hat for a in agents], g_half, compressor, topology, state.seed, t, STREAM_Q_G)
    g_new = [g_half[i] + gamma * _mix(topology, i, g_hat[i]) for i in range(n)]

    fv, fi = _account(state, 2, topology, compressor)
    new_agents = [AgentState(theta_new[i], v_new[i], g_new[i], theta_hat[i], g_hat[i]) for i in range(n)]
    return NetworkState(new_agents, t + 1, state.seed, fv, fi)


def hsgd_step(state, problem, topology, hyper, compressor=None, executor=None) -> NetworkState:
    """Uncompressed momentum gradient tracking: :func:`docom_step` with the identity compressor."""
    return docom_step(state, problem, topology, hyper, CompressorSpec("identity", problem.d), executor)


def tracking_step(state, problem, topology, hyper, compressor=None, executor=None) -> NetworkState:
    """Plain stochastic gradient tracking: :func:`hsgd_step` with ``beta = 1``."""
    return hsgd_step(state, problem, topology, replace(hyper, beta=1.0), executor=executor)


def choco_step(state, problem, topology, hyper, compressor, executor=None) -> NetworkState:
    """Compressed gossip on the iterate with one local stochastic gradient step."""
    agents, t, n = state.agents, state.t, state.n

    def local(i):
        batch = problem.sample_batch(i, hyper.batch_size, agent_rng(state.seed, i, t, STREAM_BATCH))
        return problem.stoch_grad(i, agents[i].theta, batch)

    grads = _map(executor, local, n)
    theta_half = [a.theta - hyper.eta * grads[i] for i, a in enumerate(agents)]
    theta_hat = _gossip_round([a.theta_hat for a in agents], theta_half, compressor, topology, state.seed, t, STREAM_Q_THETA)
    theta_new = [theta_half[i] + hyper.gamma * _mix(topology, i, theta_hat[i]) for i in range(n)]

    fv, fi = _account(state, 1, topology, compressor)
    new_agents = [AgentState(theta_new[i], a.v, a.g, theta_hat[i], a.g_hat) for i, a in enumerate(agents)]
    return NetworkState(new_agents, t + 1, state.seed, fv, fi)


def dsgd_step(state, problem, topology, hyper, compressor=None, executor=None) -> NetworkState:
    """Exact gossip of the iterates followed by a local stochastic gradient step."""
    agents, t, n = state.agents, state.t, state.n

    def local(i):
        batch = problem.sample_batch(i, hyper.batch_size, agent_rng(state.seed, i, t, STREAM_BATCH))
        return problem.stoch_grad(i, agents[i].theta, batch)

    grads = _map(executor, local, n)
    w = topology.weights
    theta_new = []
    for i in range(n):
        mixed = w[i, i] * agents[i].theta
        for j in topology.neighbor_lists[i]:
            mixed = mixed + w[i, j] * agents[j].theta
        theta_new.append(mixed - hyper.eta * grads[i])

    dense = CompressorSpec("identity", problem.d)
    fv, fi = _account(state, 1, topology, dense)
    new_agents = [AgentState(theta_new[i], a.v, a.g, a.theta_hat, a.g_hat) for i, a in enumerate(agents)]
    return NetworkState(new_agents, t + 1, state.seed, fv, fi)


@dataclass(frozen=True)
class Algorithm:
    name: str
    init: object
    step: object
    rounds: int
    compressed: bool
    uses_momentum: bool = False


ALGORITHMS = {
    "docom": Algorithm("docom", docom_init, docom_step, rounds=2, compressed=True, uses_momentum=True),
    "choco": Algorithm("choco", consensus_init, choco_step, rounds=1, compressed=True),
    "dsgd": Algorithm("dsgd", consensus_init, dsgd_step, rounds=1, compressed=False),
    "gnsd": Algorithm("gnsd", docom_init, tracking_step, rounds=2, compressed=False),
    "gt_hsgd": Algorithm("gt_hsgd", docom_init, hsgd_step, rounds=2, compressed=False, uses_momentum=True),
}


def floats_per_iteration(algo: str, topology: MixingMatrix, compressor: CompressorSpec, d: int, with_indices=False) -> int:
    """Values (optionally plus indices) transmitted network-wide in one iteration."""
    spec = ALGORITHMS[algo]
    comp = compressor if spec.compressed else CompressorSpec("identity", d)
    per_msg = comp.payload_floats + (comp.index_floats if with_indices else 0)
    return spec.rounds * topology.total_degree * per_msg
