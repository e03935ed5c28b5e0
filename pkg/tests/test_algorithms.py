from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from docom.algorithms import (
    ALGORITHMS,
    STREAM_BATCH,
    STREAM_INIT,
    HyperParams,
    agent_rng,
    choco_step,
    consensus_init,
    docom_init,
    docom_step,
    dsgd_step,
    floats_per_iteration,
    hsgd_step,
    tracking_step,
)
from docom.compression import CompressorSpec, compress
from docom.problems import QuadraticProblem, generate_synthetic, quadratic_pl_problem, sigmoid_classifier_problem
from docom.topology import complete_topology, from_weights, metropolis_topology, ring_topology
from oracles import dense_choco, dense_docom, dense_dsgd, metropolis_weights, random_connected_adjacency


def path3():
    return from_weights(metropolis_weights(np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], bool)))


def rowwise(spec):
    return lambda m: np.stack([compress(spec, row) for row in m])


def trajectory(step, state, problem, topo, hyper, comp, T, executor=None):
    out = [state]
    for _ in range(T):
        state = step(state, problem, topo, hyper, comp, executor)
        out.append(state)
    return out


def same_state(a, b):
    for x, y in zip(a.agents, b.agents):
        for f in ("theta", "v", "g"):
            if not np.array_equal(getattr(x, f), getattr(y, f)):
                return False
        for f in ("theta_hat", "g_hat"):
            hx, hy = getattr(x, f), getattr(y, f)
            if hx.keys() != hy.keys() or any(not np.array_equal(hx[k], hy[k]) for k in hx):
                return False
    return (a.t, a.floats_values, a.floats_with_indices) == (b.t, b.floats_values, b.floats_with_indices)


# -- hyperparameters -------------------------------------------------------------


def test_hyperparams_validation():
    HyperParams(eta=0.0)
    for bad in [dict(eta=-1), dict(eta=np.inf), dict(eta=0.1, gamma=0), dict(eta=0.1, gamma=1.5),
                dict(eta=0.1, beta=0), dict(eta=0.1, b0=0), dict(eta=0.1, batch_size=0)]:
        with pytest.raises(ValueError):
            HyperParams(**bad)


def test_agent_rng_is_counter_based():
    a = agent_rng(7, 3, 11, STREAM_BATCH).random(4)
    b = agent_rng(7, 3, 11, STREAM_BATCH).random(4)
    c = agent_rng(7, 3, 12, STREAM_BATCH).random(4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


# -- initialization --------------------------------------------------------------


def test_docom_init_invariants():
    ds = generate_synthetic([6, 4, 9, 5], d_feat=3, classes=2, rng=0)
    p = sigmoid_classifier_problem(ds, 1e-3)
    topo = ring_topology(4)
    theta0 = np.linspace(-1, 1, p.d)
    s = docom_init(p, topo, HyperParams(eta=0.1), seed=3, theta0=theta0)
    for i, a in enumerate(s.agents):
        assert set(a.theta_hat) == set(topo.closed_neighborhood(i)) == set(a.g_hat)
        assert np.array_equal(a.theta, theta0)
        assert all(np.array_equal(h, theta0) for h in a.theta_hat.values())
        assert all(not h.any() for h in a.g_hat.values())
        assert np.array_equal(a.g, a.v) and a.g is not a.v
        # b0 = None covers the local dataset
        assert np.array_equal(a.v, p.full_grad(i, theta0))


def test_docom_init_minibatch():
    ds = generate_synthetic([30, 40], d_feat=3, classes=2, rng=0)
    p = sigmoid_classifier_problem(ds, 1e-3)
    s = docom_init(p, ring_topology(2), HyperParams(eta=0.1, b0=5), seed=9)
    batch = p.sample_batch(1, 5, agent_rng(9, 1, 0, STREAM_INIT))
    assert np.array_equal(s.agents[1].v, p.stoch_grad(1, np.zeros(p.d), batch))


def test_init_mismatch_errors():
    p = quadratic_pl_problem(3, 4, rng=0)
    with pytest.raises(ValueError):
        docom_init(p, ring_topology(4), HyperParams(eta=0.1))
    with pytest.raises(ValueError):
        consensus_init(p, ring_topology(3), HyperParams(eta=0.1), theta0=np.zeros(5))


# -- DoCoM -------------------------------------------------------------------------


def test_two_agent_single_step_matches_dense():
    A = [np.eye(2), np.eye(2)]
    b = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    p = QuadraticProblem(A, b)
    topo = ring_topology(2)
    hyper = HyperParams(eta=0.1, gamma=0.5, beta=1.0)
    ident = CompressorSpec("identity", 2)
    s1 = docom_step(docom_init(p, topo, hyper), p, topo, hyper, ident)
    ref = dense_docom(A, b, topo.weights, 0.1, 0.5, 1.0, 1)[1]
    np.testing.assert_allclose(s1.thetas, ref[0], atol=1e-12, rtol=0)
    np.testing.assert_allclose(s1.gs, ref[2], atol=1e-12, rtol=0)


@pytest.mark.parametrize("comp_kind", ["identity", "top_k"])
def test_docom_matches_dense_reference(comp_kind):
    p = quadratic_pl_problem(3, 6, rng=5)
    topo = path3()
    comp = CompressorSpec(comp_kind, 6, 2)
    hyper = HyperParams(eta=0.05, gamma=0.4, beta=0.3)
    traj = trajectory(docom_step, docom_init(p, topo, hyper), p, topo, hyper, comp, 50)
    ref = dense_docom(p.A, p.b, topo.weights, 0.05, 0.4, 0.3, 50, compress_rows=rowwise(comp))
    for s, (theta, v, g, th_hat, g_hat) in zip(traj, ref):
        np.testing.assert_allclose(s.thetas, theta, atol=1e-12, rtol=0)
        np.testing.assert_allclose(s.vs, v, atol=1e-12, rtol=0)
        np.testing.assert_allclose(s.gs, g, atol=1e-12, rtol=0)
        np.testing.assert_allclose(s.self_hats("theta_hat"), th_hat, atol=1e-12, rtol=0)
        np.testing.assert_allclose(s.self_hats("g_hat"), g_hat, atol=1e-12, rtol=0)


def test_single_agent_reduction():
    p = quadratic_pl_problem(1, 4, rng=2, sigma=0.5)
    topo = ring_topology(1)
    hyper = HyperParams(eta=0.1, gamma=0.7, beta=0.4, batch_size=3)
    comp = CompressorSpec("top_k", 4, 1)
    s = docom_init(p, topo, hyper, seed=1)
    for _ in range(10):
        nxt = docom_step(s, p, topo, hyper, comp)
        np.testing.assert_array_equal(nxt.agents[0].theta, s.agents[0].theta - 0.1 * s.agents[0].g)
        np.testing.assert_allclose(nxt.agents[0].g, nxt.agents[0].v, atol=1e-14)
        s = nxt


def test_zero_gradients_are_a_fixed_point():
    p = QuadraticProblem([np.zeros((2, 3))] * 4, [np.zeros(2)] * 4)
    topo = ring_topology(4)
    hyper = HyperParams(eta=0.3, gamma=0.5, beta=0.2)
    theta0 = np.array([1.0, -2.0, 0.5])
    s0 = docom_init(p, topo, hyper, theta0=theta0)
    s = s0
    for _ in range(5):
        s = docom_step(s, p, topo, hyper, CompressorSpec("top_k", 3, 1))
    for a in s.agents:
        assert np.array_equal(a.theta, theta0) and not a.v.any() and not a.g.any()


def test_step_does_not_mutate_input():
    p = quadratic_pl_problem(3, 4, rng=0, sigma=0.1)
    topo = ring_topology(3)
    hyper = HyperParams(eta=0.1, gamma=0.5, beta=0.5)
    s = docom_init(p, topo, hyper)
    snapshot = [(a.theta.copy(), a.v.copy(), {k: v.copy() for k, v in a.theta_hat.items()}) for a in s.agents]
    docom_step(s, p, topo, hyper, CompressorSpec("top_k", 4, 2))
    for a, (th, v, hats) in zip(s.agents, snapshot):
        assert np.array_equal(a.theta, th) and np.array_equal(a.v, v)
        assert all(np.array_equal(a.theta_hat[k], hats[k]) for k in hats)


def test_docom_float_accounting():
    p = quadratic_pl_problem(4, 20, rng=0)
    topo = ring_topology(4)
    hyper = HyperParams(eta=0.01)
    comp = CompressorSpec("top_k", 20, 10)
    s = docom_step(docom_init(p, topo, hyper), p, topo, hyper, comp)
    assert s.floats_values == 160 and s.floats_with_indices == 320
    c = choco_step(consensus_init(p, topo, hyper), p, topo, hyper, comp)
    assert (c.floats_values, c.floats_with_indices) == (80, 160)
    assert floats_per_iteration("docom", topo, comp, 20) == 2 * floats_per_iteration("choco", topo, comp, 20)
    assert floats_per_iteration("gnsd", topo, comp, 20) == 2 * 8 * 20
    assert floats_per_iteration("docom", topo, comp, 20, with_indices=True) == 320


# -- CHOCO-SGD -------------------------------------------------------------------------


def test_choco_identity_full_consensus_is_gossip_of_half_step():
    p = quadratic_pl_problem(3, 4, rng=1)
    topo = path3()
    hyper = HyperParams(eta=0.1, gamma=1.0)
    ident = CompressorSpec("identity", 4)
    s = consensus_init(p, topo, hyper)
    for _ in range(5):
        half = s.thetas - 0.1 * np.stack([p.full_grad(i, s.thetas[i]) for i in range(3)])
        s = choco_step(s, p, topo, hyper, ident)
        np.testing.assert_allclose(s.thetas, topo.weights @ half, atol=1e-12)


def test_choco_matches_dense_reference():
    p = quadratic_pl_problem(3, 6, rng=3)
    topo = path3()
    comp = CompressorSpec("top_k", 6, 2)
    hyper = HyperParams(eta=0.05, gamma=0.3)
    traj = trajectory(choco_step, consensus_init(p, topo, hyper), p, topo, hyper, comp, 30)
    ref = dense_choco(p.A, p.b, topo.weights, 0.05, 0.3, 30, rowwise(comp))
    for s, theta in zip(traj, ref):
        np.testing.assert_allclose(s.thetas, theta, atol=1e-12, rtol=0)


def test_choco_zero_gradient_fixed_point():
    p = QuadraticProblem([np.zeros((1, 2))] * 3, [np.zeros(1)] * 3)
    topo = ring_topology(3)
    hyper = HyperParams(eta=0.5, gamma=0.5)
    s = consensus_init(p, topo, hyper, theta0=[3.0, 4.0])
    s = choco_step(s, p, topo, hyper, CompressorSpec("top_k", 2, 1))
    assert all(np.array_equal(a.theta, [3.0, 4.0]) for a in s.agents)


# -- DSGD --------------------------------------------------------------------------------


def test_dsgd_matches_dense_reference():
    A = [np.eye(2), np.eye(2)]
    b = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    q = QuadraticProblem(A, b)
    topo = ring_topology(2)
    hyper = HyperParams(eta=0.1)
    s = dsgd_step(consensus_init(q, topo, hyper), q, topo, hyper)
    np.testing.assert_allclose(s.thetas, dense_dsgd(A, b, topo.weights, 0.1, 1)[1], atol=1e-12, rtol=0)
    p = quadratic_pl_problem(5, 3, rng=4)
    topo = ring_topology(5)
    traj = trajectory(dsgd_step, consensus_init(p, topo, hyper), p, topo, hyper, None, 20)
    for s, theta in zip(traj, dense_dsgd(p.A, p.b, topo.weights, 0.1, 20)):
        np.testing.assert_allclose(s.thetas, theta, atol=1e-12, rtol=0)
    assert traj[-1].floats_values == 20 * 10 * 3


def test_dsgd_single_agent_is_sgd():
    p = quadratic_pl_problem(1, 3, rng=0, sigma=1.0)
    topo = ring_topology(1)
    hyper = HyperParams(eta=0.05, batch_size=2)
    s = consensus_init(p, topo, hyper, seed=4)
    theta = np.zeros(3)
    for t in range(10):
        batch = p.sample_batch(0, 2, agent_rng(4, 0, t, STREAM_BATCH))
        theta = theta - 0.05 * p.stoch_grad(0, theta, batch)
        s = dsgd_step(s, p, topo, hyper)
        np.testing.assert_array_equal(s.agents[0].theta, theta)


def test_dsgd_pure_consensus_contracts():
    p = QuadraticProblem([np.zeros((1, 4))] * 6, [np.zeros(1)] * 6)
    topo = ring_topology(6)
    hyper = HyperParams(eta=0.0)
    s = consensus_init(p, topo, hyper)
    rng = np.random.default_rng(0)
    for a in s.agents:
        a.theta = rng.standard_normal(4)
    for _ in range(10):
        gap = np.linalg.norm(s.thetas - s.thetas.mean(0))
        s = dsgd_step(s, p, topo, hyper)
        assert np.linalg.norm(s.thetas - s.thetas.mean(0)) <= (1 - topo.rho) * gap + 1e-12


# -- GNSD / GT-HSGD reductions --------------------------------------------------------


def test_hsgd_equals_docom_identity_bitwise():
    p = quadratic_pl_problem(4, 5, rng=0, sigma=0.3)
    topo = ring_topology(4)
    hyper = HyperParams(eta=0.05, gamma=0.6, beta=0.2, batch_size=2)
    ident = CompressorSpec("identity", 5)
    a = trajectory(hsgd_step, docom_init(p, topo, hyper, seed=5), p, topo, hyper, CompressorSpec("top_k", 5, 1), 100)
    b = trajectory(docom_step, docom_init(p, topo, hyper, seed=5), p, topo, hyper, ident, 100)
    assert all(same_state(x, y) for x, y in zip(a, b))


def test_tracking_equals_hsgd_beta_one_bitwise():
    p = quadratic_pl_problem(4, 5, rng=0, sigma=0.3)
    topo = ring_topology(4)
    hyper = HyperParams(eta=0.05, gamma=0.6, beta=0.2, batch_size=2)
    a = trajectory(tracking_step, docom_init(p, topo, hyper, seed=1), p, topo, hyper, None, 60)
    b = trajectory(hsgd_step, docom_init(p, topo, hyper, seed=1), p, topo, HyperParams(0.05, 0.6, 1.0, None, 2), None, 60)
    assert all(same_state(x, y) for x, y in zip(a, b))


def test_single_agent_tracking_is_sgd():
    p = quadratic_pl_problem(1, 3, rng=1, sigma=1.0)
    topo = ring_topology(1)
    hyper = HyperParams(eta=0.1, batch_size=3, b0=2)
    s = docom_init(p, topo, hyper, seed=2)
    theta = np.zeros(3)
    g = p.stoch_grad(0, theta, p.sample_batch(0, 2, agent_rng(2, 0, 0, STREAM_INIT)))
    for t in range(15):
        theta = theta - 0.1 * g
        g = p.stoch_grad(0, theta, p.sample_batch(0, 3, agent_rng(2, 0, t, STREAM_BATCH)))
        s = tracking_step(s, p, topo, hyper)
        # g = g + v_new - v equals v_new only up to rounding
        np.testing.assert_allclose(s.agents[0].theta, theta, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(s.agents[0].v, g, rtol=1e-12, atol=1e-14)
        theta, g = s.agents[0].theta, s.agents[0].g


def test_registry():
    assert set(ALGORITHMS) == {"docom", "choco", "dsgd", "gnsd", "gt_hsgd"}
    assert ALGORITHMS["docom"].rounds == 2 and ALGORITHMS["choco"].rounds == 1


# -- trajectory invariants --------------------------------------------------------------


@st.composite
def scenarios(draw):
    n = draw(st.integers(2, 6))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    topo = metropolis_topology(random_connected_adjacency(n, draw(st.floats(0, 1)), rng))
    d = draw(st.integers(2, 8))
    p = quadratic_pl_problem(n, d, rng, sigma=draw(st.sampled_from([0.0, 0.5])))
    kind = draw(st.sampled_from(["identity", "top_k", "rand_k"]))
    comp = CompressorSpec(kind, d, draw(st.integers(1, d)))
    hyper = HyperParams(
        eta=draw(st.floats(0.001, 0.2)),
        gamma=draw(st.floats(0.05, 1.0)),
        beta=draw(st.floats(0.01, 1.0)),
        batch_size=draw(st.integers(1, 3)),
    )
    return p, topo, comp, hyper, seed


@settings(max_examples=40)
@given(scenarios())
def test_tracking_and_average_recursions(sc):
    p, topo, comp, hyper, seed = sc
    s = docom_init(p, topo, hyper, seed=seed % 1000)
    for _ in range(25):
        nxt = docom_step(s, p, topo, hyper, comp)
        vbar, gbar = nxt.vs.mean(0), nxt.gs.mean(0)
        scale = max(np.linalg.norm(vbar), np.linalg.norm(nxt.vs), 1e-12)
        assert np.linalg.norm(gbar - vbar) <= 1e-10 * scale
        expect = s.thetas.mean(0) - hyper.eta * s.gs.mean(0)
        assert np.linalg.norm(nxt.thetas.mean(0) - expect) <= 1e-10 * max(np.linalg.norm(nxt.thetas), 1e-12)
        s = nxt


@settings(max_examples=40)
@given(scenarios())
def test_replica_consistency(sc):
    p, topo, comp, hyper, seed = sc
    for step, init in ((docom_step, docom_init), (choco_step, consensus_init)):
        s = init(p, topo, hyper, seed=seed % 1000)
        for _ in range(10):
            s = step(s, p, topo, hyper, comp)
            for j in range(topo.n):
                for holder in topo.closed_neighborhood(j):
                    assert np.array_equal(s.agents[holder].theta_hat[j], s.agents[j].theta_hat[j])
                    assert np.array_equal(s.agents[holder].g_hat[j], s.agents[j].g_hat[j])


@pytest.mark.parametrize("name", sorted(ALGORITHMS))
def test_worker_count_does_not_change_trajectory(name):
    algo = ALGORITHMS[name]
    ds = generate_synthetic([8, 5, 12, 6, 9], d_feat=4, classes=3, rng=1)
    p = sigmoid_classifier_problem(ds, 1e-3)
    topo = ring_topology(5)
    hyper = HyperParams(eta=0.1, gamma=0.4, beta=0.3, batch_size=2)
    comp = CompressorSpec("rand_k", p.d, 3)
    serial = trajectory(algo.step, algo.init(p, topo, hyper, seed=7), p, topo, hyper, comp, 15)
    with ThreadPoolExecutor(4) as pool:
        threaded = trajectory(algo.step, algo.init(p, topo, hyper, seed=7), p, topo, hyper, comp, 15, pool)
    assert all(same_state(x, y) for x, y in zip(serial, threaded))


def test_complete_graph_identity_gamma_one_averages_exactly():
    p = quadratic_pl_problem(4, 3, rng=2)
    topo = complete_topology(4)
    hyper = HyperParams(eta=0.1, gamma=1.0, beta=1.0)
    s = docom_step(docom_init(p, topo, hyper), p, topo, hyper, CompressorSpec("identity", 3))
    np.testing.assert_allclose(s.thetas - s.thetas.mean(0), 0, atol=1e-15)
