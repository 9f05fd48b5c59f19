import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patrolsynth import fixtures as F
from patrolsynth.evaluator import (
    SolverError,
    attacker_best_response,
    bottom_sccs,
    component_chain,
    damage_edges,
    evaluate,
    pin_target,
    solve_dense,
    solve_hitting,
)
from patrolsynth.graph import PatrollingGraph, random_graph
from patrolsynth.oracle import value_iteration_hitting
from patrolsynth.strategy import (
    AugmentedGraph,
    RegularStrategy,
    cutoff,
    from_rows,
    random_init,
    softmax,
    support_graph,
)

# closed form for the memoryless hub strategy at its optimal p: 2 + 4/(1-p) = (9 + sqrt 41)/2
HUB_VALUE = (9.0 + math.sqrt(41.0)) / 2.0


def random_strategy(seed, n=None, sparsify=0.0):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(2, 7))
    g = random_graph(n, seed)
    mem = {v: int(rng.integers(1, 3)) for v in g.vertices}
    sigma = softmax(random_init(g, mem, seed))
    if sparsify:
        sigma = cutoff(sigma, sparsify)
    return sigma


def test_full_support_gives_single_bottom_component():
    sigma = random_strategy(5)
    dec = bottom_sccs(support_graph(sigma))
    assert dec.bottom == [tuple(range(sigma.layout.n_aug))]


def test_loop_support_is_one_bottom_pair(sigma_loop):
    dec = bottom_sccs(support_graph(sigma_loop))
    assert dec.bottom == [(0, 1)]


def test_transient_singleton():
    ghat = AugmentedGraph((("a", 1), ("b", 1), ("c", 1)), ((0, 1), (1, 2), (2, 1)))
    dec = bottom_sccs(ghat)
    assert dec.components == ((0,), (1, 2))
    assert dec.bottom_flags == (False, True)


def test_hitting_times_with_memory(sigma_c):
    y = solve_hitting(tuple(range(4)), "t2", sigma_c).as_dict(sigma_c)
    assert y[("v", 2)] == pytest.approx(2.0, abs=1e-12)
    assert y[("t2", 1)] == 0.0
    assert y[("t1", 1)] == pytest.approx(2.0, abs=1e-12)
    assert y[("v", 1)] == pytest.approx(1.0, abs=1e-12)


def test_hitting_time_lazy_switching(sigma_lazy):
    y = solve_hitting((0, 1), "t2", sigma_lazy).as_dict(sigma_lazy)
    assert y[("t1", 1)] == pytest.approx(100.0, abs=1e-9)
    assert y[("t2", 1)] == 0.0


def test_damage_on_return_edge(sigma_c):
    comp = tuple(range(4))
    y = solve_hitting(comp, "t2", sigma_c)
    lay = sigma_c.layout
    ks = np.flatnonzero(sigma_c.probs > 0)
    dmg = dict(zip(((lay.aug[lay.src[k]], lay.aug[lay.dst[k]]) for k in ks), damage_edges(comp, "t2", y, sigma_c, ks)))
    assert dmg[(("t2", 1), ("v", 2))] == pytest.approx(6.0, abs=1e-12)
    # edges that end at t2 only cost their own traversal
    assert dmg[(("v", 1), ("t2", 1))] == pytest.approx(2.0 * 1, abs=1e-15)


def test_damage_lazy_self_loop(sigma_lazy):
    y = solve_hitting((0, 1), "t2", sigma_lazy)
    lay = sigma_lazy.layout
    ks = np.flatnonzero(sigma_lazy.probs > 0)
    dmg = damage_edges((0, 1), "t2", y, sigma_lazy, ks)
    loop = [i for i, k in enumerate(ks) if lay.src[k] == lay.dst[k] == lay.index[("t1", 1)]][0]
    assert dmg[loop] == pytest.approx(101.0, abs=1e-9)


def test_evaluate_examples(sigma_loop, sigma_b, sigma_c):
    assert evaluate(sigma_loop).value == pytest.approx(2.0, abs=1e-12)
    assert evaluate(sigma_b).value == pytest.approx(HUB_VALUE, abs=1e-9)
    report = evaluate(sigma_c)
    assert report.value == pytest.approx(6.0, abs=1e-9)
    assert report.unambiguous and report.val_equals_bound


def test_component_missing_a_target_is_infinite(hub_graph):
    # v always goes back to t1, so t2 is transient
    mem = {"t1": 1, "v": 1, "t2": 1}
    sigma = from_rows(
        hub_graph,
        mem,
        {("t1", 1): {("v", 1): 1.0}, ("v", 1): {("t1", 1): 1.0}, ("t2", 1): {("v", 1): 1.0}},
    )
    report = evaluate(sigma)
    assert math.isinf(report.value)
    (w,) = report.witness
    assert w.target == "t2" and not w.reachable
    assert report.to_dict()["value"] == "inf"
    assert attacker_best_response(report)[0]["unreachable"]


def test_best_component_is_the_cheaper_one():
    g = PatrollingGraph(
        ["a", "b", "c", "d"],
        {"a": 1.0, "b": 1.0, "c": 1.0, "d": 1.0},
        {("a", "b"): 1, ("b", "a"): 1, ("b", "c"): 1, ("c", "d"): 1, ("d", "c"): 1, ("c", "b"): 1},
    )
    mem = {v: 1 for v in g.vertices}
    sigma = from_rows(
        g,
        mem,
        {
            ("a", 1): {("b", 1): 1.0},
            ("b", 1): {("a", 1): 1.0},
            ("c", 1): {("d", 1): 1.0},
            ("d", 1): {("c", 1): 1.0},
        },
    )
    report = evaluate(sigma)
    assert len(report.components) == 2
    assert math.isinf(report.value)


def test_witness_of_memory_strategy(sigma_c):
    report = evaluate(sigma_c)
    (w,) = report.witness
    # three attacks tie at 6; the lowest (target, edge) index wins
    assert w.damage == pytest.approx(6.0, abs=1e-12)
    assert ("t2", (("t2", 1), ("v", 2))) in w.ties
    assert len(w.ties) == 3


def test_loop_witness(sigma_loop):
    (a,) = attacker_best_response(evaluate(sigma_loop))
    assert a["damage"] == pytest.approx(2.0)
    assert a["edge"][0][0] == a["target"]


def test_report_json_shape(sigma_c):
    data = evaluate(sigma_c).to_dict()
    assert set(data) == {"value", "unambiguous", "best_component", "witness"}
    assert set(data["witness"][0]) == {"component", "target", "edge", "damage", "ties"}


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), cut=st.sampled_from([0.0, 0.1, 0.25]))
def test_solution_properties(seed, cut):
    sigma = random_strategy(seed, sparsify=cut)
    lay = sigma.layout
    report = evaluate(sigma)
    for (ci, t), y in report.hitting.items():
        if y.infinite:
            continue
        comp = report.components[ci]
        k = sigma.graph.targets.index(t)
        # one-step expansion on non-target rows
        P, c = component_chain(sigma, comp)
        pinned = lay.target_of[np.asarray(comp)] == k
        rhs = c + P @ y.values
        np.testing.assert_allclose(y.values[~pinned], rhs[~pinned], rtol=1e-10, atol=1e-10)
        assert np.all(y.values[pinned] == 0.0)
        assert np.all(y.values >= 0)
        # permuted variable order gives the same solution
        perm = np.random.default_rng(seed).permutation(len(comp))
        A, b = pin_target(P, c, pinned)
        yp = np.linalg.solve(A[np.ix_(perm, perm)], b[perm])
        np.testing.assert_allclose(yp, y.values[perm], rtol=1e-10, atol=1e-10)
    for dm in report.damages:
        finite = np.isfinite(dm.values)
        alpha = lay.costs[:, None]
        assert np.all(dm.values[finite] >= (alpha * lay.tm[dm.edges][None, :])[finite] - 1e-12)
        # edges into the same augmented vertex differ only by their own traversal time
        dst = lay.dst[dm.edges]
        for j in np.unique(dst):
            idx = np.flatnonzero(dst == j)
            base = dm.values[:, idx[0]] - alpha[:, 0] * lay.tm[dm.edges[idx[0]]]
            for e in idx[1:]:
                other = dm.values[:, e] - alpha[:, 0] * lay.tm[dm.edges[e]]
                np.testing.assert_allclose(other, base, rtol=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), c=st.floats(0.1, 10.0))
def test_cost_scaling(seed, c):
    sigma = random_strategy(seed, sparsify=0.1)
    g = sigma.graph
    scaled_g = PatrollingGraph(g.vertices, {t: c * a for t, a in g.costs.items()}, g.edges)
    scaled = from_rows(scaled_g, sigma.memory, sigma.rows)
    r1, r2 = evaluate(sigma), evaluate(scaled)
    if math.isinf(r1.value):
        assert math.isinf(r2.value)
        return
    assert r2.value == pytest.approx(c * r1.value, rel=1e-12)
    for w1, w2 in zip(r1.witness, r2.witness):
        if len(w1.ties) == 1:
            assert (w1.target, w1.edge) == (w2.target, w2.edge)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_agrees_with_value_iteration(seed):
    sigma = random_strategy(seed, n=int(np.random.default_rng(seed).integers(2, 6)), sparsify=0.1)
    if sigma.layout.n_aug > 10:
        return
    report = evaluate(sigma)
    for (ci, t), y in report.hitting.items():
        if y.infinite:
            continue
        vi = value_iteration_hitting(sigma, report.components[ci], t, tol=1e-13)
        np.testing.assert_allclose(vi.values, y.values, rtol=0, atol=1e-8)


@pytest.mark.filterwarnings("ignore")
def test_singular_system_is_reported():
    # a row that can never reach a pinned row makes the system singular
    A = np.array([[0.0, 0.0], [0.0, 1.0]])
    with pytest.raises(SolverError):
        solve_dense(A, np.array([1.0, 0.0]))


def test_evaluate_rejects_foreign_graph(sigma_c, loop_graph):
    with pytest.raises(ValueError):
        evaluate(sigma_c, loop_graph)


def test_strategy_on_other_graph_instance_ok(sigma_c):
    same = F.hub_with_two_targets()
    assert evaluate(sigma_c, same).value == pytest.approx(6.0)


def test_regular_strategy_probs_untouched(sigma_c):
    before = sigma_c.probs.copy()
    evaluate(sigma_c)
    np.testing.assert_array_equal(before, sigma_c.probs)
    assert isinstance(sigma_c, RegularStrategy)
