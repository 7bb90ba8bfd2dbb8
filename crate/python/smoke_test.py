"""Smoke test for the graphbandit Python extension.

Build and install it first:
    pip install --no-build-isolation ./crates/python
"""

import math
import random

import graphbandit as gb


def check_graph():
    g = gb.Graph.complete(5)
    assert g.num_experts == 5
    assert g.out_neighbors(3) == [1, 2, 3, 4, 5]
    assert g.dominating_set() == [1]
    assert g.independence_number() == 1
    assert math.isclose(g.expected_observations([[0.25] * 5 for _ in range(5)], 1), 1.25)

    star = gb.Graph.from_edges(4, [(1, 1), (2, 2), (3, 3), (4, 4), (1, 2), (1, 3), (1, 4)])
    assert star.in_neighbors(3) == [1, 3]
    assert star.out_neighbors(3) == [3]

    parsed, probs = gb.Graph.parse("K=2\nedge 1 1 0.5\nedge 2 2 0.9\nedge 1 2 0.3\n")
    assert parsed.has_edge(1, 2) and not parsed.has_edge(2, 1)
    assert probs == [[0.5, 0.3], [0.0, 0.9]]

    try:
        gb.Graph.from_edges(2, [(1, 1)])
    except ValueError:
        pass
    else:
        raise AssertionError("a missing self-loop must be rejected")


def check_learner_loop():
    k, p = 4, 0.5
    g = gb.Graph.complete(k)
    probs = [[p] * k for _ in range(k)]
    learner = gb.Learner("exp3-ip", k, seed=3)
    rng = random.Random(0)
    losses = [0.1, 0.5, 0.6, 0.9]
    for t in range(1, 501):
        chosen = learner.select(t, g, probs)
        assert 1 <= chosen <= k
        seen = [(j, losses[j - 1]) for j in g.out_neighbors(chosen) if rng.random() < p]
        learner.update(t, chosen, seen)
    w = learner.weights
    assert max(range(k), key=lambda i: w[i]) == 0, w

    restored = gb.Learner.restore(learner.snapshot())
    assert restored.weights == learner.weights and restored.round == 500

    up = gb.Learner("exp3-up", 3, m=2)
    g3 = gb.Graph.complete(3)
    picks = []
    for t in range(1, 7):
        c = up.select(t, g3)
        picks.append(c)
        up.update(t, c, [(c, 0.2)])
    assert sorted(picks) == [1, 1, 2, 2, 3, 3]
    assert up.estimated_probability(1, 1) == 1.0


def check_experiment():
    res = gb.simulate(["exp3", "exp3-ip", "exp3-gr"], gb.Graph.complete(5), 2000, runs=4, seed=1)
    ip = res["summary"][("exp3-ip", "regret")]
    assert ip["runs"] == 4 and ip["std"] >= 0
    mean, std = res["series"][("exp3", "regret")]
    assert len(mean) == len(std) == 2000
    assert all(1 <= c <= 5 for c in res["chosen"][("exp3-gr", 1)])


def check_kernels():
    assert gb.importance_loss_estimate(0.5, 0.25, True) == 2.0
    eta, m, xi = gb.up_doubling_params(5, 4)
    assert math.isclose(eta, math.sqrt(math.log(4) / 64)) and m == 11
    assert math.isclose(xi, 15.3448, rel_tol=1e-4)
    assert gb.gr_doubling_params(5, 4, 1, 0.25)[1] == 57
    assert "exp3-gr" in gb.algorithms()


if __name__ == "__main__":
    check_graph()
    check_learner_loop()
    check_experiment()
    check_kernels()
    print("python smoke test passed")
