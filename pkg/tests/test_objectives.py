import math

import numpy as np
import pytest

from conftest import central_difference, rel_error, small_academic_graph, toy_words
from hetembed.exceptions import ConfigError
from hetembed.objectives import (
    Objective,
    Parameters,
    hetero_softmax,
    log_sigmoid,
    normalize_variant,
    triplet_loss_hsg,
    triplet_loss_hsg_sr,
    triplet_loss_se_hsg,
)
from hetembed.textenc import GruParams, encode_forward, tokenize

LOG4 = 2 * math.log(2)


def make_problem(variant, seed, d=4, n_triplets=12, zero=False):
    g = small_academic_graph()
    words = toy_words(dim=3, seed=seed)
    content = {int(v): words.lookup(tokenize(g.content(int(v)))) for v in g.content_nodes}
    rng = np.random.default_rng(seed)
    n = g.n_nodes
    if variant == "se-hsg":
        row_of = np.full(n, -1)
        free = ~g.content_mask
        row_of[free] = np.arange(free.sum())
    else:
        row_of = np.arange(n)
    n_rows = int((row_of >= 0).sum())
    theta = np.zeros((n_rows, d)) if zero else rng.normal(scale=0.5, size=(n_rows, d))
    phi = None
    if variant != "hsg":
        phi = GruParams.zeros(d, 3) if zero else GruParams.init(d, 3, rng)
    types = g.types
    trip = []
    while len(trip) < n_triplets:
        v, c = rng.integers(n, size=2)
        same = np.flatnonzero(types == types[c])
        trip.append((v, c, rng.choice(same)))
    return Objective(variant, content, n, gamma=0.7), Parameters(theta, row_of, phi), np.array(trip)


@pytest.mark.parametrize("variant", ["hsg", "hsg-sr", "se-hsg"])
@pytest.mark.parametrize("seed", range(4))
def test_full_gradient_matches_finite_differences(variant, seed):
    obj, params, trip = make_problem(variant, seed)
    loss, dtheta, dphi = obj.full_gradient(params, trip)
    f = lambda: obj.loss(params, trip)
    assert math.isclose(loss, f(), rel_tol=1e-12)
    assert rel_error(dtheta, central_difference(f, params.theta)) < 1e-6
    if params.phi is not None:
        for name, mat in params.phi.as_dict().items():
            assert rel_error(dphi[name], central_difference(f, mat)) < 1e-6, name


@pytest.mark.parametrize("variant", ["hsg", "se-hsg"])
def test_zero_parameters_give_two_log_two(variant):
    obj, params, trip = make_problem(variant, 0, zero=True)
    assert abs(obj.loss(params, trip) / len(trip) - LOG4) < 1e-12


def test_semantic_penalty_by_hand():
    g = small_academic_graph()
    a1, p1, p2 = g.index("A1"), g.index("P1"), g.index("P2")
    theta = np.zeros((g.n_nodes, 2))
    theta[p1] = [1.0, 2.0]
    theta[p2] = [-1.0, 0.5]
    X1 = np.array([[0.3, -0.2]])
    X2 = np.array([[0.1, 0.4], [-0.5, 0.2]])
    phi = GruParams.init(2, 2, np.random.default_rng(9))
    E1 = encode_forward(phi, X1)[0]
    E2 = encode_forward(phi, X2)[0]
    gamma = 0.5
    loss, _, _ = triplet_loss_hsg_sr((a1, p1, p2), theta, phi, {p1: X1, p2: X2}, gamma)
    # all dot products with the zero author row vanish, so the structural part is 2 log 2
    want = LOG4 + gamma * (np.sum((theta[p1] - E1) ** 2) + np.sum((theta[p2] - E2) ** 2))
    assert abs(loss - want) < 1e-12


def test_penalty_counts_repeated_node_once():
    g = small_academic_graph()
    a1, p1 = g.index("A1"), g.index("P1")
    theta = np.zeros((g.n_nodes, 2))
    theta[p1] = [1.0, -1.0]
    phi = GruParams.zeros(2, 2)
    loss, _, _ = triplet_loss_hsg_sr((a1, p1, p1), theta, phi, {p1: np.ones((1, 2))}, 1.0)
    assert abs(loss - (LOG4 + 2.0)) < 1e-12


def test_hsg_single_triplet_closed_form():
    theta = np.array([[0.2, -0.1], [0.5, 0.3], [-0.4, 0.8]])
    loss, grads = triplet_loss_hsg((0, 1, 2), theta)
    v, c, n = theta
    sp, sn = v @ c, v @ n
    sig = lambda x: 1 / (1 + math.exp(-x))
    assert abs(loss - (-math.log(sig(sp)) - math.log(sig(-sn)))) < 1e-12
    assert np.allclose(grads[0], (sig(sp) - 1) * c + sig(sn) * n)
    assert np.allclose(grads[1], (sig(sp) - 1) * v)
    assert np.allclose(grads[2], sig(sn) * v)


def test_se_hsg_ignores_theta_rows_of_content_nodes():
    g = small_academic_graph()
    a1, p1, p2 = g.index("A1"), g.index("P1"), g.index("P2")
    rng = np.random.default_rng(0)
    theta = rng.normal(size=(g.n_nodes, 3))
    phi = GruParams.init(3, 2, rng)
    content = {p1: rng.normal(size=(2, 2)), p2: rng.normal(size=(3, 2))}
    l1, grads, _ = triplet_loss_se_hsg((a1, p1, p2), theta, phi, content)
    theta[p1] += 10.0
    l2, _, _ = triplet_loss_se_hsg((a1, p1, p2), theta, phi, content)
    assert l1 == l2
    assert set(grads) == {a1}


def test_batch_row_gradients_are_aggregated():
    obj, params, trip = make_problem("hsg", 1, n_triplets=30)
    _, rows, row_grads, _ = obj.batch(params, trip)
    assert len(np.unique(rows)) == len(rows)
    _, dense, _ = obj.full_gradient(params, trip)
    assert np.allclose(dense[rows], row_grads)


def test_log_sigmoid_stable():
    x = np.array([-800.0, -30.0, 0.0, 30.0, 800.0])
    out = log_sigmoid(x)
    assert np.all(np.isfinite(out))
    assert np.allclose(out[1:4], np.log(1 / (1 + np.exp(-x[1:4]))))
    assert out[0] == -800.0 and out[-1] == 0.0


def test_variant_names():
    assert normalize_variant("SE_HSG") == "se-hsg"
    with pytest.raises(ConfigError):
        normalize_variant("hsg-xl")
    with pytest.raises(ConfigError):
        Objective("hsg", {}, 3, gamma=-1)


def test_hetero_softmax_normalized():
    reps = np.random.default_rng(0).normal(size=(6, 3))
    p = hetero_softmax(reps, 0, np.array([1, 2, 3]))
    assert abs(p.sum() - 1) < 1e-12 and np.all(p > 0)
