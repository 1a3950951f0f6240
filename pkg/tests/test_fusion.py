import numpy as np
import pytest
from scipy.special import softmax

from mdis.fusion import map_labels
from mdis.hmt import HmtParams, NodeTree, upward_downward

from oracles import map_oracle, quad_tree_5, random_params, subtree_loglik


def _fuse(tree, params, soft=False):
    return map_labels(upward_downward(tree, params), params, soft=soft)


def _five_node_tree(rng):
    """Random forest with exactly five nodes over two or three levels."""
    shapes = [[1, 4], [2, 3], [1, 2, 2], [1, 1, 3], [2, 2, 1], [1, 3, 1]]
    counts = shapes[rng.integers(len(shapes))]
    obs = [rng.normal(scale=rng.uniform(0.3, 3.0), size=(n, 3)) for n in counts]
    parents = [None] + [rng.integers(0, counts[k - 1], size=counts[k]) for k in range(1, len(counts))]
    return NodeTree(obs, parents)


def _two_node_tree(rng):
    return NodeTree([rng.normal(size=(1, 3)), rng.normal(scale=2.0, size=(1, 3))], [None, [0]])


def _swap_states(p):
    return HmtParams(p.flavor, p.root_prior[::-1], p.transitions[:, ::-1, ::-1], p.emission[:, ::-1])


def test_two_node_exhaustive():
    rng = np.random.default_rng(0)
    for _ in range(200):
        tree = _two_node_tree(rng)
        params = random_params(rng, 2, 3)
        out = _fuse(tree, params)
        # root: argmax of the exact marginal over both child states
        root_score = subtree_loglik(tree, params, 0, 0) + np.log(params.root_prior)
        root = int(root_score[1] > root_score[0])
        # child: the four (parent, child) label pairs, parent fixed to its MAP label
        child_ll = subtree_loglik(tree, params, 1, 0)
        pairs = {(v, c): child_ll[c] + np.log(params.transitions[0][v, c]) for v in (0, 1) for c in (0, 1)}
        child = int(pairs[(root, 1)] > pairs[(root, 0)])
        assert out.labels[0][0] == root
        assert out.labels[1][0] == child
        assert out.context[1][0] == root
        np.testing.assert_allclose(
            out.posterior[1][0], softmax([pairs[(root, 0)], pairs[(root, 1)]]), rtol=1e-10
        )


@pytest.mark.parametrize("make_tree", [_five_node_tree, quad_tree_5])
def test_five_node_oracle(make_tree):
    rng = np.random.default_rng(1)
    for _ in range(100):
        tree = make_tree(rng)
        params = random_params(rng, tree.levels, 3)
        out = _fuse(tree, params)
        expected = map_oracle(tree, params)
        for got, want in zip(out.labels, expected):
            np.testing.assert_array_equal(got, want)


def test_identity_transitions_copy_parent_label():
    rng = np.random.default_rng(2)
    obs = [rng.normal(scale=3.0, size=(1, 3)), rng.normal(size=(4, 3))]
    emission = np.array([[[1.0] * 3, [9.0] * 3], [[2.0] * 3, [2.0] * 3]])
    params = HmtParams("thmt", [0.5, 0.5], [np.eye(2)], emission)
    out = _fuse(NodeTree(obs, [None, np.zeros(4, int)]), params)
    np.testing.assert_array_equal(out.labels[1], out.labels[0][0])


def test_root_posterior_argmax():
    params = HmtParams("thmt", [0.8, 0.2], np.zeros((0, 2, 2)), np.ones((1, 2, 1)))
    out = _fuse(NodeTree([[[0.3]]], [None]), params)
    np.testing.assert_allclose(out.posterior[0][0], [0.8, 0.2])
    assert out.labels[0][0] == 0


def test_ties_go_to_surround():
    params = HmtParams("thmt", [0.5, 0.5], [[[0.5, 0.5], [0.5, 0.5]]], np.ones((2, 2, 1)))
    out = _fuse(NodeTree([[[1.0]], [[2.0], [-1.0]]], [None, [0, 0]]), params)
    for lab in out.labels:
        assert np.all(lab == 0)


def test_state_swap_flips_every_label():
    rng = np.random.default_rng(3)
    for _ in range(50):
        tree = _five_node_tree(rng)
        params = random_params(rng, tree.levels, 3)
        a = _fuse(tree, params)
        b = _fuse(tree, _swap_states(params))
        for la, lb, pa, pb in zip(a.labels, b.labels, a.posterior, b.posterior):
            np.testing.assert_array_equal(lb, 1 - la)
            np.testing.assert_allclose(pb, pa[:, ::-1], rtol=1e-12)


def test_deterministic():
    rng = np.random.default_rng(4)
    tree = _five_node_tree(rng)
    params = random_params(rng, tree.levels, 3)
    a, b = _fuse(tree, params), _fuse(tree, params)
    for la, lb, pa, pb in zip(a.labels, b.labels, a.posterior, b.posterior):
        np.testing.assert_array_equal(la, lb)
        np.testing.assert_array_equal(pa, pb)


def test_label_field_invariants():
    rng = np.random.default_rng(5)
    tree = _five_node_tree(rng)
    out = _fuse(tree, random_params(rng, tree.levels, 3))
    assert out.context[0] is None
    for k in range(out.levels):
        assert set(np.unique(out.labels[k])) <= {0, 1}
        assert np.all((out.posterior[k] >= 0) & (out.posterior[k] <= 1))
        np.testing.assert_allclose(out.posterior[k].sum(axis=1), 1.0, atol=1e-12)
        if k:
            np.testing.assert_array_equal(out.context[k], out.labels[k - 1][tree.parents[k]])


def test_soft_context_uses_parent_posterior():
    rng = np.random.default_rng(6)
    tree = quad_tree_5(rng)
    params = random_params(rng, 2, 3)
    out = _fuse(tree, params, soft=True)
    q = out.posterior[0][0]
    for i in range(4):
        score = subtree_loglik(tree, params, 1, i) + np.log(q @ params.transitions[0])
        np.testing.assert_allclose(out.posterior[1][i], softmax(score), rtol=1e-10)


def test_level_mismatch_rejected():
    rng = np.random.default_rng(7)
    tree = quad_tree_5(rng)
    params = random_params(rng, 2, 3)
    lik = upward_downward(tree, params)
    with pytest.raises(ValueError, match="levels"):
        map_labels(lik, random_params(rng, 3, 3))
