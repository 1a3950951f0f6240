"""Independent reference computations used by the tests.

Everything here works by exhaustive enumeration over hidden-state
assignments, with densities from scipy, and shares no code with the
message-passing implementation under test.
"""
import itertools

import numpy as np
from scipy.special import logsumexp
from scipy.stats import multivariate_normal, norm

from mdis.hmt import HmtParams, NodeTree


def flatten(tree):
    """Global node list: (level, index, global parent or -1)."""
    offsets = np.cumsum([0] + [len(o) for o in tree.observations])
    nodes = []
    for k, obs in enumerate(tree.observations):
        for i in range(len(obs)):
            par = -1 if k == 0 else int(offsets[k - 1] + tree.parents[k][i])
            nodes.append((k, i, par))
    return nodes


def node_logpdf(x, params, level):
    out = np.empty(2)
    for m in range(2):
        if params.vector:
            out[m] = multivariate_normal(np.zeros(len(x)), params.emission[level, m]).logpdf(x)
        else:
            out[m] = norm.logpdf(x, scale=np.sqrt(params.emission[level, m])).sum()
    return out


def joint_table(tree, params):
    """Log joint probability of every state assignment, shape (2**n,)."""
    nodes = flatten(tree)
    n = len(nodes)
    em = np.array([node_logpdf(tree.observations[k][i], params, k) for k, i, _ in nodes])
    with np.errstate(divide="ignore"):
        log_prior = np.log(params.root_prior)
        log_a = np.log(params.transitions)
    states = np.array(list(itertools.product([0, 1], repeat=n)))
    logp = np.zeros(len(states))
    for g, (k, i, par) in enumerate(nodes):
        s = states[:, g]
        logp += em[g, s]
        if par < 0:
            logp += log_prior[s]
        else:
            logp += log_a[k - 1][states[:, par], s]
    return states, logp


def brute_force(tree, params):
    """Exact log-likelihood and per-level posteriors by enumeration."""
    states, logp = joint_table(tree, params)
    ll = logsumexp(logp)
    post_flat = np.stack(
        [np.array([np.exp(logsumexp(logp[states[:, g] == m]) - ll) for m in range(2)]) for g in range(states.shape[1])]
    )
    out, pos = [], 0
    for obs in tree.observations:
        out.append(post_flat[pos:pos + len(obs)])
        pos += len(obs)
    return ll, out


def subtree_loglik(tree, params, level, index):
    """log p(data in the subtree of a node | node state) for both states, by enumeration."""
    nodes = flatten(tree)
    g0 = next(g for g, (k, i, _) in enumerate(nodes) if k == level and i == index)
    members = [g0]
    for g, (_, _, par) in enumerate(nodes):
        if par in members:
            members.append(g)
    with np.errstate(divide="ignore"):
        log_a = np.log(params.transitions)
    out = np.empty(2)
    for c in range(2):
        rest = members[1:]
        terms = []
        for assign in itertools.product([0, 1], repeat=len(rest)):
            s = {g0: c, **dict(zip(rest, assign))}
            lp = 0.0
            for g in members:
                k, i, par = nodes[g]
                lp += node_logpdf(tree.observations[k][i], params, k)[s[g]]
                if g != g0:
                    lp += log_a[k - 1][s[par], s[g]]
            terms.append(lp)
        out[c] = logsumexp(terms)
    return out


def map_oracle(tree, params):
    """Node-by-node argmax of f(c | d, v) given the oracle's own parent labels."""
    with np.errstate(divide="ignore"):
        log_prior = np.log(params.root_prior)
        log_a = np.log(params.transitions)
    labels = []
    for k, obs in enumerate(tree.observations):
        lab = np.empty(len(obs), dtype=int)
        for i in range(len(obs)):
            sub = subtree_loglik(tree, params, k, i)
            if k == 0:
                score = sub + log_prior
            else:
                v = labels[k - 1][tree.parents[k][i]]
                score = sub + log_a[k - 1][v]
            lab[i] = 1 if score[1] > score[0] else 0
        labels.append(lab)
    return labels


def random_tree(rng, max_nodes=8, bands=None, levels=None):
    """Random forest with at most ``max_nodes`` nodes spread over 1-3 levels."""
    levels = levels or int(rng.integers(1, 4))
    bands = bands or int(rng.integers(1, 4))
    while True:
        counts = [int(rng.integers(1, 4))] + [int(rng.integers(1, 5)) for _ in range(levels - 1)]
        if sum(counts) <= max_nodes:
            break
    obs = [rng.normal(scale=rng.uniform(0.2, 3.0), size=(n, bands)) for n in counts]
    parents = [None] + [rng.integers(0, counts[k - 1], size=counts[k]) for k in range(1, levels)]
    return NodeTree(obs, parents)


def random_params(rng, levels, bands, flavor="thmt"):
    prior = rng.dirichlet([1.0, 1.0])
    trans = np.stack([np.stack([rng.dirichlet([1.0, 1.0]) for _ in range(2)]) for _ in range(levels - 1)]) if levels > 1 else np.zeros((0, 2, 2))
    if flavor == "vhmt":
        em = np.empty((levels, 2, bands, bands))
        for j in range(levels):
            for m in range(2):
                a = rng.normal(size=(bands, bands))
                em[j, m] = a @ a.T + 0.2 * np.eye(bands)
    else:
        em = np.exp(rng.normal(scale=1.0, size=(levels, 2, bands)))
    return HmtParams(flavor, prior, trans, em)


def quad_tree_5(rng, bands=3):
    """Root with four children, the smallest full quad-tree."""
    obs = [rng.normal(size=(1, bands)), rng.normal(scale=2.0, size=(4, bands))]
    return NodeTree(obs, [None, np.zeros(4, dtype=int)])
