"""Coarse-to-fine MAP labelling of HMT nodes.

Each node's class is chosen to maximise ``f(c | d, v)``, proportional to the
likelihood of the node's subtree given ``c`` times the label-tree prior
``A[v, c]`` where ``v`` is the parent's label. The prior reuses the trained
state-transition matrix of the scale.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hmt import HmtParams, LikelihoodTree, _lse, _log

__all__ = ["LabelField", "map_labels"]


@dataclass
class LabelField:
    """Per-scale MAP labels.

    Attributes
    ----------
    labels : list of ndarray
        ``labels[k]`` holds the binary labels of level ``k`` (coarsest first).
    context : list
        Parent labels feeding each node, ``None`` for the root level.
    posterior : list of ndarray
        Context-fused class posteriors ``f(c | d, v)``, shape ``(n, 2)``.
    parents : list
        Parent indices per level, copied from the likelihood tree.
    """

    labels: list
    context: list
    posterior: list
    parents: list

    @property
    def levels(self) -> int:
        return len(self.labels)


def map_labels(lik: LikelihoodTree, params: HmtParams, soft: bool = False) -> LabelField:
    """Sweep MAP decisions from the root level down.

    Root nodes take the argmax of their posterior marginals. Ties go to
    label 0. With ``soft=True`` the parent's fused posterior replaces its hard
    label as context, i.e. the prior becomes ``sum_v q(v) A[v, c]``.
    """
    if lik.levels != params.levels:
        raise ValueError(f"likelihood tree has {lik.levels} levels, params {params.levels}")
    log_a = _log(params.transitions)

    post = [lik.posterior[0].copy()]
    labels = [np.argmax(post[0], axis=1)]
    context = [None]
    for k in range(1, lik.levels):
        parents = lik.parents[k]
        if parents is None or len(parents) != len(lik.log_beta[k]):
            raise ValueError(f"level {k + 1}: missing parent labels")
        if soft:
            prior = post[k - 1][parents] @ params.transitions[k - 1]
            log_f = lik.log_beta[k] + _log(prior)
        else:
            v = labels[k - 1][parents]
            log_f = lik.log_beta[k] + log_a[k - 1][v]
        labels.append(np.argmax(log_f, axis=1))
        post.append(np.exp(log_f - _lse(log_f, axis=1)[:, None]))
        context.append(labels[k - 1][parents])
    return LabelField(labels=labels, context=context, posterior=post, parents=list(lik.parents))
