"""Two-state wavelet hidden Markov trees.

Every node of a tree carries a hidden state, ``0`` for the small-variance
(surround) component and ``1`` for the large-variance (centre) component.
States follow a Markov chain from parent to child, and a node's coefficients
are zero-mean Gaussian given its state. Parameters are tied per scale, so a
single image is enough to train them.

Trees are duck-typed: anything exposing ``observations`` (per-level
``(n_nodes, bands)`` arrays, coarsest first) and ``parents`` (per-level flat
parent indices, ``None`` for the root level) works, including
:class:`~mdis.pyramid.WaveletQuadTree` and :class:`NodeTree`.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

__all__ = [
    "COV_RIDGE",
    "FLAVORS",
    "UPDATE_ALL",
    "VAR_FLOOR",
    "HmtParams",
    "LikelihoodTree",
    "NodeTree",
    "em_train",
    "em_train_vector",
    "emission_loglik",
    "init_params",
    "sample_quadtree",
    "universal_params",
    "upward_downward",
]

FLAVORS = ("uhmt", "thmt", "vhmt")
VAR_FLOOR = 1e-12
COV_RIDGE = 1e-9
UPDATE_ALL = ("prior", "transitions", "emission")
_ROW_TOL = 1e-12
_LOG2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class NodeTree:
    """A forest given explicitly level by level.

    ``parents[0]`` must be ``None``; ``parents[k][i]`` is the index, within
    level ``k - 1``, of the parent of node ``i`` of level ``k``.
    """

    observations: list
    parents: list

    def __post_init__(self):
        obs = [np.atleast_2d(np.asarray(o, dtype=np.float64)) for o in self.observations]
        par = [None] + [np.asarray(p, dtype=np.intp) for p in self.parents[1:]]
        if len(obs) != len(par):
            raise ValueError("observations and parents must have one entry per level")
        if self.parents[0] is not None:
            raise ValueError("the first level holds roots and cannot have parents")
        for k in range(1, len(obs)):
            if par[k].shape != (len(obs[k]),):
                raise ValueError(f"level {k}: need one parent index per node")
            if len(par[k]) and (par[k].min() < 0 or par[k].max() >= len(obs[k - 1])):
                raise ValueError(f"level {k}: parent index out of range")
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "parents", par)

    @property
    def levels(self) -> int:
        return len(self.observations)


@dataclass(frozen=True)
class HmtParams:
    """Tied parameters of a two-state HMT.

    Attributes
    ----------
    flavor : {'uhmt', 'thmt', 'vhmt'}
    root_prior : ndarray, shape (2,)
    transitions : ndarray, shape (levels - 1, 2, 2)
        ``transitions[j - 2][m, k] = P(child state k | parent state m)`` for
        scale ``j >= 2``.
    emission : ndarray
        Scalar flavours: variances of shape ``(levels, 2, bands)``, bands
        independent given the state. Vector flavour: covariances of shape
        ``(levels, 2, bands, bands)``.
    """

    flavor: str
    root_prior: np.ndarray
    transitions: np.ndarray
    emission: np.ndarray

    def __post_init__(self):
        for name in ("root_prior", "transitions", "emission"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        self._validate()

    def _validate(self):
        if self.flavor not in FLAVORS:
            raise ValueError(f"flavor: expected one of {FLAVORS}, got {self.flavor!r}")
        p = self.root_prior
        if p.shape != (2,) or not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
            raise ValueError(f"root_prior: must be two probabilities, got {p.tolist()}")
        if abs(p.sum() - 1.0) > _ROW_TOL:
            raise ValueError(f"root_prior: sums to {float(p.sum())!r}, not 1")

        levels = self.levels
        if self.transitions.shape != (max(levels - 1, 0), 2, 2):
            raise ValueError(
                f"transitions: expected shape {(levels - 1, 2, 2)}, got {self.transitions.shape}"
            )
        for k, a in enumerate(self.transitions):
            if not np.all(np.isfinite(a)) or np.any(a < 0) or np.any(a > 1):
                raise ValueError(f"transitions[scale {k + 2}]: entries must be probabilities")
            for m, s in enumerate(a.sum(axis=1)):
                if abs(s - 1.0) > _ROW_TOL:
                    raise ValueError(f"transitions[scale {k + 2}] row {m}: sums to {float(s)!r}, not 1")

        e = self.emission
        if self.vector:
            if e.ndim != 4 or e.shape[1] != 2 or e.shape[2] != e.shape[3]:
                raise ValueError(f"emission: vhmt needs (levels, 2, bands, bands), got {e.shape}")
            for j in range(levels):
                for m in range(2):
                    c = e[j, m]
                    if not np.all(np.isfinite(c)) or not np.allclose(c, c.T, rtol=0, atol=1e-12 * max(1.0, np.abs(c).max())):
                        raise ValueError(f"emission[scale {j + 1}, state {m}]: covariance not symmetric")
                    try:
                        np.linalg.cholesky(c)
                    except np.linalg.LinAlgError:
                        raise ValueError(
                            f"emission[scale {j + 1}, state {m}]: covariance not positive definite"
                        ) from None
        else:
            if e.ndim != 3 or e.shape[1] != 2:
                raise ValueError(f"emission: scalar flavours need (levels, 2, bands), got {e.shape}")
            if not np.all(np.isfinite(e)) or np.any(e < VAR_FLOOR):
                bad = np.argwhere(~(e >= VAR_FLOOR))[0]
                raise ValueError(
                    f"emission[scale {bad[0] + 1}, state {bad[1]}]: variance below floor {VAR_FLOOR}"
                )

    @property
    def vector(self) -> bool:
        return self.flavor == "vhmt"

    @property
    def levels(self) -> int:
        return self.emission.shape[0]

    @property
    def bands(self) -> int:
        return self.emission.shape[2]

    def variances(self) -> np.ndarray:
        """Per-band marginal variances, shape ``(levels, 2, bands)``."""
        if self.vector:
            return np.diagonal(self.emission, axis1=2, axis2=3).copy()
        return self.emission.copy()


def _lse(a: np.ndarray, axis) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def _log(a) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(a)


def emission_loglik(obs: np.ndarray, params: HmtParams, level: int) -> np.ndarray:
    """``log p(d | state)`` for every row of ``obs``; returns ``(n, 2)``."""
    obs = np.asarray(obs, dtype=np.float64)
    e = params.emission[level]
    if params.vector:
        out = np.empty((len(obs), 2))
        for m in range(2):
            chol = np.linalg.cholesky(e[m])
            z = np.linalg.solve(chol, obs.T)
            logdet = 2 * np.log(np.diag(chol)).sum()
            out[:, m] = -0.5 * (obs.shape[1] * _LOG2PI + logdet + np.sum(z * z, axis=0))
        return out
    sq = obs * obs
    return -0.5 * (
        obs.shape[1] * _LOG2PI
        + np.log(e).sum(axis=1)[None, :]
        + sq @ (1.0 / e).T
    )


@dataclass
class LikelihoodTree:
    """Result of one upward-downward sweep; all factors in the log domain.

    ``log_beta[k][i, m]`` is ``log p(subtree data | state m)`` and
    ``log_alpha[k][i, m]`` is ``log p(state m, data outside the subtree)``.
    ``log_message[k][i, m]`` is the child-to-parent message, indexed by the
    parent state. ``pair_posterior[k][i, m, c]`` is the joint posterior of
    parent state ``m`` and child state ``c``.
    """

    parents: list
    log_emission: list
    log_beta: list
    log_message: list
    log_alpha: list
    posterior: list
    pair_posterior: list
    loglik: float
    tree_loglik: np.ndarray = field(repr=False)

    @property
    def levels(self) -> int:
        return len(self.posterior)


def _check_tree(tree, params: HmtParams):
    obs = tree.observations
    if len(obs) != params.levels:
        raise ValueError(f"tree has {len(obs)} levels but params cover {params.levels}")
    for k, o in enumerate(obs):
        if o.ndim != 2 or o.shape[1] != params.bands:
            raise ValueError(
                f"level {k + 1}: observations have shape {o.shape}, params expect {params.bands} bands"
            )


def upward_downward(tree, params: HmtParams) -> LikelihoodTree:
    """Exact state posteriors and log-likelihood of ``tree`` under ``params``."""
    _check_tree(tree, params)
    obs = tree.observations
    parents = list(tree.parents)
    levels = len(obs)
    log_a = _log(params.transitions)

    log_em = [emission_loglik(obs[k], params, k) for k in range(levels)]
    log_beta = [None] * levels
    log_msg = [None] * levels

    # upward sweep, finest level first
    agg = np.zeros_like(log_em[-1])
    for k in range(levels - 1, -1, -1):
        log_beta[k] = log_em[k] + agg
        if k == 0:
            break
        # message[i, m] = log sum_c A[m, c] beta_i(c)
        log_msg[k] = _lse(log_a[k - 1][None, :, :] + log_beta[k][:, None, :], axis=2)
        n_parent = len(obs[k - 1])
        agg = np.stack(
            [np.bincount(parents[k], weights=log_msg[k][:, m], minlength=n_parent) for m in range(2)],
            axis=1,
        )

    log_prior = _log(params.root_prior)
    root_joint = log_prior[None, :] + log_beta[0]
    tree_ll = _lse(root_joint, axis=1)
    loglik = float(tree_ll.sum())

    log_alpha = [None] * levels
    log_alpha[0] = np.broadcast_to(log_prior, log_beta[0].shape).copy()
    pair = [None] * levels
    for k in range(1, levels):
        p = parents[k]
        # log p(parent state m, data outside the child's subtree)
        outside = log_alpha[k - 1][p] + log_beta[k - 1][p] - log_msg[k]
        joint = outside[:, :, None] + log_a[k - 1][None, :, :]
        log_alpha[k] = _lse(joint, axis=1)
        pj = joint + log_beta[k][:, None, :]
        pj = pj - _lse(pj.reshape(len(p), 4), axis=1)[:, None, None]
        pair[k] = np.exp(pj)

    posterior = []
    for k in range(levels):
        g = log_alpha[k] + log_beta[k]
        g = g - _lse(g, axis=1)[:, None]
        posterior.append(np.exp(g))

    return LikelihoodTree(
        parents=parents,
        log_emission=log_em,
        log_beta=log_beta,
        log_message=log_msg,
        log_alpha=log_alpha,
        posterior=posterior,
        pair_posterior=pair,
        loglik=loglik,
        tree_loglik=tree_ll,
    )


def _as_forest(tree) -> list:
    if hasattr(tree, "observations"):
        return [tree]
    forest = list(tree)
    if not forest:
        raise ValueError("no trees given")
    return forest


def init_params(tree, flavor: str = "thmt") -> HmtParams:
    """Moment-based starting point for EM.

    Each scale's empirical second moment ``v`` seeds the two states at
    ``v / 4`` and ``4 v``. Transitions start at ``[[0.9, 0.1], [0.1, 0.9]]``
    and the root prior is uniform. ``tree`` may also be a sequence of trees
    with matching depth, for dataset-level training.
    """
    if flavor not in FLAVORS:
        raise ValueError(f"unknown flavor {flavor!r}")
    forest = _as_forest(tree)
    levels = forest[0].levels if hasattr(forest[0], "levels") else len(forest[0].observations)
    if levels == 0:
        raise ValueError("tree has no levels")
    emission = []
    for k in range(levels):
        d = np.concatenate([t.observations[k] for t in forest], axis=0)
        if d.size == 0:
            raise ValueError(f"scale {k + 1} is empty")
        if flavor == "vhmt":
            c = d.T @ d / len(d)
            if not np.any(c):
                warnings.warn(f"scale {k + 1}: all coefficients are zero, covariance floored", RuntimeWarning)
            eye = np.eye(d.shape[1]) * COV_RIDGE
            emission.append([0.25 * c + eye, 4.0 * c + eye])
        else:
            v = np.mean(d * d, axis=0)
            if not np.any(v):
                warnings.warn(f"scale {k + 1}: all coefficients are zero, variance floored", RuntimeWarning)
            emission.append([np.maximum(0.25 * v, VAR_FLOOR), np.maximum(4.0 * v, VAR_FLOOR)])
    trans = np.tile(np.array([[0.9, 0.1], [0.1, 0.9]]), (levels - 1, 1, 1))
    return HmtParams(flavor, np.array([0.5, 0.5]), trans, np.array(emission))


def _m_trans(results, params: HmtParams) -> np.ndarray:
    trans = np.empty((params.levels - 1, 2, 2))
    for k in range(1, params.levels):
        counts = sum(r.pair_posterior[k].sum(axis=0) for r in results)
        rows = counts.sum(axis=1, keepdims=True)
        # a parent state with no mass keeps its previous row
        trans[k - 1] = np.where(rows > 0, counts / np.where(rows > 0, rows, 1.0), params.transitions[k - 1])
        trans[k - 1] /= trans[k - 1].sum(axis=1, keepdims=True)
    return trans


def _m_emission(forest, results, params: HmtParams) -> np.ndarray:
    emission = np.empty_like(params.emission)
    for k in range(params.levels):
        w = np.concatenate([r.posterior[k] for r in results], axis=0)
        d = np.concatenate([t.observations[k] for t in forest], axis=0)
        mass = w.sum(axis=0)
        for m in range(2):
            if mass[m] <= 0:
                emission[k, m] = params.emission[k, m]
            elif params.vector:
                c = (d * w[:, m:m + 1]).T @ d / mass[m]
                emission[k, m] = 0.5 * (c + c.T) + COV_RIDGE * np.eye(d.shape[1])
            else:
                emission[k, m] = np.maximum(w[:, m] @ (d * d) / mass[m], VAR_FLOOR)
    return emission


def _m_step(forest, results, params: HmtParams, update) -> HmtParams:
    prior, trans, emission = params.root_prior, params.transitions, params.emission
    if "prior" in update:
        prior = sum(r.posterior[0].sum(axis=0) for r in results)
        prior = prior / prior.sum()
    if "transitions" in update:
        trans = _m_trans(results, params)
    if "emission" in update:
        emission = _m_emission(forest, results, params)
    return HmtParams(params.flavor, prior, trans, emission)


def _refloor(params: HmtParams, floor: float) -> HmtParams:
    if params.vector:
        eye = np.eye(params.bands)
        e = params.emission + floor * eye
    else:
        e = np.maximum(params.emission, floor)
    return replace(params, emission=e)


def _em(tree, init: HmtParams, max_iter: int, rel_tol: float, update):
    bad = set(update) - set(UPDATE_ALL)
    if bad:
        raise ValueError(f"unknown parameter groups {sorted(bad)}; choose from {UPDATE_ALL}")
    forest = _as_forest(tree)
    for t in forest:
        _check_tree(t, init)
    if max_iter < 0:
        raise ValueError("max_iter must be >= 0")
    params = init
    trace: list[float] = []
    retried = False
    it = 0
    while True:
        results = [upward_downward(t, params) for t in forest]
        ll = float(sum(r.loglik for r in results))
        if not np.isfinite(ll):
            if retried:
                raise FloatingPointError("log-likelihood is not finite after variance flooring")
            retried = True
            scale = float(np.mean(params.variances()))
            params = _refloor(params, max(1e-6 * scale, 1e3 * VAR_FLOOR))
            continue
        trace.append(ll)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < rel_tol * abs(trace[-2]):
            break
        if it >= max_iter:
            break
        params = _m_step(forest, results, params, update)
        it += 1
    return params, trace


def em_train(tree, init: HmtParams, max_iter: int = 50, rel_tol: float = 1e-5, update=UPDATE_ALL):
    """Fit scalar-emission HMT parameters by expectation-maximisation.

    Parameters
    ----------
    tree : tree or sequence of trees
        A single tree trains a per-image model; a sequence shares one set
        of parameters across all of them.
    init : HmtParams
        Starting point, usually from :func:`init_params`.
    max_iter : int
        Maximum number of M-steps.
    rel_tol : float
        Stop once the relative change of the log-likelihood drops below it.
    update : iterable of str
        Parameter groups re-estimated by the M-step, any of ``'prior'``,
        ``'transitions'`` and ``'emission'``; the others stay at ``init``.

    Returns
    -------
    params : HmtParams
    trace : list of float
        Log-likelihood of every visited parameter set; the last entry belongs
        to the returned ``params``.
    """
    if init.vector:
        raise ValueError("em_train expects scalar emissions; use em_train_vector for vhmt")
    return _em(tree, init, max_iter, rel_tol, update)


def em_train_vector(tree, init: HmtParams, max_iter: int = 50, rel_tol: float = 1e-5, update=UPDATE_ALL):
    """Like :func:`em_train` with one multivariate Gaussian over all bands per state."""
    if not init.vector:
        raise ValueError("em_train_vector expects vhmt parameters")
    return _em(tree, init, max_iter, rel_tol, update)


def universal_params(source=None) -> HmtParams:
    """Fixed parameters for natural images.

    With no ``source`` the calibrated defaults shipped in
    ``mdis/config/uhmt_natural.toml`` are returned. A missing file is an
    error; there is no silent fallback.
    """
    from .paramfile import default_params_path, load_params

    path = default_params_path() if source is None else source
    return load_params(path)


def sample_quadtree(params: HmtParams, root_shape, rng=None):
    """Draw a wavelet quad-tree and its hidden states from ``params``.

    Returns
    -------
    tree : WaveletQuadTree
        Coefficients with a zero approximation band.
    states : list of ndarray
        Per-scale integer state grids.
    """
    from .pyramid import WaveletQuadTree

    rng = np.random.default_rng(rng)
    h, w = root_shape
    states = [(rng.random((h, w)) < params.root_prior[1]).astype(np.intp)]
    for k in range(1, params.levels):
        up = np.repeat(np.repeat(states[-1], 2, axis=0), 2, axis=1)
        p1 = params.transitions[k - 1][up, 1]
        states.append((rng.random(up.shape) < p1).astype(np.intp))

    details = []
    for k, s in enumerate(states):
        z = rng.standard_normal(s.shape + (params.bands,))
        if params.vector:
            chol = np.linalg.cholesky(params.emission[k])
            d = np.einsum("...ij,...j->...i", chol[s], z)
        else:
            d = z * np.sqrt(params.emission[k][s])
        details.append(d)
    tree = WaveletQuadTree(details=details, approx=np.zeros(root_shape))
    return tree, states
