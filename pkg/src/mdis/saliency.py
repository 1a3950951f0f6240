"""Multiscale discriminant saliency.

Saliency of a node is the information its features carry about the
centre/surround class: the entropy of the scale's class prior minus the
entropy of the node's context-fused posterior, in bits. Per-scale maps are
merged by keeping, at every pixel, the most informative scale.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import hmt
from .fusion import LabelField, map_labels
from .pyramid import block_upsample, dwt2d, prepare_image

__all__ = [
    "MdisResult",
    "SaliencyMap",
    "SaliencyPyramid",
    "compute_saliency",
    "discriminant_power",
    "entropy_bits",
    "integrate_max",
    "mdis",
    "mdis_pyramid",
]

_NORM_TOL = 1e-9


def entropy_bits(p) -> np.ndarray:
    """Shannon entropy in bits along the last axis, with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, p * np.log2(p), 0.0)
    return -t.sum(axis=-1)


def _check_dist(p, name):
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] != 2 or np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1) > _NORM_TOL):
        raise ValueError(f"{name} is not a normalised probability pair")
    return p


def discriminant_power(posterior, prior) -> np.ndarray:
    """``H(prior) - H(posterior)`` in bits, clamped at zero.

    Broadcasts over leading axes, so a whole scale can be scored at once.

    >>> round(float(discriminant_power([0.9, 0.1], [0.5, 0.5])), 4)
    0.531
    """
    posterior = _check_dist(posterior, "posterior")
    prior = _check_dist(prior, "prior")
    return np.maximum(entropy_bits(prior) - entropy_bits(posterior), 0.0)


@dataclass
class SaliencyPyramid:
    """Per-scale discriminant power (bits) and the class-prior entropy of every node."""

    scales: list
    prior_entropy: list

    @property
    def levels(self) -> int:
        return len(self.scales)


@dataclass
class SaliencyMap:
    """Full-resolution saliency with provenance.

    ``tag`` is ``"<variant><k>"``, ``k = 0`` for the integrated map.
    ``seconds`` is the wall-clock time of the whole per-image pipeline.
    """

    values: np.ndarray
    variant: str
    scale: int
    seconds: float = float("nan")

    @property
    def tag(self) -> str:
        return f"{self.variant.upper()}{self.scale}"

    @property
    def normalized(self) -> np.ndarray:
        lo, hi = float(self.values.min()), float(self.values.max())
        if hi <= lo:
            return np.zeros_like(self.values)
        return (self.values - lo) / (hi - lo)


def _group_mean(values: np.ndarray, groups: np.ndarray) -> np.ndarray:
    counts = np.bincount(groups)
    sums = np.stack([np.bincount(groups, weights=values[:, m]) for m in range(values.shape[1])], axis=1)
    return (sums / counts[:, None])[groups]


def _root_groups(n: int, shape) -> np.ndarray:
    if shape is not None and shape[0] % 2 == 0 and shape[1] % 2 == 0:
        h, w = shape
        r, c = np.divmod(np.arange(n), w)
        return (r // 2) * (w // 2) + c // 2
    return np.zeros(n, dtype=np.intp)


def mdis_pyramid(labels: LabelField, shapes=None, prior: str = "window") -> SaliencyPyramid:
    """Discriminant power of every node from the fused posteriors.

    Parameters
    ----------
    labels : LabelField
        Output of :func:`~mdis.fusion.map_labels`.
    shapes : list of (int, int), optional
        Grid shape per scale; flat arrays are returned when omitted.
    prior : {'window', 'mean', 'labels'}
        Class prior against which each node is scored.

        ``'window'``
            Average fused posterior over the node's surround window, the
            dyadic block of its parent (the node and its siblings). Root
            nodes are grouped in 2x2 blocks when the root grid allows it,
            otherwise the whole root level is one window.
        ``'mean'``
            Average fused posterior over the whole scale.
        ``'labels'``
            Fraction of the scale's nodes carrying each MAP label.

    Returns
    -------
    SaliencyPyramid
        ``prior_entropy[k]`` has one entry per node of scale ``k + 1``.
    """
    grids, ent = [], []
    for k, post in enumerate(labels.posterior):
        n = len(post)
        if n == 0:
            raise ValueError(f"scale {k + 1} is empty")
        if prior == "window":
            if k == 0:
                groups = _root_groups(n, shapes[0] if shapes is not None else None)
            else:
                groups = labels.parents[k]
            p = _group_mean(post, groups)
        elif prior == "mean":
            p = np.broadcast_to(post.mean(axis=0), post.shape)
        elif prior == "labels":
            frac = np.mean(labels.labels[k])
            p = np.broadcast_to([1.0 - frac, frac], post.shape)
        else:
            raise ValueError(f"unknown prior estimator {prior!r}")
        p = p / p.sum(axis=1, keepdims=True)
        h = entropy_bits(p)
        i = discriminant_power(post, p)
        if shapes is not None:
            h, i = h.reshape(shapes[k]), i.reshape(shapes[k])
        ent.append(h)
        grids.append(i)
    return SaliencyPyramid(scales=grids, prior_entropy=ent)


def integrate_max(pyr: SaliencyPyramid, target, return_scale: bool = False):
    """Pixel-wise maximum of the block-upsampled scale maps.

    With ``return_scale=True`` a second array gives, per pixel, the 1-based
    scale that supplied the value; equal values are credited to the finest
    of the tied scales.
    """
    out = src = None
    for k, grid in enumerate(pyr.scales, start=1):
        if np.ndim(grid) != 2:
            raise ValueError("pyramid scales must be 2-D grids")
        up = block_upsample(grid, target)
        if out is None:
            out, src = up, np.ones(up.shape, dtype=np.int8)
        else:
            src = np.where(up >= out, k, src).astype(np.int8)
            out = np.maximum(out, up)
    if out is None:
        raise ValueError("empty pyramid")
    return (out, src) if return_scale else out


@dataclass
class MdisResult:
    """Everything computed for one image; individual maps via :meth:`map`."""

    image: np.ndarray
    variant: str
    params: hmt.HmtParams
    likelihood: hmt.LikelihoodTree
    labels: LabelField
    pyramid: SaliencyPyramid
    seconds: float
    trace: list

    def map(self, scale: int = 0) -> SaliencyMap:
        target = self.image.shape
        if scale == 0:
            values = integrate_max(self.pyramid, target)
        elif 1 <= scale <= self.pyramid.levels:
            values = block_upsample(self.pyramid.scales[scale - 1], target)
        else:
            raise ValueError(f"scale must be in 0..{self.pyramid.levels}, got {scale}")
        return SaliencyMap(values=values, variant=self.variant, scale=scale, seconds=self.seconds)


def fit_params(tree, variant: str, params=None, max_iter: int = 50, rel_tol: float = 1e-5):
    """Parameters for ``variant``: fixed for UHMT, EM-trained otherwise."""
    variant = variant.lower()
    if variant == "uhmt":
        p = params if params is not None else hmt.universal_params()
        if p.levels < tree.levels:
            raise ValueError(f"universal parameters cover {p.levels} scales, tree has {tree.levels}")
        if p.levels > tree.levels:
            # keep the finest scales; the root prior of the new coarsest
            # scale is the marginal implied by the dropped ones
            drop = p.levels - tree.levels
            prior = p.root_prior
            for a in p.transitions[:drop]:
                prior = prior @ a
            p = hmt.HmtParams(p.flavor, prior / prior.sum(), p.transitions[drop:], p.emission[drop:])
        return p, []
    if variant == "thmt":
        init = params if params is not None else hmt.init_params(tree, "thmt")
        return hmt.em_train(tree, init, max_iter=max_iter, rel_tol=rel_tol)
    if variant == "vhmt":
        init = params if params is not None else hmt.init_params(tree, "vhmt")
        return hmt.em_train_vector(tree, init, max_iter=max_iter, rel_tol=rel_tol)
    raise ValueError(f"unknown variant {variant!r}; choose uhmt, thmt or vhmt")


def mdis(
    img,
    variant: str = "thmt",
    scales: int = 5,
    params=None,
    wavelet: str = "haar",
    soft_context: bool = False,
    prior: str = "window",
    max_iter: int = 50,
    rel_tol: float = 1e-5,
) -> MdisResult:
    """Run the full pipeline on one image.

    ``img`` may be any raster accepted by :func:`~mdis.pyramid.prepare_image`.
    For THMT/VHMT, ``params`` is the EM starting point (default: moment
    initialisation); for UHMT it replaces the built-in universal set.
    """
    t0 = time.perf_counter()
    x = prepare_image(img)
    tree = dwt2d(x, scales=scales, wavelet=wavelet)
    p, trace = fit_params(tree, variant, params, max_iter=max_iter, rel_tol=rel_tol)
    lik = hmt.upward_downward(tree, p)
    labels = map_labels(lik, p, soft=soft_context)
    pyr = mdis_pyramid(labels, tree.shapes, prior=prior)
    seconds = time.perf_counter() - t0
    return MdisResult(x, variant.lower(), p, lik, labels, pyr, seconds, trace)


def compute_saliency(img, variant: str = "thmt", scale_select: int = 0, **kwargs) -> SaliencyMap:
    """Saliency map of one image; ``scale_select=0`` gives the integrated map."""
    return mdis(img, variant, **kwargs).map(scale_select)
