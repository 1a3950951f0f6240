"""Dyadic wavelet quad-trees.

Images are converted to square, power-of-two luminance rasters and analysed
with a periodised orthonormal filter bank. Detail coefficients of the three
orientation bands are grouped per dyadic block so that every node of the
resulting quad-tree carries one ``(HL, LH, HH)`` triple.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

__all__ = [
    "BT601",
    "FILTERS",
    "WaveletQuadTree",
    "block_upsample",
    "dwt2d",
    "idwt2d",
    "prepare_image",
    "to_grayscale",
]

BT601 = np.array([0.299, 0.587, 0.114])
# integer per-mille weights sum exactly to 1000, so white maps to exactly 1.0
_BT601_MILLE = np.array([299.0, 587.0, 114.0])

_S3 = np.sqrt(3.0)
FILTERS = {
    "haar": np.array([1.0, 1.0]) / np.sqrt(2.0),
    "db2": np.array([1 + _S3, 3 + _S3, 3 - _S3, 1 - _S3]) / (4 * np.sqrt(2.0)),
}

BANDS = ("HL", "LH", "HH")


def to_grayscale(image) -> np.ndarray:
    """Luminance of a raster, in ``[0, 1]``, without any resizing.

    Integer rasters are scaled by their dtype maximum; float rasters are
    assumed to already live in ``[0, 1]`` and are clipped. Colour rasters
    (``H x W x 3`` or ``H x W x 4``) are combined with BT.601 weights and any
    alpha channel is dropped.
    """
    arr = np.asarray(image)
    if arr.size == 0 or 0 in arr.shape:
        raise ValueError("empty raster")
    if arr.ndim not in (2, 3):
        raise ValueError(f"expected a 2-D or 3-D raster, got shape {arr.shape}")

    if np.issubdtype(arr.dtype, np.integer):
        x = arr.astype(np.float64) / np.iinfo(arr.dtype).max
    elif arr.dtype == bool:
        x = arr.astype(np.float64)
    else:
        x = np.clip(arr.astype(np.float64), 0.0, 1.0)

    if x.ndim == 3:
        if x.shape[2] == 1:
            x = x[:, :, 0]
        elif x.shape[2] in (3, 4):
            x = (x[:, :, :3] @ _BT601_MILLE) / 1000.0
        else:
            raise ValueError(f"unsupported channel count {x.shape[2]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("raster contains non-finite values")
    return x


def prepare_image(image) -> np.ndarray:
    """Grayscale, centre-crop to a square and resize down to ``2**J`` pixels.

    Inputs that are already square with a power-of-two side are returned
    unchanged (apart from the grayscale conversion). Otherwise the largest
    centred square is kept and bilinearly resized to the nearest lower power
    of two, e.g. ``300 x 200 -> 200 x 200 -> 128 x 128``.
    """
    x = to_grayscale(image)
    h, w = x.shape
    side = min(h, w)
    top, left = (h - side) // 2, (w - side) // 2
    x = x[top:top + side, left:left + side]

    target = 1 << (side.bit_length() - 1)
    if target != side:
        img = Image.fromarray(x.astype(np.float32))
        img = img.resize((target, target), Image.BILINEAR)
        x = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return x


def _highpass(h: np.ndarray) -> np.ndarray:
    n = np.arange(len(h))
    return ((-1.0) ** n) * h[::-1]


def _analysis(x: np.ndarray, h: np.ndarray, axis: int):
    # periodised convolution followed by downsampling by 2
    g = _highpass(h)
    x = np.moveaxis(x, axis, -1)
    n = x.shape[-1]
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(len(h))[None, :]) % n
    taps = x[..., idx]
    lo = taps @ h
    hi = taps @ g
    return np.moveaxis(lo, -1, axis), np.moveaxis(hi, -1, axis)


def _synthesis(lo: np.ndarray, hi: np.ndarray, h: np.ndarray, axis: int):
    g = _highpass(h)
    lo = np.moveaxis(lo, axis, -1)
    hi = np.moveaxis(hi, axis, -1)
    half = lo.shape[-1]
    n = 2 * half
    out = np.zeros(lo.shape[:-1] + (n,))
    for t in range(len(h)):
        idx = (2 * np.arange(half) + t) % n
        # indices are distinct for a fixed tap, so fancy-index accumulation is safe
        out[..., idx] += h[t] * lo + g[t] * hi
    return np.moveaxis(out, -1, axis)


@dataclass(frozen=True)
class WaveletQuadTree:
    """Wavelet detail coefficients arranged as a quad-tree.

    Attributes
    ----------
    details : list of ndarray
        ``details[j - 1]`` holds scale ``j`` as an array of shape
        ``(n_j, n_j, 3)``; the last axis is the ``(HL, LH, HH)`` band triple.
        Scale 1 is the coarsest, and every scale doubles the grid side of the
        previous one.
    approx : ndarray
        Final low-pass (LL) band, same grid as scale 1.
    wavelet : str
        Name of the filter in :data:`FILTERS`.
    """

    details: list
    approx: np.ndarray
    wavelet: str = "haar"

    @property
    def levels(self) -> int:
        return len(self.details)

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [d.shape[:2] for d in self.details]

    @property
    def root_shape(self) -> tuple[int, int]:
        return self.details[0].shape[:2]

    @property
    def observations(self) -> list[np.ndarray]:
        """Per-scale ``(n_nodes, 3)`` coefficient rows in row-major node order."""
        return [d.reshape(-1, d.shape[-1]) for d in self.details]

    @property
    def parents(self) -> list:
        """Per-scale flat parent indices into the previous scale (``None`` for roots)."""
        out = [None]
        for (h, w) in self.shapes[1:]:
            r, c = np.divmod(np.arange(h * w), w)
            out.append((r // 2) * (w // 2) + c // 2)
        return out

    def children(self, scale: int, index: int) -> np.ndarray:
        """Flat indices at ``scale + 1`` of the four children of a node."""
        if not 1 <= scale < self.levels:
            raise IndexError(f"scale {scale} has no children")
        w = self.shapes[scale - 1][1]
        r, c = divmod(index, w)
        cw = 2 * w
        rows = np.array([2 * r, 2 * r, 2 * r + 1, 2 * r + 1])
        cols = np.array([2 * c, 2 * c + 1, 2 * c, 2 * c + 1])
        return rows * cw + cols


def dwt2d(img, scales: int = 5, wavelet: str = "haar") -> WaveletQuadTree:
    """Separable orthonormal wavelet analysis of a ``2**J`` square image.

    Parameters
    ----------
    img : array_like
        Square image with a power-of-two side.
    scales : int
        Number of decomposition levels, ``1 <= scales <= J``.
    wavelet : str
        Key of :data:`FILTERS`; boundaries are handled by periodisation.

    Returns
    -------
    WaveletQuadTree
    """
    x = np.asarray(img, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"expected a square 2-D image, got shape {x.shape}")
    n = x.shape[0]
    if n < 2 or n & (n - 1):
        raise ValueError(f"image side {n} is not a power of two >= 2")
    max_scales = n.bit_length() - 1
    if not 1 <= scales <= max_scales:
        raise ValueError(f"scales must be in [1, {max_scales}] for a {n}x{n} image, got {scales}")
    try:
        h = FILTERS[wavelet]
    except KeyError:
        raise ValueError(f"unknown wavelet {wavelet!r}; choose from {sorted(FILTERS)}") from None

    details = []
    ll = x
    for _ in range(scales):
        lo, hi = _analysis(ll, h, axis=1)
        ll, lh = _analysis(lo, h, axis=0)
        hl, hh = _analysis(hi, h, axis=0)
        details.append(np.stack([hl, lh, hh], axis=-1))
    return WaveletQuadTree(details=details[::-1], approx=ll, wavelet=wavelet)


def idwt2d(tree: WaveletQuadTree) -> np.ndarray:
    """Inverse of :func:`dwt2d`."""
    h = FILTERS[tree.wavelet]
    ll = tree.approx
    for d in tree.details:
        hl, lh, hh = d[..., 0], d[..., 1], d[..., 2]
        lo = _synthesis(ll, lh, h, axis=0)
        hi = _synthesis(hl, hh, h, axis=0)
        ll = _synthesis(lo, hi, h, axis=1)
    return ll


def block_upsample(scale_map, target) -> np.ndarray:
    """Replicate every grid value over its dyadic pixel footprint.

    >>> block_upsample(np.array([[1, 2], [3, 4]]), (4, 4))[0]
    array([1, 1, 2, 2])
    """
    grid = np.asarray(scale_map)
    if grid.ndim != 2:
        raise ValueError("scale map must be 2-D")
    th, tw = target
    gh, gw = grid.shape
    if gh == 0 or gw == 0 or th % gh or tw % gw:
        raise ValueError(f"cannot replicate a {gh}x{gw} grid onto {th}x{tw} pixels")
    return np.repeat(np.repeat(grid, th // gh, axis=0), tw // gw, axis=1)
