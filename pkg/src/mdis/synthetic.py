"""Synthetic stimuli with known salient regions."""
from __future__ import annotations

import numpy as np

__all__ = ["pink_noise_image", "popout_stimulus"]


def popout_stimulus(size: int = 256, patch: int = 32, origin=None, texture: str = "noise", seed=0):
    """Flat mid-grey field with one textured square.

    Parameters
    ----------
    size : int
        Side of the square image.
    patch : int
        Side of the textured square.
    origin : (int, int), optional
        Top-left corner of the patch; centred by default.
    texture : {'noise', 'checker', 'stripes'}
        ``'noise'`` draws i.i.d. uniform values from ``seed``; the other two
        are deterministic two-pixel gratings.
    seed : int or Generator

    Returns
    -------
    image : ndarray, shape (size, size)
        Values in ``[0, 1]``.
    mask : ndarray of bool
        True inside the patch.
    """
    if not 0 < patch <= size:
        raise ValueError("patch must fit inside the image")
    if origin is None:
        origin = ((size - patch) // 2, (size - patch) // 2)
    r0, c0 = origin
    if r0 < 0 or c0 < 0 or r0 + patch > size or c0 + patch > size:
        raise ValueError("patch extends beyond the image")
    rows, cols = np.indices((patch, patch))
    if texture == "noise":
        tex = np.random.default_rng(seed).random((patch, patch))
    elif texture == "checker":
        tex = ((rows // 2 + cols // 2) % 2).astype(np.float64)
    elif texture == "stripes":
        tex = ((cols // 2) % 2).astype(np.float64)
    else:
        raise ValueError(f"unknown texture {texture!r}")
    img = np.full((size, size), 0.5)
    mask = np.zeros((size, size), dtype=bool)
    img[r0:r0 + patch, c0:c0 + patch] = tex
    mask[r0:r0 + patch, c0:c0 + patch] = True
    return img, mask


def pink_noise_image(size: int = 512, beta: float = 2.0, seed=0) -> np.ndarray:
    """Gaussian noise with a ``1 / f**beta`` power spectrum, scaled to ``[0, 1]``.

    With ``beta = 2`` the amplitude spectrum falls like that of natural
    photographs, which makes this a convenient stand-in test image.
    """
    rng = np.random.default_rng(seed)
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.rfftfreq(size)[None, :]
    f = np.hypot(fy, fx)
    f[0, 0] = 1.0
    spec = (rng.standard_normal(f.shape) + 1j * rng.standard_normal(f.shape)) / f ** (beta / 2)
    spec[0, 0] = 0.0
    img = np.fft.irfft2(spec, s=(size, size))
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo)
