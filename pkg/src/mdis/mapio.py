"""Reading rasters and writing saliency/label maps.

Maps go out as 32-bit float PFM, 16-bit PGM (min-max normalised) or CSV.
PFM rows are stored bottom to top, as the format requires.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

__all__ = ["IMAGE_SUFFIXES", "read_image", "read_map", "write_label_pgms", "write_map"]

IMAGE_SUFFIXES = {".png", ".pgm", ".ppm", ".pnm", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


def read_image(path) -> np.ndarray:
    """Raster as an integer array (``H x W`` or ``H x W x C``)."""
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L"):
            return np.asarray(im, dtype=np.uint16)
        if im.mode in ("P", "LA", "PA", "CMYK", "YCbCr", "1"):
            im = im.convert("RGB" if im.mode != "1" else "L")
        return np.asarray(im)


def write_pfm(path, values) -> None:
    a = np.asarray(values, dtype="<f4")
    h, w = a.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(np.ascontiguousarray(a[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        kind = f.readline().strip()
        if kind != b"Pf":
            raise ValueError(f"{path}: only grayscale PFM is supported")
        w, h = map(int, f.readline().split())
        scale = float(f.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(), dtype=dtype, count=w * h)
    return data.reshape(h, w)[::-1].astype(np.float64)


def write_pgm16(path, values01) -> None:
    a = np.clip(np.asarray(values01, dtype=np.float64), 0.0, 1.0)
    h, w = a.shape
    q = np.round(a * 65535).astype(">u2")
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        f.write(q.tobytes())


def write_map(path, smap, fmt: str | None = None) -> Path:
    """Write a :class:`~mdis.saliency.SaliencyMap` in the format of the suffix."""
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt == "pfm":
        write_pfm(path, smap.values)
    elif fmt == "pgm":
        write_pgm16(path, smap.normalized)
    elif fmt == "csv":
        np.savetxt(path, smap.values, fmt="%.9g", delimiter=",")
    else:
        raise ValueError(f"unknown map format {fmt!r}")
    return path


def read_map(path) -> np.ndarray:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pfm":
        return read_pfm(path)
    if suffix == ".csv":
        return np.loadtxt(path, delimiter=",", ndmin=2)
    a = read_image(path)
    if a.ndim == 3:
        a = a[..., :3].mean(axis=2)
    return a.astype(np.float64)


def write_label_pgms(labels, shapes, prefix) -> list[Path]:
    """One 8-bit PGM per scale, label 1 drawn white; returns the paths."""
    out = []
    for k, (lab, shape) in enumerate(zip(labels.labels, shapes), start=1):
        p = Path(f"{prefix}.labels{k}.pgm")
        img = (np.asarray(lab).reshape(shape) * 255).astype(np.uint8)
        h, w = img.shape
        p.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())
        out.append(p)
    return out
