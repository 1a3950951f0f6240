"""Fixation-based scores for saliency maps: NSS, LCC and ROC/AUC."""
from __future__ import annotations

import csv
import io
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

__all__ = [
    "FixationSet",
    "ImageScore",
    "MetricReport",
    "auc",
    "evaluate_batch",
    "fixation_density",
    "format_table",
    "lcc",
    "nss",
    "read_fixations",
    "per_image_csv",
    "report_csv",
    "roc_curve",
]


@dataclass
class FixationSet:
    """Eye fixations on one image as 0-indexed ``(x, y)`` pixel coordinates."""

    image_id: str
    points: np.ndarray
    subjects: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)
        self.points = pts
        if self.subjects is not None:
            self.subjects = np.asarray(self.subjects)
            if len(self.subjects) != len(pts):
                raise ValueError("one subject per fixation required")

    def __len__(self) -> int:
        return len(self.points)

    def check_bounds(self, dims) -> None:
        h, w = dims
        x, y = self.points[:, 0], self.points[:, 1]
        if np.any((x < 0) | (x >= w) | (y < 0) | (y >= h)):
            raise ValueError(f"{self.image_id}: fixation outside a {h}x{w} image")

    def to_prepared(self, original_shape, side: int) -> "FixationSet":
        """Map coordinates through the centre crop and resize applied to images.

        Fixations falling in the cropped margins are dropped.
        """
        h, w = original_shape
        crop = min(h, w)
        top, left = (h - crop) // 2, (w - crop) // 2
        scale = side / crop
        xy = (self.points - [left, top]) * scale
        xy = np.floor(xy).astype(np.int64)
        keep = np.all((xy >= 0) & (xy < side), axis=1)
        subjects = self.subjects[keep] if self.subjects is not None else None
        return FixationSet(self.image_id, xy[keep], subjects)


def read_fixations(path) -> dict[str, FixationSet]:
    """Load ``image_id,x,y[,subject]`` rows; the header line is mandatory."""
    text = Path(path).read_text(encoding="utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError(f"{path}: empty fixation file")
    header = [h.strip() for h in rows[0]]
    if header[:3] != ["image_id", "x", "y"] or header[3:] not in ([], ["subject"]):
        raise ValueError(f"{path}: header must be image_id,x,y[,subject], got {','.join(header)}")
    has_subject = len(header) == 4
    pts: dict[str, list] = {}
    subj: dict[str, list] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} fields")
        try:
            x, y = int(row[1]), int(row[2])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-integer coordinate") from None
        pts.setdefault(row[0].strip(), []).append((x, y))
        if has_subject:
            subj.setdefault(row[0].strip(), []).append(row[3].strip())
    if not pts:
        raise ValueError(f"{path}: no fixations")
    return {
        k: FixationSet(k, np.array(v), np.array(subj[k]) if has_subject else None)
        for k, v in pts.items()
    }


def _values(m) -> np.ndarray:
    return np.asarray(getattr(m, "values", m), dtype=np.float64)


def fixation_density(fx: FixationSet, sigma: float = 16.0, dims=None) -> np.ndarray:
    """Sum of isotropic Gaussians, one unit of mass per fixation.

    Each kernel is truncated at ``4 sigma`` and at the image border, then
    renormalised, so the map integrates to ``len(fx)``.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if len(fx) == 0:
        raise ValueError(f"{fx.image_id}: no fixations")
    h, w = dims
    fx.check_bounds(dims)
    r = int(math.ceil(4 * sigma))
    off = np.arange(-r, r + 1)
    g = np.exp(-0.5 * (off / sigma) ** 2)
    g[np.abs(off) > 4 * sigma] = 0.0
    out = np.zeros((h, w))
    for x, y in fx.points:
        y0, y1 = max(y - r, 0), min(y + r + 1, h)
        x0, x1 = max(x - r, 0), min(x + r + 1, w)
        k = np.outer(g[y0 - y + r:y1 - y + r], g[x0 - x + r:x1 - x + r])
        out[y0:y1, x0:x1] += k / k.sum()
    return out


def nss(saliency, fx: FixationSet) -> float:
    """Mean of the standardised map (population std) at the fixated pixels."""
    m = _values(saliency)
    sd = m.std()
    if not sd > 0:
        raise ValueError("NSS undefined for a constant map")
    if len(fx) == 0:
        raise ValueError(f"{fx.image_id}: no fixations")
    fx.check_bounds(m.shape)
    z = (m - m.mean()) / sd
    return float(z[fx.points[:, 1], fx.points[:, 0]].mean())


def lcc(saliency, density) -> float:
    """Pearson correlation between two maps over all pixels."""
    a = _values(saliency).ravel()
    b = _values(density).ravel()
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {np.shape(saliency)} vs {np.shape(density)}")
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    if not den > 0:
        raise ValueError("LCC undefined for a constant map")
    return float(np.clip((a @ b) / den, -1.0, 1.0))


def roc_curve(pos, neg) -> np.ndarray:
    """ROC points ``(fpr, tpr)`` sweeping every distinct score, high to low."""
    pos = np.asarray(pos, dtype=np.float64).ravel()
    neg = np.asarray(neg, dtype=np.float64).ravel()
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("need at least one positive and one negative")
    vals, inv = np.unique(np.concatenate([pos, neg]), return_inverse=True)
    n_pos = np.bincount(inv[: len(pos)], minlength=len(vals))[::-1]
    n_neg = np.bincount(inv[len(pos):], minlength=len(vals))[::-1]
    tpr = np.concatenate([[0], np.cumsum(n_pos)]) / len(pos)
    fpr = np.concatenate([[0], np.cumsum(n_neg)]) / len(neg)
    return np.column_stack([fpr, tpr])


def auc(saliency, fx: FixationSet, negatives=None, seed=None):
    """Area under the ROC curve of fixated versus non-fixated pixels.

    Parameters
    ----------
    saliency : array_like or SaliencyMap
    fx : FixationSet
    negatives : int, optional
        ``None`` uses every non-fixated pixel. An integer draws that many
        non-fixated pixels uniformly, which then requires ``seed``.
    seed : int, optional

    Returns
    -------
    score : float
    roc : ndarray, shape (k, 2)
        ``(fpr, tpr)`` points from ``(0, 0)`` to ``(1, 1)``. Tied scores form
        a single diagonal step, so they count half.
    """
    m = _values(saliency)
    fx.check_bounds(m.shape)
    flat = m.ravel()
    fix_idx = fx.points[:, 1] * m.shape[1] + fx.points[:, 0]
    pos = flat[fix_idx]
    mask = np.ones(flat.shape, bool)
    mask[fix_idx] = False
    neg_idx = np.flatnonzero(mask)
    if negatives is not None:
        if seed is None:
            raise ValueError("sampled negatives need a seed")
        rng = np.random.default_rng(seed)
        neg_idx = rng.choice(neg_idx, size=int(negatives), replace=int(negatives) > len(neg_idx))
    roc = roc_curve(pos, flat[neg_idx])
    score = float(np.sum(np.diff(roc[:, 0]) * (roc[1:, 1] + roc[:-1, 1])) / 2)
    return score, roc


@dataclass
class ImageScore:
    image_id: str
    lcc: float = float("nan")
    nss: float = float("nan")
    auc: float = float("nan")
    time: float = float("nan")
    roc: np.ndarray | None = field(default=None, repr=False)
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


@dataclass
class MetricReport:
    """Scores of one method (e.g. ``THMT3``) over a set of images."""

    label: str
    items: list

    @property
    def scored(self) -> list:
        return [s for s in self.items if s.ok]

    @property
    def empty(self) -> bool:
        return not self.scored

    def mean(self, name: str) -> float:
        vals = [getattr(s, name) for s in self.scored]
        vals = [v for v in vals if not math.isnan(v)]
        return float(np.mean(vals)) if vals else float("nan")


def evaluate_batch(
    maps: Mapping,
    fixations: Mapping[str, FixationSet],
    label: str = "",
    sigma=16.0,
    negatives=None,
    seed=0,
    times: Mapping[str, float] | None = None,
) -> MetricReport:
    """Score every map against the fixations sharing its image id.

    Images without fixations, or whose scoring fails, are kept in the
    report with an ``error`` message and excluded from the means.
    ``sigma`` is a width in pixels or a mapping from image id to width.
    Negative sampling draws from ``seed`` (an int or a sequence of ints)
    combined with a hash of the image id, so results do not depend on
    evaluation order.
    """
    items = []
    for image_id in sorted(maps):
        score = ImageScore(image_id, time=float((times or {}).get(image_id, float("nan"))))
        fx = fixations.get(image_id)
        if fx is None or len(fx) == 0:
            score.error = "no fixations"
            items.append(score)
            continue
        m = _values(maps[image_id])
        try:
            score.nss = nss(m, fx)
            s = sigma[image_id] if isinstance(sigma, Mapping) else sigma
            score.lcc = lcc(m, fixation_density(fx, s, m.shape))
            item_seed = [int(v) for v in np.atleast_1d(seed)] + [zlib.crc32(image_id.encode("utf-8"))]
            score.auc, score.roc = auc(m, fx, negatives, None if negatives is None else item_seed)
        except ValueError as exc:
            score.error = str(exc)
        items.append(score)
    return MetricReport(label, items)


_COLUMNS = ("method", "images", "LCC", "NSS", "AUC", "TIME")


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else f"{x:.5f}"


def report_csv(reports) -> str:
    """One row per method with the dataset means."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_COLUMNS)
    for r in reports:
        w.writerow([r.label, len(r.scored)] + [_fmt(r.mean(k)) for k in ("lcc", "nss", "auc", "time")])
    return buf.getvalue()


def per_image_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "image_id", "LCC", "NSS", "AUC", "TIME", "status"])
    for r in reports:
        for s in r.items:
            w.writerow([r.label, s.image_id, _fmt(s.lcc), _fmt(s.nss), _fmt(s.auc), _fmt(s.time), s.error or "ok"])
    return buf.getvalue()


def format_table(reports) -> str:
    """Plain-text table with columns LCC, NSS, AUC and TIME (seconds per image)."""
    head = f"{'Observations':<14}{'LCC':>10}{'NSS':>10}{'AUC':>10}{'TIME[s]':>11}"
    lines = [head, "-" * len(head)]
    for r in reports:
        cells = [_fmt(r.mean(k)) or "-" for k in ("lcc", "nss", "auc", "time")]
        lines.append(f"{r.label:<14}{cells[0]:>10}{cells[1]:>10}{cells[2]:>10}{cells[3]:>11}")
    return "\n".join(lines) + "\n"
