"""DIBCO evaluation measures: F-measure, PSNR, DRD, NRM and MPM.

Positive means foreground (text). Every function accepts either
:class:`~bayesbin.imagecore.BinaryImage` or a boolean foreground array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import distance_transform_edt

from .imagecore import BinaryImage


class MetricError(ValueError):
    """A measure is undefined for the given pair."""


def _fg(img) -> np.ndarray:
    if isinstance(img, BinaryImage):
        return img.foreground
    arr = np.asarray(img)
    if arr.dtype != bool:
        raise TypeError("expected a BinaryImage or boolean foreground array")
    return arr


def _pair(output, truth):
    out, gt = _fg(output), _fg(truth)
    if out.shape != gt.shape:
        raise ValueError(f"dimension mismatch: output {out.shape} vs truth {gt.shape}")
    return out, gt


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(output, truth) -> ConfusionCounts:
    out, gt = _pair(output, truth)
    tp = int(np.count_nonzero(out & gt))
    fp = int(np.count_nonzero(out & ~gt))
    fn = int(np.count_nonzero(~out & gt))
    return ConfusionCounts(tp, fp, out.size - tp - fp - fn, fn)


def fmeasure(c: ConfusionCounts) -> float:
    """Harmonic mean of recall and precision, in percent."""
    if c.tp + c.fn == 0:
        raise MetricError("empty ground truth")
    if c.tp == 0:
        return 0.0
    recall = c.tp / (c.tp + c.fn)
    precision = c.tp / (c.tp + c.fp)
    return 100.0 * 2.0 * recall * precision / (recall + precision)


def psnr(output, truth) -> float:
    """10*log10(1/MSE) for 0/1 images; ``math.inf`` when they agree."""
    out, gt = _pair(output, truth)
    wrong = int(np.count_nonzero(out != gt))
    if wrong == 0:
        return math.inf
    return 10.0 * math.log10(out.size / wrong)


def nrm(c: ConfusionCounts) -> float:
    if c.fn + c.tp == 0:
        raise MetricError("NRM undefined: ground truth has no foreground")
    if c.fp + c.tn == 0:
        raise MetricError("NRM undefined: ground truth has no background")
    return 0.5 * (c.fn / (c.fn + c.tp) + c.fp / (c.fp + c.tn))


def drd_weights() -> np.ndarray:
    """5x5 inverse-distance weights, zero centre, normalized to unit sum."""
    i, j = np.mgrid[-2:3, -2:3]
    d = np.hypot(i, j)
    w = np.zeros((5, 5))
    w[d > 0] = 1.0 / d[d > 0]
    return w / w.sum()


def nubn(truth, block: int = 8) -> int:
    """Number of non-uniform ``block``x``block`` tiles, partial edge tiles included."""
    gt = _fg(truth)
    h, w = gt.shape
    count = 0
    for r in range(0, h, block):
        for c in range(0, w, block):
            tile = gt[r:r + block, c:c + block]
            if tile.any() and not tile.all():
                count += 1
    return count


@dataclass(frozen=True)
class DRDResult:
    value: float
    nubn: int

    @property
    def warning(self) -> bool:
        """True when the truth has no non-uniform block and DRD was set to 0."""
        return self.nubn == 0


def drd_detail(output, truth) -> DRDResult:
    out, gt = _pair(output, truth)
    n_blocks = nubn(gt)
    flipped = out != gt
    if not flipped.any():
        return DRDResult(0.0, n_blocks)
    if n_blocks == 0:
        return DRDResult(0.0, 0)
    w = drd_weights()
    g = np.pad(gt.astype(np.float64), 2, mode="edge")
    h, wd = gt.shape
    # weighted foreground mass of each pixel's 5x5 truth neighbourhood
    mass = np.zeros(gt.shape)
    for di in range(5):
        for dj in range(5):
            if w[di, dj]:
                mass += w[di, dj] * g[di:di + h, dj:dj + wd]
    per_pixel = np.where(out, 1.0 - mass, mass)
    return DRDResult(float(per_pixel[flipped].sum()) / n_blocks, n_blocks)


def drd(output, truth) -> float:
    return drd_detail(output, truth).value


def contour(truth) -> np.ndarray:
    """Foreground pixels with at least one 4-neighbour in the background."""
    gt = _fg(truth)
    bg = ~gt
    edge = np.zeros_like(gt)
    edge[1:, :] |= bg[:-1, :]
    edge[:-1, :] |= bg[1:, :]
    edge[:, 1:] |= bg[:, :-1]
    edge[:, :-1] |= bg[:, 1:]
    return gt & edge


def contour_distance(truth) -> np.ndarray:
    """Exact Euclidean distance from every pixel to the nearest contour pixel."""
    c = contour(truth)
    if not c.any():
        raise MetricError("no contour: ground truth has a single class")
    return distance_transform_edt(~c)


def mpm(output, truth) -> float:
    out, gt = _pair(output, truth)
    dist = contour_distance(gt)
    total = float(dist.sum())
    if total == 0:
        raise MetricError("no contour: every pixel lies on the contour")
    mp_fn = float(dist[gt & ~out].sum()) / total
    mp_fp = float(dist[out & ~gt].sum()) / total
    return 0.5 * (mp_fn + mp_fp)


@dataclass(frozen=True)
class MetricReport:
    fmeasure: Optional[float]
    psnr: float
    drd: Optional[float]
    nrm: Optional[float]
    mpm: Optional[float]
    drd_warning: bool = False

    @property
    def nrm_scaled(self):
        """NRM in units of 1e-2, as tabulated in DIBCO reports."""
        return None if self.nrm is None else self.nrm * 1e2

    @property
    def mpm_scaled(self):
        return None if self.mpm is None else self.mpm * 1e3

    COLUMNS = ("fmeasure", "psnr", "drd", "nrm_e2", "mpm_e3")

    def row(self):
        return (self.fmeasure, self.psnr, self.drd, self.nrm_scaled, self.mpm_scaled)


def evaluate_pair(output, truth) -> MetricReport:
    """All five measures; an undefined measure is reported as ``None``."""
    out, gt = _pair(output, truth)
    c = confusion(out, gt)

    def attempt(fn, *args):
        try:
            return fn(*args)
        except MetricError:
            return None

    d = drd_detail(out, gt)
    return MetricReport(
        fmeasure=attempt(fmeasure, c),
        psnr=psnr(out, gt),
        drd=d.value,
        nrm=attempt(nrm, c),
        mpm=attempt(mpm, out, gt),
        drd_warning=d.warning,
    )
