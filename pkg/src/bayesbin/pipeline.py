"""Two band-pass binarization pipeline.

Stages: adaptive median background removal, high-band detail extraction,
low-band noise mask, masking, then minimum-error (Kittler-Illingworth)
thresholding of the result.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from .imagecore import BinaryImage, GrayImage, Histogram, clamp_window, mean_filter, median_filter

# Closed bounds of the six control parameters.
BOUNDS = {
    "tau1": (0.05, 0.2),
    "ws": (35, 95),
    "tau2": (0.05, 0.5),
    "ms": (0, 10),
    "ws_h": (200, 400),
    "ws_l": (50, 150),
}

KITTLER_SIGMA_MIN = 0.5


class DegenerateHistogram(ValueError):
    """Raised when a histogram has fewer than two occupied bins."""


@dataclass(frozen=True)
class ParamVector:
    tau1: float
    ws: int
    tau2: float
    ms: int
    ws_h: int
    ws_l: int

    def validate(self, bounds=None) -> "ParamVector":
        bounds = BOUNDS if bounds is None else bounds
        for f in fields(self):
            v = getattr(self, f.name)
            lo, hi = bounds[f.name]
            if not lo <= v <= hi:
                raise ValueError(f"{f.name}={v} outside [{lo}, {hi}]")
        for name in ("ws", "ws_h", "ws_l"):
            v = getattr(self, name)
            if int(v) != v or v % 2 == 0:
                raise ValueError(f"{name}={v} must be an odd integer")
        if int(self.ms) != self.ms:
            raise ValueError(f"ms={self.ms} must be an integer")
        return self

    def as_tuple(self):
        return astuple(self)

    @classmethod
    def parse(cls, text: str) -> "ParamVector":
        """Parse ``"t1,ws,t2,ms,wsh,wsl"``."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 6:
            raise ValueError(f"expected 6 comma-separated values, got {len(parts)}")
        t1, ws, t2, ms, wsh, wsl = parts
        return cls(float(t1), int(ws), float(t2), int(ms), int(wsh), int(wsl))

    def __str__(self):
        return (f"tau1={self.tau1:.4f} ws={self.ws} tau2={self.tau2:.4f} "
                f"ms={self.ms} ws_h={self.ws_h} ws_l={self.ws_l}")


@dataclass(frozen=True, eq=False)
class StageOutputs:
    adaptive: np.ndarray
    highband: np.ndarray
    lowmask: np.ndarray
    combined: np.ndarray
    final: BinaryImage

    # file suffix for each stage when dumped
    SUFFIXES = ("_stage1", "_stage2", "_stage3", "_stage4", "_final")

    def items(self):
        return zip(self.SUFFIXES, (self.adaptive, self.highband, self.lowmask, self.combined, self.final))


def adaptive_median_stage(image, tau1: float, ws: int, background=None) -> np.ndarray:
    """Residual of the image below its windowed median, as a float in [0, 1].

    ``background`` may be a precomputed ``median_filter(image, ws)``.
    """
    if not 0.0 <= tau1 <= 1.0:
        raise ValueError(f"tau1={tau1} outside [0, 1]")
    gray = np.asarray(image)
    if background is None:
        background = median_filter(gray, clamp_window(ws, gray.shape))
    residual = np.maximum(0.0, background.astype(np.float64) - gray.astype(np.float64)) / 255.0
    residual[residual < tau1] = 0.0
    return residual


def bandpass_high(enhanced: np.ndarray, ws_h: int) -> np.ndarray:
    enhanced = np.asarray(enhanced, dtype=np.float64)
    w = clamp_window(ws_h, enhanced.shape)
    return np.maximum(0.0, enhanced - mean_filter(enhanced, w))


def bandpass_low_mask(enhanced: np.ndarray, ws_l: int, tau2: float, ms: int) -> np.ndarray:
    """Boolean mask of regions whose low-pass energy reaches ``tau2`` of the peak."""
    if ms < 0:
        raise ValueError(f"ms={ms} must be >= 0")
    enhanced = np.asarray(enhanced, dtype=np.float64)
    low = mean_filter(enhanced, clamp_window(ws_l, enhanced.shape))
    peak = low.max()
    if peak <= 0:
        return np.zeros(enhanced.shape, dtype=bool)
    mask = low >= tau2 * peak
    if ms > 0:
        blurred = mean_filter(mask.astype(np.float64), clamp_window(2 * math.ceil(ms / 2) + 1, mask.shape))
        mask = blurred >= 0.5 * blurred.max()
    return mask


def combine(highband: np.ndarray, mask: np.ndarray) -> np.ndarray:
    highband = np.asarray(highband, dtype=np.float64)
    mask = np.asarray(mask)
    if highband.shape != mask.shape:
        raise ValueError(f"shape mismatch: {highband.shape} vs {mask.shape}")
    return np.where(mask.astype(bool), highband, 0.0)


def quantize(image: np.ndarray) -> np.ndarray:
    """Map a non-negative float image onto 256 levels spanning [0, max]."""
    image = np.asarray(image, dtype=np.float64)
    peak = image.max()
    if peak <= 0:
        return np.zeros(image.shape, dtype=np.int64)
    return np.clip(np.rint(image / peak * 255.0), 0, 255).astype(np.int64)


def kittler_criterion(hist: Histogram, sigma_min: float = KITTLER_SIGMA_MIN) -> np.ndarray:
    """J(T) for T = 0..254; ``inf`` where a class is empty.

    Class moments come from exact integer prefix sums, so a threshold falling
    in an empty stretch of the histogram yields bit-identical J values.
    """
    h = hist.bins
    idx = np.arange(256, dtype=np.int64)
    n1 = np.cumsum(h)[:-1]
    s1 = np.cumsum(h * idx)[:-1]
    q1 = np.cumsum(h * idx * idx)[:-1]
    n, s, q = int(h.sum()), int((h * idx).sum()), int((h * idx * idx).sum())
    n2, s2, q2 = n - n1, s - s1, q - q1
    J = np.full(255, np.inf)
    ok = (n1 > 0) & (n2 > 0)
    if not ok.any():
        return J
    n1, s1, q1, n2, s2, q2 = (a[ok] for a in (n1, s1, q1, n2, s2, q2))
    # n*q - s^2 is an exact integer (Cauchy-Schwarz keeps it >= 0)
    var1 = (n1 * q1 - s1 * s1) / (n1.astype(np.float64) ** 2)
    var2 = (n2 * q2 - s2 * s2) / (n2.astype(np.float64) ** 2)
    sd1 = np.maximum(np.sqrt(var1), sigma_min)
    sd2 = np.maximum(np.sqrt(var2), sigma_min)
    p1 = n1 / n
    p2 = n2 / n
    J[ok] = (1.0 + 2.0 * (p1 * np.log(sd1) + p2 * np.log(sd2))
             - 2.0 * (p1 * np.log(p1) + p2 * np.log(p2)))
    return J


def kittler_threshold_hist(hist: Histogram, sigma_min: float = KITTLER_SIGMA_MIN) -> int:
    if np.count_nonzero(hist.bins) < 2:
        raise DegenerateHistogram("degenerate histogram")
    # argmin returns the first minimum: ties go to the lower threshold
    return int(np.argmin(kittler_criterion(hist, sigma_min)))


def kittler_threshold(image: np.ndarray, sigma_min: float = KITTLER_SIGMA_MIN) -> int:
    """Minimum-error threshold of a float image, as a level of :func:`quantize`.

    Levels strictly above the returned value form the upper class.
    """
    return kittler_threshold_hist(Histogram.of(quantize(image)), sigma_min)


def binarize(image: GrayImage, params: ParamVector, background=None):
    """Run the full pipeline. Returns ``(BinaryImage, StageOutputs)``.

    A page where nothing survives the first stages comes back blank (all
    background) instead of raising.
    """
    params.validate()
    adaptive = adaptive_median_stage(image, params.tau1, params.ws, background)
    high = bandpass_high(adaptive, params.ws_h)
    mask = bandpass_low_mask(adaptive, params.ws_l, params.tau2, params.ms)
    combined = combine(high, mask)
    try:
        levels = quantize(combined)
        t = kittler_threshold_hist(Histogram.of(levels))
        fg = levels > t
    except DegenerateHistogram:
        fg = np.zeros(combined.shape, dtype=bool)
    final = BinaryImage(fg)
    return final, StageOutputs(adaptive, high, mask, combined, final)


def otsu_threshold(image) -> int:
    """Global Otsu level of an 8-bit image; levels <= result form the dark class."""
    hist = np.bincount(np.asarray(image, dtype=np.uint8).ravel(), minlength=256).astype(np.float64)
    idx = np.arange(256)
    w0 = np.cumsum(hist)
    w1 = w0[-1] - w0
    m0 = np.cumsum(hist * idx)
    mt = m0[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mt * w0 - m0 * w0[-1]) ** 2 / (w0 * w1)
    between[~np.isfinite(between)] = -1.0
    return int(np.argmax(between))


def otsu_binarize(image: GrayImage) -> BinaryImage:
    """Baseline: dark pixels at or below the Otsu level are text."""
    gray = np.asarray(image)
    if gray.min() == gray.max():
        return BinaryImage(np.zeros(gray.shape, dtype=bool))
    return BinaryImage(gray <= otsu_threshold(gray))
