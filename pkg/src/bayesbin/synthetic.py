"""Synthetic degraded pages with exact ground truth."""

from __future__ import annotations

import numpy as np

from .imagecore import BinaryImage, GrayImage


def _draw_segment(mask, p0, p1, half_width):
    (r0, c0), (r1, c1) = p0, p1
    h, w = mask.shape
    pad = int(np.ceil(half_width)) + 1
    rlo, rhi = max(0, int(min(r0, r1)) - pad), min(h, int(max(r0, r1)) + pad + 1)
    clo, chi = max(0, int(min(c0, c1)) - pad), min(w, int(max(c0, c1)) + pad + 1)
    if rlo >= rhi or clo >= chi:
        return
    rr, cc = np.mgrid[rlo:rhi, clo:chi]
    dr, dc = r1 - r0, c1 - c0
    length2 = dr * dr + dc * dc
    t = np.zeros(rr.shape) if length2 == 0 else np.clip(((rr - r0) * dr + (cc - c0) * dc) / length2, 0, 1)
    dist2 = (rr - (r0 + t * dr)) ** 2 + (cc - (c0 + t * dc)) ** 2
    mask[rlo:rhi, clo:chi] |= dist2 <= half_width * half_width


def render_strokes(shape=(256, 320), seed=0, margin=24, line_height=28, stroke_width=3.0):
    """Boolean mask of handwriting-like glyph strokes laid out in text lines."""
    rng = np.random.default_rng(seed)
    h, w = shape
    mask = np.zeros(shape, dtype=bool)
    half = stroke_width / 2.0
    for top in range(margin, h - margin - line_height + 1, line_height):
        col = margin + rng.integers(0, 12)
        while col < w - margin - 10:
            if rng.random() < 0.15:  # word gap
                col += rng.integers(8, 16)
                continue
            gw = int(rng.integers(7, 13))
            gh = int(rng.integers(10, line_height - 8))
            base = top + line_height - 6
            pts = [(base - rng.uniform(0, gh), col + rng.uniform(0, gw)) for _ in range(rng.integers(3, 6))]
            for a, b in zip(pts[:-1], pts[1:]):
                _draw_segment(mask, a, b, half)
            col += gw + int(rng.integers(2, 5))
    return mask


def degrade(clean: np.ndarray, seed=0, paper=205.0, ink=45.0, noise_sigma=10.0,
            gradient=60.0, stain_depth=100.0):
    """Ink on paper plus a smooth gradient, a broad stain blob and Gaussian noise."""
    rng = np.random.default_rng(seed)
    h, w = clean.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    angle = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(angle) * xx / w + np.sin(angle) * yy / h)
    ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-12)
    cy, cx = rng.uniform(0.2, 0.8) * h, rng.uniform(0.2, 0.8) * w
    radius = rng.uniform(0.15, 0.3) * min(h, w)
    blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * radius ** 2))
    background = paper - gradient * ramp - stain_depth * blob
    page = np.where(clean, ink + 0.2 * (background - paper), background)
    page = page + noise_sigma * rng.standard_normal(clean.shape)
    return np.clip(np.rint(page), 0, 255).astype(np.uint8)


def make_page(seed=0, shape=(256, 320), noise_sigma=10.0):
    """Return ``(GrayImage, BinaryImage)``: the degraded page and its clean truth."""
    strokes = render_strokes(shape, seed=seed)
    page = degrade(strokes, seed=seed + 10_000, noise_sigma=noise_sigma)
    return GrayImage(page), BinaryImage(strokes)
