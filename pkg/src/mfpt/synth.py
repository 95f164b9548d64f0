"""Procedural desk-scale dataset for tests and demos.

Each source image is a smooth colour field with a few flat shapes and sensor
style noise. Its edited twin re-renders one contiguous region without the
fine noise (smoothed, slightly shifted colour and fresh low-amplitude
texture), which mimics the missing high-frequency detail of diffusion edits.
"""
from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from .data import DatasetManifest, ImageSample, save_manifest, write_mask

DEFAULT_SPLIT_CYCLE = ("train", "train", "train", "val", "test")
MANIFEST_NAME = "manifest.jsonl"


def _base_image(rng, width, height):
    yy, xx = np.mgrid[0:height, 0:width] / max(width, height)
    img = np.zeros((height, width, 3))
    for c in range(3):
        a, b, c0 = rng.uniform(-80, 80), rng.uniform(-80, 80), rng.uniform(60, 190)
        img[..., c] = c0 + a * xx + b * yy
    for _ in range(rng.integers(2, 5)):
        color = rng.uniform(0, 255, size=3)
        x0, y0 = rng.integers(0, width), rng.integers(0, height)
        if rng.random() < 0.5:
            w, h = rng.integers(width // 8, width // 2), rng.integers(height // 8, height // 2)
            img[y0:y0 + h, x0:x0 + w] = color
        else:
            r = rng.integers(min(width, height) // 10, min(width, height) // 4)
            img[(xx * max(width, height) - x0) ** 2 + (yy * max(width, height) - y0) ** 2 < r * r] = color
    img += rng.normal(0.0, 10.0, size=img.shape)
    return img


def _region(rng, width, height, area):
    """Axis-aligned rectangle or ellipse with ``area`` fraction of the image, as a bool mask."""
    target = area * width * height
    aspect = rng.uniform(0.6, 1.6)
    mask = np.zeros((height, width), dtype=bool)
    if rng.random() < 0.5:
        h = int(round(np.sqrt(target / aspect)))
        h = min(max(h, 1), height)
        w = min(max(int(round(target / h)), 1), width)
        y0, x0 = rng.integers(0, height - h + 1), rng.integers(0, width - w + 1)
        mask[y0:y0 + h, x0:x0 + w] = True
        return mask
    ry = np.sqrt(target / (np.pi * aspect))
    rx = ry * aspect
    ry, rx = min(ry, height / 2 - 0.5), min(rx, width / 2 - 0.5)
    cy = rng.uniform(ry, height - ry - 1) if height - ry - 1 > ry else (height - 1) / 2
    cx = rng.uniform(rx, width - rx - 1) if width - rx - 1 > rx else (width - 1) / 2
    yy, xx = np.mgrid[0:height, 0:width]
    mask[((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0] = True
    return mask


def _edit(rng, img, mask):
    smooth = cv2.GaussianBlur(img, (0, 0), sigmaX=2.0)
    smooth += rng.uniform(-25, 25, size=3)
    smooth += cv2.GaussianBlur(rng.normal(0.0, 6.0, size=img.shape), (0, 0), sigmaX=1.5)
    out = img.copy()
    out[mask] = smooth[mask]
    return out


def _to_uint8(img):
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate(out_dir, n: int, size=(64, 64), seed: int = 0, area=(0.05, 0.3),
             split_cycle=DEFAULT_SPLIT_CYCLE) -> DatasetManifest:
    """Write ``n`` samples (images, masks, ``manifest.jsonl``) under ``out_dir``.

    Samples come in (authentic, edited) pairs sharing a source id; splits are
    assigned per source round-robin over ``split_cycle`` so no source leaks
    across splits. ``area`` is a fixed fraction or a (low, high) range.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    width, height = size
    lo, hi = (area, area) if np.isscalar(area) else area
    seeds = np.random.SeedSequence(seed).spawn((n + 1) // 2)
    samples = []
    for src in range((n + 1) // 2):
        rng = np.random.default_rng(seeds[src])
        source_id = f"src{src:05d}"
        split = split_cycle[src % len(split_cycle)]
        base = _base_image(rng, width, height)
        sid = f"s{2 * src:05d}"
        Image.fromarray(_to_uint8(base)).save(out / "images" / f"{sid}.png")
        samples.append(ImageSample(sid, source_id, "authentic", width, height,
                                   f"images/{sid}.png", split=split))
        if 2 * src + 1 >= n:
            break
        mask = _region(rng, width, height, rng.uniform(lo, hi))
        eid = f"s{2 * src + 1:05d}"
        Image.fromarray(_to_uint8(_edit(rng, base, mask))).save(out / "images" / f"{eid}.png")
        write_mask(out / "masks" / f"{eid}.png", mask)
        samples.append(ImageSample(eid, source_id, "edited", width, height,
                                   f"images/{eid}.png", mask_path=f"masks/{eid}.png",
                                   instruction="re-render region", split=split))
    manifest = DatasetManifest(tuple(samples), out)
    save_manifest(manifest, out / MANIFEST_NAME)
    return manifest
