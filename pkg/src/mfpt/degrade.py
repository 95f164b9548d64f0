"""JPEG re-compression and Gaussian blur degradations for robustness sweeps."""
from __future__ import annotations

import io
from dataclasses import dataclass

import cv2
import numpy as np
from PIL import Image

KINDS = ("jpeg", "gaussian_blur")
JPEG_LEVELS = (100, 90, 80, 70, 60, 50)
BLUR_LEVELS = (0, 3, 7, 11, 15, 19)


def check_level(kind: str, level: int) -> int:
    if kind == "jpeg":
        if isinstance(level, bool) or int(level) != level or not 1 <= level <= 100:
            raise ValueError(f"invalid jpeg quality {level!r}: expected an integer in [1, 100]")
    elif kind == "gaussian_blur":
        if isinstance(level, bool) or int(level) != level or level < 0 or (level and level % 2 == 0):
            raise ValueError(f"invalid blur kernel {level!r}: expected 0 or an odd positive integer")
    else:
        raise ValueError(f"unknown degradation kind {kind!r}; expected one of {KINDS}")
    return int(level)


@dataclass(frozen=True)
class DegradationSpec:
    kind: str
    levels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(check_level(self.kind, lv) for lv in self.levels))


def blur_sigma(kernel: int) -> float:
    """Sigma used for a given kernel size (OpenCV's default rule)."""
    return 0.3 * ((kernel - 1) / 2 - 1) + 0.8


def jpeg_roundtrip(image: np.ndarray, quality: int) -> np.ndarray:
    """Encode as JPEG at ``quality`` and decode again; uint8 in, uint8 out."""
    return decode_jpeg(encode_jpeg(image, quality))


def encode_jpeg(image: np.ndarray, quality: int) -> bytes:
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="JPEG", quality=int(quality))
    return buf.getvalue()


def decode_jpeg(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im).copy()


def gaussian_blur(image: np.ndarray, kernel: int) -> np.ndarray:
    if kernel == 0:
        return np.array(image, copy=True)
    arr = np.asarray(image)
    return cv2.GaussianBlur(arr, (kernel, kernel), sigmaX=blur_sigma(kernel),
                            sigmaY=blur_sigma(kernel), borderType=cv2.BORDER_REFLECT_101)


def degrade(image: np.ndarray, kind: str, level: int) -> np.ndarray:
    """Apply one degradation; the image's shape is preserved."""
    level = check_level(kind, level)
    if kind == "jpeg":
        out = jpeg_roundtrip(image, level)
        return out.astype(np.asarray(image).dtype)
    return gaussian_blur(image, level)
