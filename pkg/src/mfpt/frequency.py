"""Grayscale conversion and ideal high-pass filtering used to build prompt images."""
import numpy as np
import torch

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


def to_grayscale(image) -> np.ndarray:
    """BT.601 luma of an (H, W, 3) image in [0, 255], rounded half-up.

    Returns an (H, W, 1) float array of integers in [0, 255].
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[-1] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {image.shape}")
    r, g, b = GRAY_WEIGHTS
    y = r * image[..., 0] + g * image[..., 1] + b * image[..., 2]
    return np.clip(np.floor(y + 0.5), 0, 255)[..., None]


def radial_distance(height: int, width: int) -> np.ndarray:
    """Distance of each FFT bin from DC, in bins, laid out in unshifted order."""
    if height <= 0 or width <= 0:
        raise ValueError(f"non-positive image size {height}x{width}")
    ky = np.fft.fftfreq(height) * height
    kx = np.fft.fftfreq(width) * width
    return np.hypot(ky[:, None], kx[None, :])


def highpass_mask(height: int, width: int, cutoff: float) -> np.ndarray:
    """1 outside the disk of radius ``cutoff * min(H, W) / 2`` around DC, else 0."""
    if not 0.0 < cutoff < 1.0:
        raise ValueError(f"cutoff must lie in (0, 1), got {cutoff}")
    radius = cutoff * min(height, width) / 2.0
    return (radial_distance(height, width) >= radius).astype(np.float64)


def highpass_prompt(gray, cutoff: float = 0.25) -> np.ndarray:
    """Ideal high-pass of a grayscale image; keeps the input's trailing channel axis.

    DC always falls inside the cutoff disk, so the output has zero mean.
    """
    gray = np.asarray(gray, dtype=np.float64)
    squeeze = gray.ndim == 3
    plane = gray[..., 0] if squeeze else gray
    if plane.ndim != 2:
        raise ValueError(f"expected (H, W) or (H, W, 1), got {gray.shape}")
    h, w = plane.shape
    spectrum = np.fft.fft2(plane) * highpass_mask(h, w, cutoff)
    out = np.fft.ifft2(spectrum).real
    return out[..., None] if squeeze else out


def spectral_energy(image, cutoff: float, inside: bool = False) -> float:
    """Absolute spectral energy inside or outside (default) the cutoff disk."""
    plane = np.asarray(image, dtype=np.float64)
    if plane.ndim == 3:
        plane = plane.mean(axis=-1)
    power = np.abs(np.fft.fft2(plane)) ** 2
    high = highpass_mask(*plane.shape, cutoff).astype(bool)
    return float(power[~high].sum() if inside else power[high].sum())


def torch_grayscale(images: torch.Tensor) -> torch.Tensor:
    """(B, 3, H, W) in [0, 255] -> (B, 1, H, W), same rounding as :func:`to_grayscale`."""
    w = images.new_tensor(GRAY_WEIGHTS).view(1, 3, 1, 1)
    y = (images * w).sum(dim=1, keepdim=True)
    return torch.floor(y + 0.5).clamp_(0, 255)


def torch_highpass(gray: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Apply a precomputed (H, W) high-pass mask to (..., H, W) real inputs."""
    spectrum = torch.fft.fft2(gray.to(torch.float64)) * mask.to(torch.float64)
    return torch.fft.ifft2(spectrum).real.to(gray.dtype)
