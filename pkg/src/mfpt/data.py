"""Dataset records, mask I/O, split-leakage checks and edited-area statistics.

A manifest is a UTF-8 file with one JSON object per line::

    {"id": "s0001", "source_id": "src0000", "role": "edited", "width": 64,
     "height": 64, "image_path": "images/s0001.png",
     "mask_path": "masks/s0001.png", "split": "train", "subset": "DEAL-E"}

Paths are relative to the manifest's directory. Masks are single-channel
8-bit PNGs where values >= 128 mean "edited".
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np
from PIL import Image

from .errors import ManifestError

ROLES = ("authentic", "edited")
SPLITS = ("train", "val", "test", "unassigned")
SUBSETS = ("DEAL-A", "DEAL-E", "DEAL-Full", "DEAL-MB", "custom")

# serialisation order; optional keys are dropped when None
_FIELDS = ("id", "source_id", "role", "width", "height", "image_path",
           "mask_path", "instruction", "split", "subset")
_REQUIRED = ("id", "source_id", "role", "width", "height", "image_path", "split")

MASK_ON = 128


@dataclass(frozen=True)
class ImageSample:
    id: str
    source_id: str
    role: str
    width: int
    height: int
    image_path: str
    mask_path: str | None = None
    instruction: str | None = None
    split: str = "unassigned"
    subset: str | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ManifestError(f"{self.id}: unknown role {self.role!r}")
        if self.split not in SPLITS:
            raise ManifestError(f"{self.id}: unknown split {self.split!r}")
        if self.width <= 0 or self.height <= 0:
            raise ManifestError(f"{self.id}: non-positive size {self.width}x{self.height}")
        if self.role == "edited" and not self.mask_path:
            raise ManifestError(f"{self.id}: edited sample without mask_path")

    @property
    def is_edited(self) -> bool:
        return self.role == "edited"

    def to_record(self) -> dict:
        out = {}
        for key in _FIELDS:
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


@dataclass(frozen=True)
class DatasetManifest:
    samples: tuple[ImageSample, ...]
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        seen = set()
        for s in self.samples:
            if s.id in seen:
                raise ManifestError(f"duplicate sample id {s.id!r}")
            seen.add(s.id)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def subset_tags(self) -> dict[str, str]:
        return {s.id: s.subset for s in self.samples if s.subset is not None}

    def get(self, sample_id: str) -> ImageSample:
        for s in self.samples:
            if s.id == sample_id:
                return s
        raise KeyError(sample_id)

    def filter(self, split: str | None = None, subset: str | None = None,
               role: str | None = None) -> "DatasetManifest":
        keep = [s for s in self.samples
                if (split is None or s.split == split)
                and (subset is None or s.subset == subset)
                and (role is None or s.role == role)]
        return DatasetManifest(tuple(keep), self.root)

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def load_image(self, sample: ImageSample) -> np.ndarray:
        """RGB uint8 array of shape (H, W, 3)."""
        with Image.open(self.resolve(sample.image_path)) as im:
            return np.asarray(im.convert("RGB"))

    def load_mask(self, sample: ImageSample) -> np.ndarray:
        """Binary uint8 mask (H, W); authentic samples get an all-zero mask."""
        if sample.mask_path is None:
            return np.zeros((sample.height, sample.width), dtype=np.uint8)
        try:
            return read_mask(self.resolve(sample.mask_path))
        except (OSError, ValueError) as e:
            raise ManifestError(f"{sample.id}: cannot load mask {sample.mask_path}: {e}") from e


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return (arr >= MASK_ON).astype(np.uint8)


def write_mask(path, mask: np.ndarray) -> None:
    mask = np.asarray(mask)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.where(mask > 0, 255, 0).astype(np.uint8), mode="L").save(path)


def _parse_line(line: str, lineno: int) -> ImageSample:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as e:
        raise ManifestError(f"line {lineno}: invalid JSON ({e.msg})") from e
    if not isinstance(rec, dict):
        raise ManifestError(f"line {lineno}: expected a JSON object")
    missing = [k for k in _REQUIRED if k not in rec]
    if missing:
        raise ManifestError(f"line {lineno}: missing field(s) {', '.join(missing)}")
    unknown = sorted(set(rec) - set(_FIELDS))
    if unknown:
        raise ManifestError(f"line {lineno}: unknown field(s) {', '.join(unknown)}")
    if rec.get("subset") is not None and rec["subset"] not in SUBSETS:
        raise ManifestError(f"line {lineno}: unknown subset {rec['subset']!r}")
    try:
        return ImageSample(
            id=str(rec["id"]),
            source_id=str(rec["source_id"]),
            role=rec["role"],
            width=int(rec["width"]),
            height=int(rec["height"]),
            image_path=rec["image_path"],
            mask_path=rec.get("mask_path"),
            instruction=rec.get("instruction"),
            split=rec["split"],
            subset=rec.get("subset"),
        )
    except ManifestError as e:
        raise ManifestError(f"line {lineno}: {e}") from e
    except (TypeError, ValueError) as e:
        raise ManifestError(f"line {lineno}: {e}") from e


def _image_size(path: Path) -> tuple[int, int]:
    with Image.open(path) as im:
        return im.size


def _verify_files(manifest: DatasetManifest) -> None:
    for s in manifest.samples:
        img = manifest.resolve(s.image_path)
        if not img.is_file():
            raise ManifestError(f"{s.id}: missing image file {img}")
        img_size = _image_size(img)
        if img_size != (s.width, s.height):
            raise ManifestError(
                f"{s.id}: image is {img_size[0]}x{img_size[1]}, record says {s.width}x{s.height}")
        if s.mask_path is None:
            continue
        mask = manifest.resolve(s.mask_path)
        if not mask.is_file():
            raise ManifestError(f"{s.id}: missing mask file {mask}")
        mask_size = _image_size(mask)
        if mask_size != img_size:
            raise ManifestError(
                f"{s.id}: mask is {mask_size[0]}x{mask_size[1]} but image is "
                f"{img_size[0]}x{img_size[1]}")


def load_manifest(path, verify_files: bool = True) -> DatasetManifest:
    """Read a line-delimited JSON manifest.

    With ``verify_files`` every referenced image and mask must exist and the
    mask must match the image size. Blank lines are skipped.
    """
    path = Path(path)
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            samples.append(_parse_line(line, lineno))
    manifest = DatasetManifest(tuple(samples), path.parent)
    if verify_files:
        _verify_files(manifest)
    return manifest


def dumps_sample(sample: ImageSample) -> str:
    return json.dumps(sample.to_record(), ensure_ascii=False, separators=(", ", ": "))


def save_manifest(manifest: DatasetManifest | Iterable[ImageSample], path) -> None:
    samples = manifest.samples if isinstance(manifest, DatasetManifest) else tuple(manifest)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(dumps_sample(s) + "\n")


class LeakageViolation(NamedTuple):
    source_id: str
    splits: tuple[str, ...]


def check_split_leakage(manifest: DatasetManifest | Iterable[ImageSample]) -> list[LeakageViolation]:
    """Sources whose samples appear in more than one of train/val/test.

    Unassigned samples are ignored. Result is sorted by source id.
    """
    splits = defaultdict(set)
    for s in manifest:
        if s.split != "unassigned":
            splits[s.source_id].add(s.split)
    return [LeakageViolation(src, tuple(sorted(found)))
            for src, found in sorted(splits.items()) if len(found) > 1]


def edited_area_ratio(mask) -> float:
    mask = np.asarray(mask)
    if mask.size == 0:
        raise ValueError("empty mask")
    return float(np.count_nonzero(mask)) / mask.size


def area_histogram(manifest: DatasetManifest, bin_count: int) -> list[tuple[tuple[float, float], int]]:
    """Histogram of edited-area ratios over the edited samples.

    Bins split [0, 1] uniformly; each is right-open except the last.
    """
    if bin_count < 1:
        raise ValueError("bin_count must be positive")
    ratios = [edited_area_ratio(manifest.load_mask(s)) for s in manifest if s.is_edited]
    counts, edges = np.histogram(np.asarray(ratios, dtype=float), bins=bin_count, range=(0.0, 1.0))
    return [((float(edges[i]), float(edges[i + 1])), int(counts[i])) for i in range(bin_count)]
