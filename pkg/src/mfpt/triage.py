"""Rule-based triage of change-detection probability maps into labelled data.

Every edited sample's probability map is reduced to its mean probability
and a label mask binarised at a low threshold. The mean decides between
accept / manual review / discard, and masks covering almost nothing or almost
everything are dropped as failed edits.
"""
from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .data import DatasetManifest, edited_area_ratio, save_manifest, write_mask
from .errors import ConfigError, ManifestError
from .metrics import binarize

ACCEPT, REVIEW, DISCARD = "accept", "review", "discard"
NO_FAILURE, UNCONTROLLED, NO_CHANGE = "none", "uncontrolled_generation", "no_change"

_HEADER = struct.Struct("<II")


@dataclass(frozen=True)
class TriagePolicy:
    accept_above: float = 0.5
    review_low: float = 0.3
    label_threshold: float = 0.1
    area_min: float = 0.01
    area_max: float = 0.99

    def __post_init__(self):
        if not 0.0 <= self.review_low <= self.accept_above <= 1.0:
            raise ConfigError("need 0 <= review_low <= accept_above <= 1")
        if not 0.0 < self.area_min < self.area_max < 1.0:
            raise ConfigError("need 0 < area_min < area_max < 1")
        if not 0.0 < self.label_threshold < 1.0:
            raise ConfigError("label_threshold must lie in (0, 1)")


@dataclass(frozen=True)
class TriageDecision:
    id: str
    mean_prob: float
    decision: str
    area_ratio: float
    failure_class: str = NO_FAILURE


def triage_decide(mean_prob: float, policy: TriagePolicy = TriagePolicy()) -> str:
    """accept above ``accept_above``, review on the closed band, discard below ``review_low``."""
    if not 0.0 <= mean_prob <= 1.0:
        raise ValueError(f"mean probability must lie in [0, 1], got {mean_prob}")
    if mean_prob > policy.accept_above:
        return ACCEPT
    if mean_prob >= policy.review_low:
        return REVIEW
    return DISCARD


def finalize_label(prob, policy: TriagePolicy = TriagePolicy()) -> np.ndarray:
    return binarize(prob, policy.label_threshold)


def area_gate(mask, policy: TriagePolicy = TriagePolicy()) -> tuple[bool, str]:
    ratio = edited_area_ratio(mask)
    if ratio >= policy.area_max:
        return False, UNCONTROLLED
    if ratio <= policy.area_min:
        return False, NO_CHANGE
    return True, NO_FAILURE


def triage_map(sample_id: str, prob, policy: TriagePolicy = TriagePolicy()):
    """Decision and finalised label for one probability map."""
    prob = np.asarray(prob, dtype=np.float64)
    mean_prob = float(prob.mean())
    mask = finalize_label(prob, policy)
    keep, failure = area_gate(mask, policy)
    decision = triage_decide(mean_prob, policy) if keep else DISCARD
    return TriageDecision(sample_id, mean_prob, decision, edited_area_ratio(mask), failure), mask


# probability map files

def write_probmap(path, prob) -> None:
    """``.png`` stores round(255 * p) in 8 bits; anything else is the raw float32 grid."""
    prob = np.asarray(prob, dtype=np.float64)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".png":
        Image.fromarray(np.rint(np.clip(prob, 0, 1) * 255).astype(np.uint8), mode="L").save(path)
        return
    h, w = prob.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(w, h))
        fh.write(prob.astype("<f4").tobytes())


def read_probmap(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".png":
        with Image.open(path) as im:
            if im.mode not in ("L", "I;16", "I"):
                raise ValueError(f"{path}: probability PNG must be single channel, got {im.mode}")
            return np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    w, h = _HEADER.unpack_from(data)
    body = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    if body.size != w * h:
        raise ValueError(f"{path}: header says {w}x{h} but holds {body.size} values")
    prob = body.reshape(h, w).astype(np.float64)
    if not np.all((prob >= 0) & (prob <= 1)):
        raise ValueError(f"{path}: probabilities outside [0, 1]")
    return prob


def find_probmap(directory, sample_id: str) -> Path | None:
    for ext in (".png", ".bin"):
        p = Path(directory) / f"{sample_id}{ext}"
        if p.is_file():
            return p
    return None


@dataclass
class TriageResult:
    decisions: list[TriageDecision]
    accepted: DatasetManifest
    review: DatasetManifest
    masks: dict

    @property
    def discarded(self) -> list[TriageDecision]:
        return [d for d in self.decisions if d.decision == DISCARD]


def _rebase(manifest: DatasetManifest, rel: str, out_dir: Path) -> str:
    return Path(os.path.relpath(manifest.resolve(rel), out_dir)).as_posix()


def run_triage(probmap_dir, manifest: DatasetManifest, policy: TriagePolicy = TriagePolicy(),
               out_dir=None) -> TriageResult:
    """Triage every edited sample; authentic samples pass through unchanged.

    With ``out_dir`` the results are written there: ``accepted.jsonl`` (with
    finalised masks under ``masks/``), ``review.jsonl`` (proposed masks under
    ``review_masks/``) and ``discarded.csv``. Records are sorted by id.
    """
    out = Path(out_dir) if out_dir is not None else manifest.root
    decisions, masks = [], {}
    accepted, review = [], []
    for s in sorted(manifest, key=lambda s: s.id):
        if not s.is_edited:
            accepted.append(replace(s, image_path=_rebase(manifest, s.image_path, out)))
            continue
        path = find_probmap(probmap_dir, s.id)
        if path is None:
            raise ManifestError(f"{s.id}: no probability map in {probmap_dir}")
        prob = read_probmap(path)
        if prob.shape != (s.height, s.width):
            raise ManifestError(f"{s.id}: probability map is {prob.shape[1]}x{prob.shape[0]}, "
                                f"image is {s.width}x{s.height}")
        decision, mask = triage_map(s.id, prob, policy)
        decisions.append(decision)
        if decision.decision == DISCARD:
            continue
        masks[s.id] = mask
        sub = "masks" if decision.decision == ACCEPT else "review_masks"
        rebased = replace(s, image_path=_rebase(manifest, s.image_path, out),
                          mask_path=f"{sub}/{s.id}.png")
        (accepted if decision.decision == ACCEPT else review).append(rebased)

    result = TriageResult(decisions, DatasetManifest(tuple(accepted), out),
                          DatasetManifest(tuple(review), out), masks)
    if out_dir is not None:
        write_triage(result, out)
    return result


def write_triage(result: TriageResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for s in list(result.accepted) + list(result.review):
        if s.is_edited:
            write_mask(out / s.mask_path, result.masks[s.id])
    save_manifest(result.accepted, out / "accepted.jsonl")
    save_manifest(result.review, out / "review.jsonl")
    with open(out / "discarded.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "mean_prob", "area_ratio", "failure_class"])
        for d in result.discarded:
            writer.writerow([d.id, repr(d.mean_prob), repr(d.area_ratio), d.failure_class])
