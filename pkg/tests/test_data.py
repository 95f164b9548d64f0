import json
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from mfpt.data import (
    DatasetManifest,
    ImageSample,
    area_histogram,
    check_split_leakage,
    edited_area_ratio,
    load_manifest,
    save_manifest,
    write_mask,
)
from mfpt.errors import ManifestError


def _write_image(path, w, h, value=100):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.full((h, w, 3), value, np.uint8)).save(path)


def _record(sid, src, role, w=8, h=8, split="train", **kw):
    rec = {"id": sid, "source_id": src, "role": role, "width": w, "height": h,
           "image_path": f"images/{sid}.png", "split": split}
    if role == "edited":
        rec["mask_path"] = f"masks/{sid}.png"
    rec.update(kw)
    return rec


def _write_manifest(tmp_path, records, masks=None):
    masks = masks or {}
    for rec in records:
        _write_image(tmp_path / rec["image_path"], rec["width"], rec["height"])
        if "mask_path" in rec:
            m = masks.get(rec["id"], np.zeros((rec["height"], rec["width"]), np.uint8))
            write_mask(tmp_path / rec["mask_path"], m)
    path = tmp_path / "manifest.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


def test_empty_manifest(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text("")
    assert len(load_manifest(p)) == 0


def test_three_records_keep_order_and_roles(tmp_path):
    recs = [_record("a", "s1", "edited"), _record("b", "s1", "authentic"),
            _record("c", "s2", "edited", instruction="add a hat")]
    m = load_manifest(_write_manifest(tmp_path, recs))
    assert [s.id for s in m] == ["a", "b", "c"]
    assert [s.role for s in m] == ["edited", "authentic", "edited"]
    assert m.get("c").instruction == "add a hat"


def test_mask_dimension_mismatch_names_id(tmp_path):
    recs = [_record("bad", "s1", "edited", w=48, h=64)]
    path = _write_manifest(tmp_path, recs, masks={"bad": np.zeros((64, 64), np.uint8)})
    with pytest.raises(ManifestError, match="bad.*mask is 64x64 but image is 48x64"):
        load_manifest(path)


def test_malformed_line_reports_line_number(tmp_path):
    path = _write_manifest(tmp_path, [_record("a", "s1", "authentic")])
    path.write_text(path.read_text() + "{not json\n")
    with pytest.raises(ManifestError, match="line 2"):
        load_manifest(path)


def test_missing_file_and_duplicates(tmp_path):
    path = _write_manifest(tmp_path, [_record("a", "s1", "edited")])
    (tmp_path / "masks" / "a.png").unlink()
    with pytest.raises(ManifestError, match="missing mask"):
        load_manifest(path)
    path = _write_manifest(tmp_path, [_record("a", "s1", "authentic")] * 2)
    with pytest.raises(ManifestError, match="duplicate"):
        load_manifest(path)


def test_edited_requires_mask():
    with pytest.raises(ManifestError):
        ImageSample("x", "s", "edited", 8, 8, "x.png")


def test_save_load_roundtrip_is_byte_identical(tmp_path):
    recs = [_record("a", "s1", "edited", subset="DEAL-E", instruction="make it snow ❄"),
            _record("b", "s1", "authentic", split="train")]
    path = _write_manifest(tmp_path, recs)
    first = tmp_path / "first.jsonl"
    save_manifest(load_manifest(path), first)
    second = tmp_path / "second.jsonl"
    save_manifest(load_manifest(first), second)
    assert first.read_bytes() == second.read_bytes()


def test_authentic_mask_is_all_zero(tmp_path):
    m = load_manifest(_write_manifest(tmp_path, [_record("a", "s1", "authentic", w=5, h=3)]))
    mask = m.load_mask(m.get("a"))
    assert mask.shape == (3, 5) and not mask.any()


def test_mask_encoding_threshold(tmp_path):
    Image.fromarray(np.array([[0, 127, 128, 255]], np.uint8)).save(tmp_path / "m.png")
    from mfpt.data import read_mask
    assert read_mask(tmp_path / "m.png").tolist() == [[0, 0, 1, 1]]


def _sample(sid, src, split):
    return ImageSample(sid, src, "authentic", 4, 4, f"{sid}.png", split=split)


def test_leakage_single_violation():
    m = DatasetManifest((_sample("a", "A", "train"),
                         ImageSample("e", "A", "edited", 4, 4, "e.png", "e_m.png", split="val")))
    assert check_split_leakage(m) == [("A", ("train", "val"))]


def test_leakage_same_split_is_clean():
    m = [_sample(f"x{i}", "A", "train") for i in range(4)]
    assert check_split_leakage(m) == []


def test_leakage_unassigned_is_ignored():
    assert check_split_leakage([_sample("a", "A", "train"), _sample("b", "A", "unassigned")]) == []


def test_leakage_planted_pair_matches_groupby_oracle():
    rng = random.Random(3)
    splits = ["train", "val", "test"]
    samples, home = [], {}
    for i in range(10):
        home[f"src{i}"] = rng.choice(splits)
        samples += [_sample(f"s{i}_{j}", f"src{i}", home[f"src{i}"]) for j in range(rng.randint(1, 4))]
    other = next(sp for sp in splits if sp != home["src4"])
    samples.insert(rng.randrange(len(samples)), _sample("planted", "src4", other))
    # oracle: brute-force group-by
    groups = {}
    for s in samples:
        groups.setdefault(s.source_id, set()).add(s.split)
    expected = sorted((k, tuple(sorted(v))) for k, v in groups.items() if len(v) > 1)
    assert expected == [("src4", tuple(sorted({home["src4"], other})))]
    assert check_split_leakage(samples) == expected


@given(st.permutations([_sample(f"s{i}", f"src{i % 3}", ["train", "val", "test"][i % 4 % 3])
                        for i in range(9)]))
def test_leakage_permutation_invariant(samples):
    ref = [_sample(f"s{i}", f"src{i % 3}", ["train", "val", "test"][i % 4 % 3]) for i in range(9)]
    assert check_split_leakage(samples) == check_split_leakage(ref)


@pytest.mark.parametrize("mask,expected", [
    (np.zeros((8, 8)), 0.0),
    (np.ones((8, 8)), 1.0),
    (np.array([[1, 1, 0, 0], [0, 1, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]), 0.1875),
])
def test_edited_area_ratio(mask, expected):
    assert edited_area_ratio(mask) == expected


@settings(max_examples=50)
@given(arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.integers(0, 1)))
def test_area_ratio_complement(mask):
    r = edited_area_ratio(mask)
    assert 0.0 <= r <= 1.0
    assert r == pytest.approx(1 - edited_area_ratio(1 - mask), abs=1e-12)


def _manifest_with_ratios(tmp_path, ratios, n_authentic=1, size=20):
    recs, masks = [], {}
    for i, r in enumerate(ratios):
        k = int(round(r * size * size))
        m = np.zeros(size * size, np.uint8)
        m[:k] = 1
        masks[f"e{i}"] = m.reshape(size, size)
        recs.append(_record(f"e{i}", f"s{i}", "edited", w=size, h=size))
    recs += [_record(f"a{i}", f"t{i}", "authentic", w=size, h=size) for i in range(n_authentic)]
    return load_manifest(_write_manifest(tmp_path, recs, masks))


def test_histogram_counts(tmp_path):
    m = _manifest_with_ratios(tmp_path, [0.05, 0.07, 0.50])
    hist = area_histogram(m, 10)
    assert [c for _, c in hist] == [2, 0, 0, 0, 0, 1, 0, 0, 0, 0]
    assert hist[0][0] == (0.0, 0.1)


def test_histogram_without_edits(tmp_path):
    m = _manifest_with_ratios(tmp_path, [], n_authentic=3)
    assert [c for _, c in area_histogram(m, 4)] == [0, 0, 0, 0]


def test_histogram_matches_bruteforce_binning(tmp_path):
    rng = np.random.default_rng(0)
    size = 10
    ratios = rng.integers(0, size * size + 1, size=100) / (size * size)
    m = _manifest_with_ratios(tmp_path, ratios, n_authentic=0, size=size)
    bins = 7
    edges = [i / bins for i in range(bins + 1)]
    expected = [0] * bins
    for r in ratios:
        for i in range(bins):
            last = i == bins - 1
            if edges[i] <= r < edges[i + 1] or (last and r == 1.0):
                expected[i] += 1
                break
    got = [c for _, c in area_histogram(m, bins)]
    assert got == expected and sum(got) == 100
