"""
Triage of change-detection maps
===============================

Probability maps from any change detector decide which edited images are
auto-labelled, sent to a human, or dropped.
"""
import tempfile
from pathlib import Path

import numpy as np

from mfpt import synth
from mfpt.triage import TriagePolicy, run_triage, write_probmap

out = Path(tempfile.mkdtemp())
manifest = synth.generate(out / "data", 10, size=(32, 32), seed=1)
edited = [s for s in manifest if s.is_edited]

# stand-ins for detector output: confident, borderline, weak, and two failed edits
rng = np.random.default_rng(0)
recipes = [(0.7, 0.9), (0.5, 0.8), (0.2, 0.9), (1.0, 0.95), (0.0, 0.0)]
for sample, (frac, value) in zip(edited, recipes):
    prob = rng.uniform(0, 0.05, (32, 32))
    prob.ravel()[:int(frac * prob.size)] = value
    write_probmap(out / "probs" / f"{sample.id}.png", prob)

result = run_triage(out / "probs", manifest, TriagePolicy(), out_dir=out / "triage")
for d in result.decisions:
    print(f"{d.id}: mean {d.mean_prob:.3f}  area {d.area_ratio:.3f}  {d.decision:<8} {d.failure_class}")
print(sorted(p.name for p in (out / "triage").iterdir()))
