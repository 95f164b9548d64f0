"""
Desk-scale training, evaluation and robustness
==============================================

Generate a small synthetic set, fit the prompt-tuned model with the backbone
frozen, then score it on clean and degraded copies of the test split.

The frozen encoder here is randomly initialised, so held-out scores stay low;
the point is the workflow. Roughly half a minute on one CPU core.
"""
import tempfile
from pathlib import Path

from mfpt import synth
from mfpt.degrade import DegradationSpec
from mfpt.evaluation import evaluate_model, robustness_sweep
from mfpt.model import MFPT, MfptConfig, parameter_accounting, save_checkpoint
from mfpt.training import TrainConfig, train

out = Path(tempfile.mkdtemp())
manifest = synth.generate(out / "data", 40, size=(64, 64), seed=0)
print({split: len(manifest.filter(split=split)) for split in ("train", "val", "test")})

model = MFPT(MfptConfig())
total, trainable, ratio = parameter_accounting(model)
print(f"{trainable} of {total} parameters are trainable ({ratio:.1%})")

result = train(model, manifest, TrainConfig(max_iterations=300, eval_interval=50))
print("validation pF1 by iteration:", result.val_trace)
model.load_state_dict(result.best_state)
save_checkpoint(out / "best.npz", model)

# edited test images give pF1/IoU, the authentic ones pACC only
for subset in ("DEAL-E", "DEAL-A"):
    report = evaluate_model(model, manifest, subset)
    print(subset, report.pF1, report.IoU, report.pACC)

for kind, levels in (("jpeg", (100, 70, 50)), ("gaussian_blur", (0, 7, 15))):
    for level, iou, pf1 in robustness_sweep(model, manifest, DegradationSpec(kind, levels), "test"):
        print(f"{kind:>13} {level:>3}  IoU {iou:.3f}  pF1 {pf1:.3f}")
