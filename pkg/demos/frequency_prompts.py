"""
Frequency prompts and the feature gate
======================================

What the prompters see: the high-pass prompt image of an edited sample,
and how the cosine gate rescales tokens.
"""
import tempfile

import numpy as np
import torch

from mfpt import synth
from mfpt.frequency import highpass_prompt, spectral_energy, to_grayscale
from mfpt.model import frequency_gate

out = tempfile.mkdtemp()
manifest = synth.generate(out, 2, size=(64, 64), seed=3)
edited = manifest.samples[1]
image = manifest.load_image(edited)
mask = manifest.load_mask(edited)

# grayscale, then drop everything inside a disk of radius 0.25 * 32 around DC
gray = to_grayscale(image)
prompt = highpass_prompt(gray, 0.25)[..., 0]
print("prompt mean (DC removed):", prompt.mean())
print("energy kept inside the cutoff:", spectral_energy(prompt, 0.25, inside=True))

# the edited region was smoothed, so its high-frequency response is weaker
inside = np.abs(prompt[mask == 1]).mean()
outside = np.abs(prompt[mask == 0]).mean()
print(f"mean |prompt| inside edit {inside:.2f}, outside {outside:.2f}")

# gate: tokens aligned with the filter token pass, orthogonal ones are zeroed
t_filter = torch.tensor([1.0, 0.0])
x_hlr = torch.tensor([[[2.0, 0.0], [1.0, 1.0], [0.0, 3.0]]])
x_r = torch.ones(1, 3, 2)
print(frequency_gate(x_hlr, x_r, t_filter, torch.eye(2))[0])
