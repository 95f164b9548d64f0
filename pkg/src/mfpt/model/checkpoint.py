"""Checkpoint archives.

A checkpoint is a zip of ``.npy`` members readable with :func:`numpy.load`:
one member per named tensor (``state_dict`` names such as
``finp.fm.stage2.fc1.weight``) plus ``__config__`` holding the model config as
a JSON string. Member timestamps are fixed so equal states give equal bytes.
"""
from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np
import torch

from ..errors import ConfigError
from .network import MFPT, MfptConfig

CONFIG_KEY = "__config__"
_EPOCH = (1980, 1, 1, 0, 0, 0)


def write_archive(path, arrays: dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arrays[name], order="C"), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=_EPOCH)
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())


def read_archive(path) -> dict[str, np.ndarray]:
    with np.load(path, allow_pickle=False) as data:
        return {k: data[k] for k in data.files}


def state_arrays(model: torch.nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}


def save_checkpoint(path, model: MFPT, state: dict[str, torch.Tensor] | None = None) -> None:
    """Write ``model``'s config and parameters (or an explicit ``state`` snapshot)."""
    arrays = ({k: v.detach().cpu().numpy() for k, v in state.items()}
              if state is not None else state_arrays(model))
    arrays[CONFIG_KEY] = np.array(json.dumps(model.config.to_dict(), sort_keys=True))
    write_archive(path, arrays)


def load_checkpoint(path) -> MFPT:
    arrays = read_archive(path)
    if CONFIG_KEY not in arrays:
        raise ConfigError(f"{path}: not a checkpoint (no {CONFIG_KEY} member)")
    config = MfptConfig.from_dict(json.loads(arrays.pop(CONFIG_KEY).item()))
    model = MFPT(config)
    expected = model.state_dict()
    missing = sorted(set(expected) - set(arrays))
    unexpected = sorted(set(arrays) - set(expected))
    if missing or unexpected:
        raise ConfigError(f"{path}: parameter names do not match the config "
                          f"(missing {missing[:3]}, unexpected {unexpected[:3]})")
    for name, arr in arrays.items():
        if tuple(arr.shape) != tuple(expected[name].shape):
            raise ConfigError(f"{path}: {name} has shape {arr.shape}, expected "
                              f"{tuple(expected[name].shape)}")
    model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in arrays.items()})
    return model


def load_backbone_weights(model: MFPT, path) -> None:
    """Import frozen encoder weights from a named-array archive.

    Names may carry the ``backbone.`` prefix or not. Every backbone tensor must
    be present with a matching shape.
    """
    arrays = read_archive(path)
    arrays.pop(CONFIG_KEY, None)
    arrays = {k[len("backbone."):] if k.startswith("backbone.") else k: v for k, v in arrays.items()}
    own = model.backbone.state_dict()
    missing = sorted(set(own) - set(arrays))
    if missing:
        raise ConfigError(f"{path}: backbone weights missing {missing[:5]}")
    for name, ref in own.items():
        if tuple(arrays[name].shape) != tuple(ref.shape):
            raise ConfigError(f"{path}: {name} has shape {arrays[name].shape}, "
                              f"expected {tuple(ref.shape)}")
    model.backbone.load_state_dict({k: torch.from_numpy(arrays[k].copy()) for k in own})
    model.backbone.freeze()
