import pytest
import torch

from mfpt import synth
from mfpt.data import load_manifest
from mfpt.model import MFPT, MfptConfig

_acceptance = []


def tiny_config(**kw):
    base = dict(n_blocks=2, tap_stages=(2,), patch_size=8, embed_channels=16,
                backbone_channels=16, backbone_heads=2, head_count=4, freq_ratio=0.75,
                group_length=4, adapter_rank=2, decoder_channels=8, input_size=(32, 32))
    base.update(kw)
    return MfptConfig(**base)


@pytest.fixture
def tiny_model():
    return MFPT(tiny_config())


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    synth.generate(out, 10, size=(32, 32), seed=5, split_cycle=("train", "val", "test"))
    return out


@pytest.fixture(scope="session")
def synth_manifest(synth_dir):
    return load_manifest(synth_dir / synth.MANIFEST_NAME)


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(0)


def pytest_runtest_makereport(item, call):
    if call.when == "call" and item.module.__name__.endswith("test_acceptance"):
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        _acceptance.append((doc, call.excinfo is None))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for doc, ok in _acceptance:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {doc}")
