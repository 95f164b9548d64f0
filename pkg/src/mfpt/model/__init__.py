from .adapter import LowRankAdapter
from .backbone import VitBackbone
from .checkpoint import load_backbone_weights, load_checkpoint, save_checkpoint
from .decoder import PixelDecoder
from .ffrp import (
    FeatureFrequencyPrompter,
    average_pool_tokens,
    frequency_gate,
    group_tokens,
    split_heads_channels,
    ungroup_tokens,
)
from .finp import FrequencyInputPrompter, PromptPatchEmbed
from .network import MFPT, MfptConfig, parameter_accounting
