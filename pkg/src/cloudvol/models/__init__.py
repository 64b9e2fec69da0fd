"""Model zoo: windowed-attention encoder with masking, volume decoders,
and a convolutional baseline."""

from .blocks import ResidualConvBlock
from .configs import (DECODER_CHANNELS, N_LEVELS, SwinConfig, UNetConfig,
                      desk_swin_config, full_swin_config)
from .decoder import VARIABLES, PatchExpand, SwinConvModel
from .mae import SwinMAE
from .metadata import METADATA_DIM, metadata_vector, patch_metadata
from .swin import (SwinBlock, SwinEncoder, WindowAttention, mask_to_pixels,
                   select_mask, shift_attention_mask)
from .unet import UNet

__all__ = [
    "DECODER_CHANNELS", "METADATA_DIM", "N_LEVELS", "VARIABLES",
    "PatchExpand", "ResidualConvBlock", "SwinBlock", "SwinConfig",
    "SwinConvModel", "SwinEncoder", "SwinMAE", "UNet", "UNetConfig",
    "WindowAttention", "desk_swin_config", "full_swin_config",
    "mask_to_pixels", "metadata_vector", "patch_metadata", "select_mask",
    "shift_attention_mask",
]
