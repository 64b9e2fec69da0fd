from .channels import (ChannelSpec, INSTRUMENTS, REFERENCE_CHANNELS,
                       instrument_channels, match_channels)
from .cvt1 import ContainerError, read_tensor, write_tensor
from .manifest import DatasetManifest, SampleRecord, SPLITS
from .normalization import (NORMALIZATION, NormalizationSpec, SENTINEL,
                            TARGET_VARIABLES, crop_heights, denormalize, normalize)
from .structures import (CLOUD_TYPES, N_CLOUD_TYPES, ProfileCurtain, Sample,
                         SpectralPatch, column_cloud_type)

__all__ = [
    "CLOUD_TYPES", "ChannelSpec", "ContainerError", "DatasetManifest",
    "INSTRUMENTS", "N_CLOUD_TYPES", "NORMALIZATION", "NormalizationSpec",
    "ProfileCurtain", "REFERENCE_CHANNELS", "SENTINEL", "SPLITS", "Sample",
    "SampleRecord", "SpectralPatch", "TARGET_VARIABLES", "column_cloud_type",
    "crop_heights", "denormalize", "instrument_channels", "match_channels",
    "normalize", "read_tensor", "write_tensor",
]
