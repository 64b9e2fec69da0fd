from .imaging import (CHANNEL_KINDS, CHANNEL_TABLE, N_CHANNELS, WEIGHTS,
                      normalize_imagery, render_imagery)
from .noise import fractal_noise
from .scene import HEIGHTS_KM, LEVEL_SPACING_KM, Scene, generate_scene, stream
from .track import TrackSpec, random_edge_track, sample_track

__all__ = [
    "CHANNEL_KINDS", "CHANNEL_TABLE", "HEIGHTS_KM", "LEVEL_SPACING_KM",
    "N_CHANNELS", "Scene", "TrackSpec", "WEIGHTS", "fractal_noise",
    "generate_scene", "normalize_imagery", "random_edge_track",
    "render_imagery", "sample_track", "stream",
]
