from .unet import (
    ArchitectureDescriptor,
    RoadUNet,
    predict_noise,
    reduced_descriptor,
    sinusoidal_time_embedding,
    scenario_to_channels,
    channels_to_scenario,
    mask_to_channels,
)
from .freeu import FreeUConfig, backbone_scale, skip_modulate
