from .volume_model import Volume, Mask
from .dvf_model import DVF, PatchGrid
from .landmark_model import Landmark, LandmarkSet
from .mind_model import MindDescriptor
from .network_model import NetworkParams, GeneratorParams, DiscriminatorParams

__all__ = [
    "Volume",
    "Mask",
    "DVF",
    "PatchGrid",
    "Landmark",
    "LandmarkSet",
    "MindDescriptor",
    "NetworkParams",
    "GeneratorParams",
    "DiscriminatorParams",
]
