"""Inverse-engineered separation of two trapped ions."""
__version__ = "0.1.0"

from .units import TrapSpec, make_trap_spec  # noqa: E402
from .potential import PotentialParams, equilibrium_distance, normal_modes, frame_from_frequencies  # noqa: E402
from .ansatz import ProtocolDesign, Waveform, design_protocol, synthesize_waveform  # noqa: E402
from .shooting import ShootingResult, shoot, optimized_waveform  # noqa: E402
from .classical import ClassicalState, ExcitationReport, propagate_classical  # noqa: E402

__all__ = [
    "TrapSpec", "make_trap_spec", "PotentialParams", "equilibrium_distance", "normal_modes",
    "frame_from_frequencies", "ProtocolDesign", "Waveform", "design_protocol", "synthesize_waveform",
    "ShootingResult", "shoot", "optimized_waveform", "ClassicalState", "ExcitationReport",
    "propagate_classical",
]
