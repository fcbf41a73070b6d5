"""Saturated feedback design and certified regions of attraction for unstable reaction-diffusion equations."""

from .design import PlantFD, hurwitz, place_poles, stabilizable
from .roa import Certificate, certify_boundary, certify_dynamic, certify_pointwise, certify_static
from .spectral import ModalSystem, ModeShape, OperatorSpec, analytic_spectrum, build_modal_system, numeric_spectrum

__version__ = "0.1.0"

__all__ = [
    "Certificate",
    "ModalSystem",
    "ModeShape",
    "OperatorSpec",
    "PlantFD",
    "analytic_spectrum",
    "build_modal_system",
    "certify_boundary",
    "certify_dynamic",
    "certify_pointwise",
    "certify_static",
    "hurwitz",
    "numeric_spectrum",
    "place_poles",
    "stabilizable",
]
