"""Riemann integration on Jordan sets and numerical change-of-variables checks."""

from .cousin import delta_fine_partition, verify_delta_fine
from .cov import (
    CovOptions,
    CovReport,
    ImageSet,
    SardReport,
    affine_volume_check,
    change_of_variables,
    density_check,
    injectivity_probe,
    nonoverlap_image_check,
    phi_derivative_check,
    pushforward_content,
    sard_image_content,
)
from .darboux import Bracket, Modulus, Sampled, integral_bracket, riemann_sum
from .diff import DensityField, lipschitz_estimate, strong_diff_test
from .errors import RiemcovError
from .expr import compile_expr, compile_map, parse, to_source
from .geometry import AxisBox, BoxSet, ClassifiedSet, Cube, CubeUnion, content_bracket
from .partition import CubePartition, DottedPartition, uniform_grid, validate

__all__ = [
    "AxisBox", "BoxSet", "Bracket", "ClassifiedSet", "CovOptions", "CovReport", "Cube", "CubePartition",
    "CubeUnion", "DensityField", "DottedPartition", "ImageSet", "Modulus", "RiemcovError", "Sampled",
    "SardReport", "affine_volume_check", "change_of_variables", "compile_expr", "compile_map",
    "content_bracket", "delta_fine_partition", "density_check", "injectivity_probe", "integral_bracket",
    "lipschitz_estimate", "nonoverlap_image_check", "parse", "phi_derivative_check", "pushforward_content",
    "riemann_sum", "sard_image_content", "strong_diff_test", "to_source", "uniform_grid", "validate",
    "verify_delta_fine",
]
