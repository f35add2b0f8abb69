"""Image inpainting with smoothed particle hydrodynamics kernels."""

from .anisotropy import estimate_tensor, install_anisotropy
from .baselines import DiffusionProblem, solve_diffusion
from .densify import DensifyConfig, densify
from .image import FormatError, GrayImage, mse, mse_clamped, read_pgm, write_pgm
from .inpaint import Order, ReplayLog, inpaint
from .kernels import KernelSpec, parse_kernel
from .mask import InpaintingMask, make_random_mask, make_regular_mask, mask_from_image, read_mask, write_mask
from .tonal import assemble_operator, cgnr, tonal_optimize
from .voronoi import distance_transform

__version__ = "0.1.0"

__all__ = [
    "DensifyConfig", "DiffusionProblem", "FormatError", "GrayImage", "InpaintingMask", "KernelSpec",
    "Order", "ReplayLog", "assemble_operator", "cgnr", "densify", "distance_transform",
    "estimate_tensor", "inpaint", "install_anisotropy", "make_random_mask", "make_regular_mask",
    "mask_from_image", "mse", "mse_clamped", "parse_kernel", "read_mask", "read_pgm",
    "solve_diffusion", "tonal_optimize", "write_mask", "write_pgm",
]
