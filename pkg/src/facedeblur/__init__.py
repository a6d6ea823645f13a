"""Blind face deblurring by coupled face/PSF basis regression, with quality-scored candidate selection."""

__version__ = "0.1.0"

from .bases import FaceBasisSet, FunctionBasisSet, build_face_bases, build_function_bases
from .imagecore import BlurSpec, blur, convolve, make_kernel
from .metrics import compute_ssim, psnr
from .pipeline import DeblurConfig, DeblurReport, IdentityGallery, deblur, recognize

__all__ = [
    "BlurSpec",
    "DeblurConfig",
    "DeblurReport",
    "FaceBasisSet",
    "FunctionBasisSet",
    "IdentityGallery",
    "blur",
    "build_face_bases",
    "build_function_bases",
    "compute_ssim",
    "convolve",
    "deblur",
    "make_kernel",
    "psnr",
    "recognize",
]
