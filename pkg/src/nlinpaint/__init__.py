"""Nonlocal, feature-driven exemplar inpainting."""
from .filters import GRAD_X, GRAD_Y, IDENTITY, LAPLACIAN, Kernel, KernelBank, adjoint, compose, convolve
from .image import RegionSet, derive_regions, load_image, load_mask, psnr, save_image, save_mask
from .metric import FeatureGraph, aniso_lambda, compute_features, patch_measure
from .nnf import NNField, compute_nnf_accelerated, compute_nnf_exact

__all__ = [
    "GRAD_X", "GRAD_Y", "IDENTITY", "LAPLACIAN", "Kernel", "KernelBank", "adjoint", "compose",
    "convolve", "RegionSet", "derive_regions", "load_image", "load_mask", "psnr", "save_image",
    "save_mask", "FeatureGraph", "aniso_lambda", "compute_features", "patch_measure", "NNField",
    "compute_nnf_accelerated", "compute_nnf_exact",
]
