"""Magnetic polarizability tensor spectral signatures with certified PODP
reduced-order models."""

from .adapt import AdaptConfig, AdaptState, run_adaptive
from .certify import ResidualFactorization, StabilityConstant, estimate_alpha_lb
from .fom import (
    FullOrderModel,
    MaterialParams,
    MeshGrading,
    build_radial_sphere_fom,
    export_fom,
    load_fom_from_files,
    solve_full_order,
)
from .mpt import (
    MptTensor,
    SpectralSignature,
    assemble_signature,
    frobenius_error,
    predict_voltage,
    scale_tensor,
    tensor_invariants,
    wait_sphere_oracle,
)
from .pod import PodRom

__all__ = [
    "AdaptConfig",
    "AdaptState",
    "FullOrderModel",
    "MaterialParams",
    "MeshGrading",
    "MptTensor",
    "PodRom",
    "ResidualFactorization",
    "SpectralSignature",
    "StabilityConstant",
    "assemble_signature",
    "build_radial_sphere_fom",
    "estimate_alpha_lb",
    "export_fom",
    "frobenius_error",
    "load_fom_from_files",
    "predict_voltage",
    "run_adaptive",
    "scale_tensor",
    "solve_full_order",
    "tensor_invariants",
    "wait_sphere_oracle",
]
