"""Protect artwork from style mimicry with wavelet-constrained CLIP perturbations.

Typical use::

    from style_cloak import AttackConfig, load_encoder, load_image, run_sita, save_image

    enc = load_encoder("vit-large")
    x = load_image("painting.jpg")
    result = run_sita(x, AttackConfig(), enc)
    save_image(result.x_adv, "painting_protected.png")
"""
from .attack import AttackConfig, AttackResult, protect_batch, run_sita
from .defense import DefenseSpec, RobustnessReport, apply_defense, evaluate_robustness
from .encoder import Encoder, load_encoder
from .errors import (
    DecodeError,
    DegenerateStyleError,
    DivergedError,
    EncoderLoadError,
    InvalidInputError,
    InvalidParameterError,
    StyleCloakError,
)
from .imaging import extract_content, gaussian_blur, load_image, save_image, to_grayscale
from .losses import (
    LossBreakdown,
    destylization_loss,
    homogeneous_loss,
    perception_loss,
    structural_loss,
    style_distance,
    total_loss,
)
from .metrics import PerceptualReport, l2_norm, linf_norm, mae, psnr, report, ssim
from .wavelet import WaveletPyramid, dwt2, homogeneous_component, idwt2, structural_component

__all__ = [
    "AttackConfig",
    "AttackResult",
    "protect_batch",
    "run_sita",
    "DefenseSpec",
    "RobustnessReport",
    "apply_defense",
    "evaluate_robustness",
    "Encoder",
    "load_encoder",
    "DecodeError",
    "DegenerateStyleError",
    "DivergedError",
    "EncoderLoadError",
    "InvalidInputError",
    "InvalidParameterError",
    "StyleCloakError",
    "extract_content",
    "gaussian_blur",
    "load_image",
    "save_image",
    "to_grayscale",
    "LossBreakdown",
    "destylization_loss",
    "homogeneous_loss",
    "perception_loss",
    "structural_loss",
    "style_distance",
    "total_loss",
    "PerceptualReport",
    "l2_norm",
    "linf_norm",
    "mae",
    "psnr",
    "report",
    "ssim",
    "WaveletPyramid",
    "dwt2",
    "homogeneous_component",
    "idwt2",
    "structural_component",
]

__version__ = "0.1.0"
