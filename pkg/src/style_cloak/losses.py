"""Objective terms: CLIP-space destylization and wavelet structure perception.

L1 terms are reduced by summing over channels and averaging over pixels.
With that convention the luma-discounted structural loss is non-negative
pixel by pixel, since ``|sum_c w_c d_c| <= sum_c |d_c|`` for weights in [0, 1].
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F

from .encoder import Encoder
from .errors import DegenerateStyleError, InvalidInputError, InvalidParameterError
from .imaging import to_grayscale
from .wavelet import homogeneous_component, structural_component

__all__ = [
    "DESTYLE_MODES",
    "PERCEPTION_MODES",
    "NORM_GUARD",
    "LossBreakdown",
    "style_distance",
    "guarded_cosine",
    "destylization_loss",
    "homogeneous_loss",
    "structural_loss",
    "perception_loss",
    "pixel_mse",
    "objective",
    "total_loss",
]

DESTYLE_MODES = ("sita", "a", "b")
# perception variants accepted by `objective`; "sita" is homo + stru
PERCEPTION_MODES = ("sita", "homo", "stru", "none", "l2")
NORM_GUARD = 1e-8


@dataclass(frozen=True)
class LossBreakdown:
    destyle: float
    homo: float
    stru: float
    per: float
    total: float
    lam: float

    def to_dict(self) -> dict[str, float]:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LossBreakdown":
        d = dict(d)
        d["lam"] = d.pop("lambda")
        return cls(**d)


def _check_pair(x_adv: torch.Tensor, x_s: torch.Tensor) -> None:
    if x_adv.shape != x_s.shape:
        raise InvalidInputError(f"shape mismatch: {tuple(x_adv.shape)} vs {tuple(x_s.shape)}")
    if x_adv.ndim != 3:
        raise InvalidInputError(f"expected (C, H, W), got {tuple(x_adv.shape)}")


def style_distance(enc: Encoder, x: torch.Tensor, x_c: torch.Tensor) -> torch.Tensor:
    """Embedding offset ``E(x) - E(x_c)`` of an image from its content image."""
    return enc.embed(x) - enc.embed(x_c)


def guarded_cosine(u: torch.Tensor, v: torch.Tensor, what: str = "style distance") -> torch.Tensor:
    nu = torch.linalg.vector_norm(u)
    nv = torch.linalg.vector_norm(v)
    if float(nu.detach()) <= NORM_GUARD or float(nv.detach()) <= NORM_GUARD:
        raise DegenerateStyleError(
            f"{what} norm below {NORM_GUARD:g} ({float(nu):.3g}, {float(nv):.3g}); "
            "the image is indistinguishable from its content image"
        )
    return torch.dot(u, v) / (nu * nv)


def _abs_kinked(u: torch.Tensor) -> torch.Tensor:
    # |u| with subgradient +1 at u == 0; the ablation losses start exactly at that kink
    return u * torch.where(u >= 0, 1.0, -1.0).to(u.dtype).detach()


def destylization_loss(
    enc: Encoder,
    x_adv: torch.Tensor,
    x_s: torch.Tensor,
    x_c: torch.Tensor,
    mode: str = "sita",
    *,
    e_s: torch.Tensor | None = None,
    e_c: torch.Tensor | None = None,
) -> torch.Tensor:
    """Destylization loss (lower is more destylized).

    ``sita``: cosine between the adversarial and clean style distances.
    ``a``: negative L1 distance between clean and adversarial embeddings.
    ``b``: negative gap between the two image/content cosines.

    ``e_s`` and ``e_c`` are optional precomputed embeddings of ``x_s`` and
    ``x_c``; the attack loop passes them so the clean side is encoded once.
    """
    if mode not in DESTYLE_MODES:
        raise InvalidParameterError(f"unknown destylization mode {mode!r}")
    if e_s is None:
        e_s = enc.embed(x_s)
    if e_c is None:
        e_c = enc.embed(x_c)
    e_adv = enc.embed(x_adv)
    if mode == "sita":
        return guarded_cosine(e_adv - e_c, e_s - e_c)
    if mode == "a":
        return -_abs_kinked(e_adv - e_s).sum()
    cos_clean = F.cosine_similarity(e_s, e_c, dim=0, eps=NORM_GUARD)
    cos_adv = F.cosine_similarity(e_adv, e_c, dim=0, eps=NORM_GUARD)
    return -_abs_kinked(cos_adv - cos_clean)


def homogeneous_loss(x_adv: torch.Tensor, x_s: torch.Tensor) -> torch.Tensor:
    _check_pair(x_adv, x_s)
    diff = homogeneous_component(x_adv - x_s)
    return diff.abs().sum(0).mean()


def structural_loss(x_adv: torch.Tensor, x_s: torch.Tensor) -> torch.Tensor:
    """Structural L1 minus its luma part: chroma changes cost more than brightness changes."""
    _check_pair(x_adv, x_s)
    if x_adv.shape[0] != 3:
        raise InvalidInputError("structural_loss needs 3-channel images")
    d = structural_component(x_adv) - structural_component(x_s)
    return d.abs().sum(0).mean() - to_grayscale(d).abs().mean()


def perception_loss(x_adv: torch.Tensor, x_s: torch.Tensor) -> torch.Tensor:
    return homogeneous_loss(x_adv, x_s) + structural_loss(x_adv, x_s)


def pixel_mse(x_adv: torch.Tensor, x_s: torch.Tensor) -> torch.Tensor:
    _check_pair(x_adv, x_s)
    return ((x_adv - x_s) ** 2).mean()


def objective(
    enc: Encoder,
    x_adv: torch.Tensor,
    x_s: torch.Tensor,
    x_c: torch.Tensor,
    lam: float = 100.0,
    mode: str = "sita",
    perception: str = "sita",
    *,
    e_s: torch.Tensor | None = None,
    e_c: torch.Tensor | None = None,
) -> tuple[torch.Tensor, LossBreakdown]:
    """Differentiable ``lam * destyle + per`` plus a detached breakdown.

    ``perception="l2"`` replaces the structure perception loss by the pixel
    MSE; the breakdown then reports the MSE under ``homo`` and zero ``stru``.
    ``"homo"``, ``"stru"`` and ``"none"`` keep a subset of the two wavelet
    terms; dropped terms are reported as zero.
    """
    if lam < 0:
        raise InvalidParameterError(f"lambda must be non-negative, got {lam}")
    destyle = destylization_loss(enc, x_adv, x_s, x_c, mode, e_s=e_s, e_c=e_c)
    if perception not in PERCEPTION_MODES:
        raise InvalidParameterError(f"unknown perception term {perception!r}")
    zero = destyle.new_zeros(())
    if perception == "l2":
        homo, stru = pixel_mse(x_adv, x_s), zero
    else:
        _check_pair(x_adv, x_s)
        homo = homogeneous_loss(x_adv, x_s) if perception in ("sita", "homo") else zero
        stru = structural_loss(x_adv, x_s) if perception in ("sita", "stru") else zero
    total = lam * destyle + (homo + stru)
    d, h, s = (float(t.detach()) for t in (destyle, homo, stru))
    breakdown = LossBreakdown(destyle=d, homo=h, stru=s, per=h + s, total=lam * d + (h + s), lam=float(lam))
    return total, breakdown


def total_loss(
    enc: Encoder,
    x_adv: torch.Tensor,
    x_s: torch.Tensor,
    x_c: torch.Tensor,
    lam: float = 100.0,
    mode: str = "sita",
) -> LossBreakdown:
    with torch.no_grad():
        return objective(enc, x_adv, x_s, x_c, lam, mode)[1]
