"""Input-transformation defenses and a robustness measurement harness."""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import torch
from PIL import Image

from . import metrics
from .encoder import Encoder
from .errors import InvalidInputError, InvalidParameterError
from .imaging import extract_content, gaussian_blur
from .losses import guarded_cosine

__all__ = [
    "DEFENSE_KINDS",
    "DefenseSpec",
    "DefenseOutcome",
    "RobustnessReport",
    "default_specs",
    "apply_defense",
    "evaluate_robustness",
]

DEFENSE_KINDS = ("jpeg", "gaussian_blur", "gaussian_noise", "bit_depth")

_REQUIRED = {
    "jpeg": {"quality"},
    "gaussian_blur": {"sigma"},
    "gaussian_noise": {"sigma", "seed"},
    "bit_depth": {"bits"},
}
_SHORT = {"blur": "gaussian_blur", "noise": "gaussian_noise", "bits": "bit_depth", "jpg": "jpeg"}
_DEFAULTS = {"jpeg": 75, "gaussian_blur": 1.0, "gaussian_noise": 0.02, "bit_depth": 5}


@dataclass(frozen=True)
class DefenseSpec:
    kind: str
    quality: int | None = None
    sigma: float | None = None
    bits: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in DEFENSE_KINDS:
            raise InvalidParameterError(f"unknown defense {self.kind!r}; choose from {DEFENSE_KINDS}")
        present = {k for k in ("quality", "sigma", "bits", "seed") if getattr(self, k) is not None}
        need = _REQUIRED[self.kind]
        if present != need:
            raise InvalidParameterError(f"{self.kind} takes exactly {sorted(need)}, got {sorted(present)}")
        if self.kind == "jpeg" and not 1 <= self.quality <= 100:
            raise InvalidParameterError("jpeg quality must be in 1..100")
        if self.kind == "gaussian_blur" and not self.sigma > 0:
            raise InvalidParameterError("blur sigma must be > 0")
        if self.kind == "gaussian_noise" and not self.sigma >= 0:
            raise InvalidParameterError("noise sigma must be >= 0")
        if self.kind == "bit_depth" and not 1 <= self.bits <= 8:
            raise InvalidParameterError("bits must be in 1..8")

    @classmethod
    def parse(cls, text: str) -> "DefenseSpec":
        """``kind[:value[:seed]]``, e.g. ``jpeg:75``, ``blur:1.0``, ``noise:0.02:7``, ``bits:5``."""
        parts = text.split(":")
        kind = _SHORT.get(parts[0], parts[0])
        if kind not in DEFENSE_KINDS:
            raise InvalidParameterError(f"unknown defense {parts[0]!r}")
        value = parts[1] if len(parts) > 1 and parts[1] else _DEFAULTS[kind]
        try:
            if kind == "jpeg":
                return cls(kind, quality=int(value))
            if kind == "gaussian_blur":
                return cls(kind, sigma=float(value))
            if kind == "bit_depth":
                return cls(kind, bits=int(value))
            seed = int(parts[2]) if len(parts) > 2 else 0
            return cls(kind, sigma=float(value), seed=seed)
        except ValueError as exc:
            if isinstance(exc, InvalidParameterError):
                raise
            raise InvalidParameterError(f"bad defense spec {text!r}: {exc}") from exc

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, **{k: getattr(self, k) for k in sorted(_REQUIRED[self.kind])}}


def default_specs(seed: int = 0) -> list[DefenseSpec]:
    return [
        DefenseSpec("jpeg", quality=_DEFAULTS["jpeg"]),
        DefenseSpec("gaussian_blur", sigma=_DEFAULTS["gaussian_blur"]),
        DefenseSpec("gaussian_noise", sigma=_DEFAULTS["gaussian_noise"], seed=seed),
        DefenseSpec("bit_depth", bits=_DEFAULTS["bit_depth"]),
    ]


def _jpeg(img: torch.Tensor, quality: int) -> torch.Tensor:
    arr = img.detach().cpu().double().numpy().transpose(1, 2, 0)
    q = np.floor(arr * 255.0 + 0.5).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(q).save(buf, format="JPEG", quality=quality)
    buf.seek(0)
    out = np.asarray(Image.open(buf).convert("RGB"), dtype=np.float64) / 255.0
    return torch.from_numpy(out.transpose(2, 0, 1).copy()).to(img)


def apply_defense(img: torch.Tensor, spec: DefenseSpec) -> torch.Tensor:
    if img.ndim != 3 or img.shape[0] != 3:
        raise InvalidInputError(f"expected (3, H, W), got {tuple(img.shape)}")
    if img.min() < 0 or img.max() > 1:
        raise InvalidInputError("defenses operate on [0, 1] pixel images")
    if spec.kind == "jpeg":
        return _jpeg(img, spec.quality)
    if spec.kind == "gaussian_blur":
        return gaussian_blur(img, spec.sigma).clamp(0.0, 1.0)
    if spec.kind == "gaussian_noise":
        if spec.sigma == 0:
            return img.clone()
        rng = np.random.default_rng(spec.seed)
        noise = torch.from_numpy(rng.normal(0.0, spec.sigma, size=tuple(img.shape))).to(img)
        return (img + noise).clamp(0.0, 1.0)
    levels = 2**spec.bits - 1
    return torch.floor(img * levels + 0.5) / levels


@dataclass
class DefenseOutcome:
    spec: DefenseSpec
    report: metrics.PerceptualReport
    destyle_cos_defended: float

    def to_dict(self) -> dict[str, Any]:
        return {"spec": self.spec.to_dict(), "report": self.report.to_dict(), "destyle_cos_defended": self.destyle_cos_defended}


@dataclass
class RobustnessReport:
    destyle_cos_clean: float
    undefended: metrics.PerceptualReport
    defenses: list[DefenseOutcome] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "destyle_cos_clean": self.destyle_cos_clean,
            "undefended": self.undefended.to_dict(),
            "defenses": [d.to_dict() for d in self.defenses],
        }


def evaluate_robustness(
    x_s: torch.Tensor,
    x_adv: torch.Tensor,
    enc: Encoder,
    specs: Sequence[DefenseSpec],
    blur_sigma: float = 3.0,
    content: str = "gray+blur",
) -> RobustnessReport:
    """Measure how much of the destylization survives each defense.

    ``destyle_cos_clean`` is the destylization cosine of the undefended
    protected image; each outcome recomputes it after the defense, always
    against the clean image's style distance. Nothing is judged pass/fail.
    """
    if x_s.shape != x_adv.shape:
        raise InvalidInputError(f"shape mismatch: {tuple(x_s.shape)} vs {tuple(x_adv.shape)}")
    dtype = x_adv.dtype if enc.id == "toy" else enc.dtype
    x_s = x_s.detach().to(enc.device, dtype)
    x_adv = x_adv.detach().to(enc.device, dtype)
    with torch.no_grad():
        x_c = extract_content(x_s, blur_sigma, content)
        e_c = enc.embed(x_c)
        d_clean = enc.embed(x_s) - e_c

        def cos_for(x: torch.Tensor) -> float:
            return float(guarded_cosine(enc.embed(x) - e_c, d_clean))

        out = RobustnessReport(cos_for(x_adv), metrics.report(x_adv, x_s))
        for spec in specs:
            defended = apply_defense(x_adv, spec)
            out.defenses.append(DefenseOutcome(spec, metrics.report(defended, x_s), cos_for(defended)))
    return out
