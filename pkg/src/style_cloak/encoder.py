"""Differentiable image encoders.

Real variants wrap the vision tower of a CLIP checkpoint (via
``transformers``) and return the projected image embedding, without unit
normalization. The ``toy`` variant is a fixed 64x192 linear map applied to
an 8x8 box-downsampled image; it needs no weights and is used throughout the
test-suite.
"""
from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import torch
import torch.nn.functional as F

from .errors import EncoderLoadError, InvalidInputError, InvalidParameterError

__all__ = [
    "EncoderVariant",
    "VARIANTS",
    "Encoder",
    "ToyEncoder",
    "ClipEncoder",
    "load_encoder",
    "default_weights_dir",
    "toy_projection",
    "lcg_uniform",
]

log = logging.getLogger(__name__)

CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)

WEIGHT_FILES = ("model.safetensors", "pytorch_model.bin")


@dataclass(frozen=True)
class EncoderVariant:
    id: str
    input_resolution: int | None  # None: consume native resolution
    embed_dim: int
    mean: tuple[float, float, float]
    std: tuple[float, float, float]
    hub_id: str | None = None
    patch_size: int | None = None


VARIANTS: dict[str, EncoderVariant] = {
    "vit-large": EncoderVariant("vit-large", 224, 768, CLIP_MEAN, CLIP_STD, "openai/clip-vit-large-patch14", 14),
    "vit-huge": EncoderVariant("vit-huge", 224, 1024, CLIP_MEAN, CLIP_STD, "laion/CLIP-ViT-H-14-laion2B-s32B-b79K", 14),
    "vit-base": EncoderVariant("vit-base", 224, 512, CLIP_MEAN, CLIP_STD, "openai/clip-vit-base-patch16", 16),
    "toy": EncoderVariant("toy", None, 64, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0)),
}


def default_weights_dir() -> Path:
    env = os.environ.get("STYLE_CLOAK_MODELS")
    if env:
        return Path(env)
    xdg = os.environ.get("XDG_CACHE_HOME")
    base = Path(xdg) if xdg else Path.home() / ".cache"
    return base / "style-cloak"


class Encoder(torch.nn.Module):
    """Frozen image encoder: ``(3, H, W)`` pixels in [0, 1] -> embedding vector.

    Subclasses implement :meth:`forward_features` on a normalized batch.
    """

    def __init__(self, variant: EncoderVariant):
        super().__init__()
        self.variant = variant
        self.register_buffer("_mean", torch.tensor(variant.mean, dtype=torch.float64).view(1, 3, 1, 1), persistent=False)
        self.register_buffer("_std", torch.tensor(variant.std, dtype=torch.float64).view(1, 3, 1, 1), persistent=False)

    @property
    def id(self) -> str:
        return self.variant.id

    @property
    def embed_dim(self) -> int:
        return self.variant.embed_dim

    @property
    def device(self) -> torch.device:
        return self._mean.device

    @property
    def dtype(self) -> torch.dtype:
        return torch.float32

    def forward_features(self, x: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def preprocess(self, img: torch.Tensor) -> torch.Tensor:
        x = img[None] if img.ndim == 3 else img
        res = self.variant.input_resolution
        if res is not None and tuple(x.shape[-2:]) != (res, res):
            x = F.interpolate(x, size=(res, res), mode="bilinear", align_corners=False)
        mean = self._mean.to(x.dtype)
        std = self._std.to(x.dtype)
        return (x - mean) / std

    def embed(self, img: torch.Tensor) -> torch.Tensor:
        """Embed a ``(3, H, W)`` image (or ``(N, 3, H, W)`` batch); differentiable in the pixels."""
        if img.ndim not in (3, 4) or img.shape[-3] != 3:
            raise InvalidInputError(f"expected (3, H, W) or (N, 3, H, W), got {tuple(img.shape)}")
        if not torch.isfinite(img).all():
            raise InvalidInputError("image contains non-finite values")
        out = self.forward_features(self.preprocess(img))
        return out[0] if img.ndim == 3 else out

    forward = embed


# --- toy variant -----------------------------------------------------------

_LCG_A = 6364136223846793005
_LCG_C = 1442695040888963407
_MASK64 = (1 << 64) - 1


def lcg_uniform(seed: int, n: int) -> list[float]:
    """``n`` floats in [0, 1) from the 64-bit MMIX linear congruential stream.

    ``state <- A * state + C (mod 2**64)``; each draw advances once and keeps
    the top 53 bits. Pure integer arithmetic, so any platform reproduces it.
    """
    state = seed & _MASK64
    out = []
    for _ in range(n):
        state = (_LCG_A * state + _LCG_C) & _MASK64
        out.append((state >> 11) / float(1 << 53))
    return out


@lru_cache(maxsize=None)
def _toy_matrix(seed: int) -> tuple[float, ...]:
    return tuple(lcg_uniform(seed, ToyEncoder.EMBED_DIM * ToyEncoder.IN_FEATURES))


def toy_projection(seed: int = 0, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """The toy encoder's ``(64, 192)`` matrix: entries ``(2u - 1) / sqrt(192)``, row-major."""
    u = torch.tensor(_toy_matrix(seed), dtype=torch.float64)
    w = (2.0 * u - 1.0) / ToyEncoder.IN_FEATURES ** 0.5
    return w.view(ToyEncoder.EMBED_DIM, ToyEncoder.IN_FEATURES).to(dtype)


class ToyEncoder(Encoder):
    """Zero-bias linear encoder: 8x8 box downsample, flatten (C, 8, 8), project to 64."""

    EMBED_DIM = 64
    GRID = 8
    IN_FEATURES = 3 * GRID * GRID

    def __init__(self, seed: int = 0):
        super().__init__(VARIANTS["toy"])
        self.register_buffer("weight", toy_projection(seed), persistent=False)

    @property
    def dtype(self) -> torch.dtype:
        return torch.float64

    def forward_features(self, x: torch.Tensor) -> torch.Tensor:
        pooled = F.adaptive_avg_pool2d(x, self.GRID).flatten(1)
        return pooled @ self.weight.to(x.dtype).T


# --- CLIP variants -----------------------------------------------------------


class ClipEncoder(Encoder):
    """Projected image embedding of a CLIP vision tower."""

    def __init__(self, variant: EncoderVariant, model: torch.nn.Module, weights_digest: str | None = None):
        super().__init__(variant)
        self.model = model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)
        self.weights_digest = weights_digest

    @property
    def dtype(self) -> torch.dtype:
        return next(self.model.parameters()).dtype

    def forward_features(self, x: torch.Tensor) -> torch.Tensor:
        return self.model(pixel_values=x.to(self.dtype)).image_embeds


def _sha256(path: Path, chunk: int = 1 << 22) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        while block := fh.read(chunk):
            h.update(block)
    return h.hexdigest()


def load_encoder(
    variant: str = "vit-large",
    weights_dir: str | Path | None = None,
    device: str | torch.device | None = None,
    checksum: bool = False,
) -> Encoder:
    """Return a frozen encoder for ``variant``.

    CLIP variants are read from ``<weights_dir>/<variant>/`` in Hugging Face
    layout (``config.json`` plus ``model.safetensors`` or
    ``pytorch_model.bin``); ``weights_dir`` defaults to ``$STYLE_CLOAK_MODELS``
    or the user cache directory. Nothing is downloaded.
    """
    if variant not in VARIANTS:
        raise InvalidParameterError(f"unknown encoder variant {variant!r}; choose from {sorted(VARIANTS)}")
    if variant == "toy":
        enc: Encoder = ToyEncoder()
    else:
        enc = _load_clip(VARIANTS[variant], Path(weights_dir) if weights_dir else default_weights_dir(), checksum)
    if device is not None:
        enc = enc.to(device)
    return enc.eval()


def _load_clip(variant: EncoderVariant, weights_dir: Path, checksum: bool) -> ClipEncoder:
    root = weights_dir / variant.id
    expected = [root / "config.json", root / WEIGHT_FILES[0]]
    weight_file = next((root / f for f in WEIGHT_FILES if (root / f).is_file()), None)
    if not (root / "config.json").is_file() or weight_file is None:
        listing = ", ".join(str(p) for p in expected)
        raise EncoderLoadError(
            f"weights for {variant.id!r} ({variant.hub_id}) not found; expected files: {listing} "
            f"(or {WEIGHT_FILES[1]} instead of {WEIGHT_FILES[0]})"
        )
    try:
        from transformers import CLIPVisionModelWithProjection
    except ImportError as exc:  # pragma: no cover - optional dependency
        raise EncoderLoadError("CLIP variants need the 'transformers' package (pip install artifact[clip])") from exc

    try:
        model = CLIPVisionModelWithProjection.from_pretrained(str(root), local_files_only=True)
    except Exception as exc:
        raise EncoderLoadError(f"cannot load {variant.id!r} from {root}: {exc}") from exc

    cfg = model.config
    if cfg.projection_dim != variant.embed_dim:
        raise EncoderLoadError(
            f"{root}: projection_dim {cfg.projection_dim} does not match {variant.id!r} ({variant.embed_dim})"
        )
    if cfg.image_size != variant.input_resolution:
        raise EncoderLoadError(
            f"{root}: image_size {cfg.image_size} does not match {variant.id!r} ({variant.input_resolution})"
        )
    digest = _sha256(weight_file) if checksum else None
    if digest:
        log.info("loaded %s from %s (sha256 %s)", variant.id, weight_file, digest)
    return ClipEncoder(variant, model, digest)
