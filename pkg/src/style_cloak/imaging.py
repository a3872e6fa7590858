"""Image I/O, luminance conversion, Gaussian blur and content extraction.

Images are torch tensors laid out channels-first, ``(C, H, W)``, with pixel
values on the unit interval. Signed residuals (structural bands, wavelet
detail planes) use the same layout but may leave [0, 1]; ``save_image``
refuses them.
"""
from __future__ import annotations

import math
from pathlib import Path

import cv2
import numpy as np
import torch
import torch.nn.functional as F

from .errors import DecodeError, InvalidInputError, InvalidParameterError

__all__ = [
    "GRAY_WEIGHTS",
    "CONTENT_MODES",
    "load_image",
    "save_image",
    "to_grayscale",
    "gaussian_kernel1d",
    "gaussian_blur",
    "extract_content",
    "symmetric_indices",
]

# BT.601 luma
GRAY_WEIGHTS = (0.299, 0.587, 0.114)

_PIXEL_SLACK = 1e-6


def load_image(
    path: str | Path,
    target_size: int | None = 224,
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    """Read a PNG/JPEG file into a ``(3, S, S)`` tensor in [0, 1].

    8- and 16-bit PNGs keep their full precision. Images are resized with
    antialiased bicubic interpolation and clamped; ``target_size=None`` keeps
    the native resolution.
    """
    path = Path(path)
    if not path.is_file():
        raise DecodeError(f"no such file: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise DecodeError(f"cannot decode image: {path}")
    if raw.size == 0 or raw.shape[0] == 0 or raw.shape[1] == 0:
        raise InvalidInputError(f"zero-area image: {path}")

    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise DecodeError(f"unsupported sample type {raw.dtype} in {path}")

    if raw.ndim == 2:
        rgb = np.repeat(raw[:, :, None], 3, axis=2)
    elif raw.shape[2] == 4:
        rgb = raw[:, :, 2::-1]  # BGRA -> RGB, alpha dropped
    elif raw.shape[2] == 3:
        rgb = raw[:, :, ::-1]
    else:
        raise DecodeError(f"unsupported channel count {raw.shape[2]} in {path}")

    arr = rgb.astype(np.float64) / scale
    img = torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1))).to(dtype)

    if target_size is not None:
        if target_size <= 0:
            raise InvalidParameterError("target_size must be positive")
        if img.shape[1:] != (target_size, target_size):
            img = F.interpolate(
                img[None].double(),
                size=(target_size, target_size),
                mode="bicubic",
                align_corners=False,
                antialias=True,
            )[0].to(dtype)
    return img.clamp(0.0, 1.0)


def save_image(img: torch.Tensor, path: str | Path, bit_depth: int = 16) -> None:
    """Write ``img`` as a lossless PNG; 16-bit by default so sub-1/255 edits survive."""
    path = Path(path)
    if bit_depth not in (8, 16):
        raise InvalidParameterError(f"bit_depth must be 8 or 16, got {bit_depth}")
    if path.suffix.lower() != ".png":
        raise InvalidParameterError(f"only PNG output is supported: {path}")
    arr = _as_numpy(img)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise InvalidInputError(f"expected (C, H, W) with C in (1, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("image contains non-finite values")
    if arr.min() < -_PIXEL_SLACK or arr.max() > 1.0 + _PIXEL_SLACK:
        raise InvalidInputError("signed or out-of-range image; only [0, 1] pixels can be saved")

    levels = 255 if bit_depth == 8 else 65535
    q = np.floor(np.clip(arr, 0.0, 1.0) * levels + 0.5)
    q = q.astype(np.uint8 if bit_depth == 8 else np.uint16)
    if q.shape[0] == 3:
        out = np.ascontiguousarray(q.transpose(1, 2, 0)[:, :, ::-1])
    else:
        out = q[0]
    try:
        ok = cv2.imwrite(str(path), out)
    except cv2.error as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    if not ok:
        raise OSError(f"cannot write {path}")


def to_grayscale(img: torch.Tensor) -> torch.Tensor:
    """Luma ``0.299 R + 0.587 G + 0.114 B`` as a ``(1, H, W)`` tensor.

    Linear, so it also applies to signed residuals.
    """
    if img.ndim != 3 or img.shape[0] != 3:
        raise InvalidInputError(f"to_grayscale expects a 3-channel (3, H, W) tensor, got {tuple(img.shape)}")
    r, g, b = img[0], img[1], img[2]
    return (GRAY_WEIGHTS[0] * r + GRAY_WEIGHTS[1] * g + GRAY_WEIGHTS[2] * b)[None]


def gaussian_kernel1d(sigma: float, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """Normalized 1-D Gaussian taps with radius ``ceil(2 * sigma)``."""
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(2.0 * sigma))
    x = torch.arange(-radius, radius + 1, dtype=torch.float64)
    k = torch.exp(-0.5 * (x / sigma) ** 2)
    return (k / k.sum()).to(dtype)


def symmetric_indices(n: int, radius: int) -> torch.Tensor:
    """Source indices for half-sample symmetric padding (edge sample repeated)."""
    return torch.from_numpy(np.pad(np.arange(n), radius, mode="symmetric"))


def gaussian_blur(img: torch.Tensor, sigma: float = 3.0) -> torch.Tensor:
    """Separable Gaussian blur with symmetric (edge-repeating) boundary handling.

    The symmetric extension makes the operator preserve the global mean.
    """
    kernel = gaussian_kernel1d(sigma, dtype=img.dtype).to(img.device)
    radius = (kernel.numel() - 1) // 2
    if img.ndim != 3:
        raise InvalidInputError(f"expected (C, H, W), got {tuple(img.shape)}")
    c, h, w = img.shape

    rows = symmetric_indices(h, radius).to(img.device)
    cols = symmetric_indices(w, radius).to(img.device)
    padded = img.index_select(1, rows).index_select(2, cols)

    x = padded[:, None]  # (C, 1, H + 2r, W + 2r)
    x = F.conv2d(x, kernel.view(1, 1, 1, -1))
    x = F.conv2d(x, kernel.view(1, 1, -1, 1))
    return x[:, 0]


CONTENT_MODES = ("gray+blur", "gray", "blur")


def extract_content(x_s: torch.Tensor, sigma: float = 3.0, mode: str = "gray+blur") -> torch.Tensor:
    """Style-free content proxy: blurred luma, replicated to three channels.

    ``mode`` drops one of the two steps for ablations: ``"gray"`` keeps full
    resolution luma, ``"blur"`` blurs each color channel.
    """
    if mode not in CONTENT_MODES:
        raise InvalidParameterError(f"content mode must be one of {CONTENT_MODES}")
    if mode == "blur":
        return gaussian_blur(x_s, sigma)
    content = to_grayscale(x_s)
    if mode == "gray+blur":
        content = gaussian_blur(content, sigma)
    return content.expand(3, -1, -1).contiguous()


def _as_numpy(img) -> np.ndarray:
    if isinstance(img, torch.Tensor):
        return img.detach().cpu().double().numpy()
    return np.asarray(img, dtype=np.float64)
