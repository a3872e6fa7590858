"""One-level orthonormal Haar transform and the homogeneous/structural split.

Subband naming: ``lh`` is low-pass along width and high-pass along height
(responds to horizontal edges), ``hl`` the transpose, ``hh`` the diagonal.
For a 2x2 block ``[[a, b], [c, d]]``::

    ll = (a + b + c + d) / 2    lh = (a + b - c - d) / 2
    hl = (a - b + c - d) / 2    hh = (a - b - c + d) / 2
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import InvalidInputError
from .imaging import symmetric_indices

__all__ = [
    "WaveletPyramid",
    "dwt2",
    "idwt2",
    "homogeneous_component",
    "structural_component",
]


@dataclass(frozen=True)
class WaveletPyramid:
    ll: torch.Tensor
    lh: torch.Tensor
    hl: torch.Tensor
    hh: torch.Tensor
    # (H, W) before padding to even size
    size: tuple[int, int]

    def bands(self) -> dict[str, torch.Tensor]:
        return {"ll": self.ll, "lh": self.lh, "hl": self.hl, "hh": self.hh}

    def energy(self) -> float:
        return float(sum((b.double() ** 2).sum() for b in self.bands().values()))


def _pad_even(x: torch.Tensor) -> torch.Tensor:
    h, w = x.shape[-2:]
    if h % 2:
        x = x.index_select(-2, symmetric_indices(h, 1)[1:].to(x.device))
    if w % 2:
        x = x.index_select(-1, symmetric_indices(w, 1)[1:].to(x.device))
    return x


def dwt2(x: torch.Tensor) -> WaveletPyramid:
    """Single-level 2-D orthonormal Haar analysis of a ``(C, H, W)`` tensor.

    Odd sizes are symmetric-padded by one row/column; ``idwt2`` crops it back.
    """
    if x.ndim != 3:
        raise InvalidInputError(f"expected (C, H, W), got {tuple(x.shape)}")
    size = (x.shape[1], x.shape[2])
    x = _pad_even(x)
    a = x[:, 0::2, 0::2]
    b = x[:, 0::2, 1::2]
    c = x[:, 1::2, 0::2]
    d = x[:, 1::2, 1::2]
    return WaveletPyramid(
        ll=(a + b + c + d) / 2,
        lh=(a + b - c - d) / 2,
        hl=(a - b + c - d) / 2,
        hh=(a - b - c + d) / 2,
        size=size,
    )


def idwt2(p: WaveletPyramid) -> torch.Tensor:
    """Synthesis inverse of :func:`dwt2` (perfect reconstruction)."""
    shape = p.ll.shape
    for name, band in p.bands().items():
        if band.shape != shape:
            raise InvalidInputError(f"subband {name} has shape {tuple(band.shape)}, expected {tuple(shape)}")
    if len(shape) != 3:
        raise InvalidInputError(f"subbands must be (C, H/2, W/2), got {tuple(shape)}")
    h, w = p.size
    if (h + 1) // 2 != shape[1] or (w + 1) // 2 != shape[2]:
        raise InvalidInputError(f"recorded size {p.size} does not match subband shape {tuple(shape)}")

    ll, lh, hl, hh = p.ll, p.lh, p.hl, p.hh
    a = (ll + lh + hl + hh) / 2
    b = (ll + lh - hl - hh) / 2
    c = (ll - lh + hl - hh) / 2
    d = (ll - lh - hl + hh) / 2
    c_, h2, w2 = shape
    # interleave: rows (a b / c d) -> (C, H2, 2, W2, 2)
    top = torch.stack((a, b), dim=-1)
    bottom = torch.stack((c, d), dim=-1)
    out = torch.stack((top, bottom), dim=2).reshape(c_, 2 * h2, 2 * w2)
    return out[:, :h, :w]


def homogeneous_component(x: torch.Tensor) -> torch.Tensor:
    """Reconstruction from the ``ll`` band only (details zeroed)."""
    p = dwt2(x)
    zero = torch.zeros_like(p.ll)
    return idwt2(WaveletPyramid(p.ll, zero, zero, zero, p.size))


def structural_component(x: torch.Tensor) -> torch.Tensor:
    """Residual ``x - homogeneous_component(x)``."""
    return x - homogeneous_component(x)
