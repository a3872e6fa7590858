"""Image-similarity and perturbation-norm metrics on [0, 1] images."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidInputError

__all__ = ["PerceptualReport", "PSNR_CAP", "ssim", "psnr", "mae", "l2_norm", "linf_norm", "report", "mean_report"]

PSNR_CAP = 100.0

SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class PerceptualReport:
    ssim: float
    psnr_db: float
    mae: float
    l2: float
    linf: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = _np(a)
    b = _np(b)
    if a.shape != b.shape:
        raise InvalidInputError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def _np(x) -> np.ndarray:
    if hasattr(x, "detach"):
        x = x.detach().cpu().double().numpy()
    return np.asarray(x, dtype=np.float64)


def _gauss_window() -> np.ndarray:
    r = (SSIM_WIN - 1) // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / SSIM_SIGMA) ** 2)
    return k / k.sum()


def _filter_valid(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    rows = sliding_window_view(img, k.size, axis=0) @ k
    return sliding_window_view(rows, k.size, axis=1) @ k


def _ssim_plane(x: np.ndarray, y: np.ndarray, k: np.ndarray) -> float:
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    mx = _filter_valid(x, k)
    my = _filter_valid(y, k)
    sxx = _filter_valid(x * x, k) - mx * mx
    syy = _filter_valid(y * y, k) - my * my
    sxy = _filter_valid(x * y, k) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def ssim(a, b) -> float:
    """Mean SSIM (11x11 Gaussian window, sigma 1.5, range 1), averaged over channels.

    Statistics are taken over windows that fit entirely inside the image.
    Inputs are ``(C, H, W)`` or ``(H, W)``.
    """
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.ndim != 3:
        raise InvalidInputError(f"expected (C, H, W) or (H, W), got {a.shape}")
    if min(a.shape[1:]) < SSIM_WIN:
        raise InvalidInputError(f"images must be at least {SSIM_WIN}x{SSIM_WIN} for SSIM")
    k = _gauss_window()
    return float(np.mean([_ssim_plane(a[c], b[c], k) for c in range(a.shape[0])]))


def psnr(a, b) -> float:
    """PSNR in dB with peak 1.0, capped at 100 dB for identical inputs."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(1.0 / mse)))


def mae(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean(np.abs(a - b)))


def l2_norm(a, b) -> float:
    """Euclidean norm of the flattened difference on the [0, 1] scale."""
    a, b = _pair(a, b)
    return float(np.sqrt(np.sum((a - b) ** 2)))


def linf_norm(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.max(np.abs(a - b)))


def report(a, b) -> PerceptualReport:
    return PerceptualReport(ssim=ssim(a, b), psnr_db=psnr(a, b), mae=mae(a, b), l2=l2_norm(a, b), linf=linf_norm(a, b))


def mean_report(reports) -> PerceptualReport:
    reports = list(reports)
    if not reports:
        raise InvalidInputError("no reports to aggregate")
    return PerceptualReport(
        **{f: float(np.mean([getattr(r, f) for r in reports])) for f in PerceptualReport.__dataclass_fields__}
    )
