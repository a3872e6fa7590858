"""Iterative protection of a style reference image.

The optimization variable is the protected image itself, initialized to the
clean image and updated by Adam on ``lambda * destyle + per``. Pixels are
clamped to [0, 1] after every update.
"""
from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import torch

from . import metrics
from .encoder import Encoder, load_encoder
from .errors import DivergedError, InvalidInputError, InvalidParameterError, StyleCloakError
from .imaging import CONTENT_MODES, extract_content, load_image, save_image
from .losses import DESTYLE_MODES, LossBreakdown, destylization_loss, objective

__all__ = [
    "CONSTRAINT_MODES",
    "AttackConfig",
    "AttackResult",
    "run_sita",
    "protect_batch",
    "sig9",
    "manifest_line",
]

log = logging.getLogger(__name__)

CONSTRAINT_MODES = ("sita", "budget", "l2")
# perception_terms value -> objective() perception argument
PERCEPTION_TERMS = {"homo+stru": "sita", "homo": "homo", "stru": "stru", "none": "none"}


@dataclass(frozen=True)
class AttackConfig:
    lam: float = 100.0
    steps: int = 50
    learning_rate: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    encoder: str = "vit-large"
    destyle_mode: str = "sita"
    constraint_mode: str = "sita"
    budget_eps: float = 0.015
    budget_alpha: float = 0.002
    budget_steps: int = 40
    l2_lr: float = 0.002
    blur_sigma: float = 3.0
    content: str = "gray+blur"
    perception_terms: str = "homo+stru"
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise InvalidParameterError("steps must be >= 0")
        if not self.learning_rate > 0:
            raise InvalidParameterError("learning_rate must be > 0")
        if self.lam < 0:
            raise InvalidParameterError("lambda must be >= 0")
        if self.destyle_mode not in DESTYLE_MODES:
            raise InvalidParameterError(f"destyle_mode must be one of {DESTYLE_MODES}")
        if self.constraint_mode not in CONSTRAINT_MODES:
            raise InvalidParameterError(f"constraint_mode must be one of {CONSTRAINT_MODES}")
        if self.constraint_mode == "budget":
            if not (self.budget_eps > 0 and self.budget_alpha > 0):
                raise InvalidParameterError("budget_eps and budget_alpha must be > 0 in budget mode")
            if self.budget_steps < 0:
                raise InvalidParameterError("budget_steps must be >= 0")
        if self.constraint_mode == "l2" and not self.l2_lr > 0:
            raise InvalidParameterError("l2_lr must be > 0")
        if self.content not in CONTENT_MODES:
            raise InvalidParameterError(f"content must be one of {CONTENT_MODES}")
        if self.perception_terms not in PERCEPTION_TERMS:
            raise InvalidParameterError(f"perception_terms must be one of {tuple(PERCEPTION_TERMS)}")
        if not self.blur_sigma > 0:
            raise InvalidParameterError("blur_sigma must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidParameterError("Adam betas must lie in [0, 1)")

    # serialized key for `lam`
    KEY_ALIASES = {"lambda": "lam"}

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AttackConfig":
        d = {cls.KEY_ALIASES.get(k, k): v for k, v in d.items()}
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class AttackResult:
    x_adv: torch.Tensor
    loss_trace: list[LossBreakdown]
    elapsed: float
    config: AttackConfig
    # L-inf distance to the clean image after each update (budget mode audit)
    linf_trace: list[float] = field(default_factory=list)

    @property
    def initial(self) -> LossBreakdown:
        return self.loss_trace[0]

    @property
    def final(self) -> LossBreakdown:
        return self.loss_trace[-1]


def _check_input(x_s: torch.Tensor) -> None:
    if x_s.ndim != 3 or x_s.shape[0] != 3:
        raise InvalidInputError(f"expected a (3, H, W) image, got {tuple(x_s.shape)}")
    if not torch.isfinite(x_s).all() or x_s.min() < 0 or x_s.max() > 1:
        raise InvalidInputError("input image must be finite with pixels in [0, 1]")


def run_sita(x_s: torch.Tensor, cfg: AttackConfig, enc: Encoder) -> AttackResult:
    """Protect ``x_s``; returns the protected image and the per-step loss trace.

    ``loss_trace[i]`` is the objective after ``i`` updates, so the trace has
    ``steps + 1`` entries (``budget_steps + 1`` in budget mode).
    """
    _check_input(x_s)
    if enc.id != cfg.encoder:
        raise InvalidParameterError(f"encoder {enc.id!r} does not match config {cfg.encoder!r}")
    # the update rule draws no random numbers; cfg.seed is carried for provenance
    start = time.perf_counter()

    dtype = enc.dtype if enc.id != "toy" else x_s.dtype
    x_s = x_s.detach().to(device=enc.device, dtype=dtype)
    x_c = extract_content(x_s, cfg.blur_sigma, cfg.content)
    with torch.no_grad():
        e_s = enc.embed(x_s)
        e_c = enc.embed(x_c)

    perception = "l2" if cfg.constraint_mode == "l2" else PERCEPTION_TERMS[cfg.perception_terms]

    def evaluate(x: torch.Tensor) -> tuple[torch.Tensor, LossBreakdown]:
        return objective(enc, x, x_s, x_c, cfg.lam, cfg.destyle_mode, perception, e_s=e_s, e_c=e_c)

    x_adv = x_s.clone().requires_grad_(True)
    trace: list[LossBreakdown] = []
    linf: list[float] = []

    if cfg.constraint_mode == "budget":
        # signed-gradient ascent on destylization only, projected to the L-inf ball
        for step in range(cfg.budget_steps + 1):
            with torch.no_grad():
                _, bd = evaluate(x_adv)
            _guard(bd, step)
            trace.append(bd)
            if step == cfg.budget_steps:
                break
            destyle = destylization_loss(enc, x_adv, x_s, x_c, cfg.destyle_mode, e_s=e_s, e_c=e_c)
            (grad,) = torch.autograd.grad(cfg.lam * destyle, x_adv)
            with torch.no_grad():
                x_new = x_adv - cfg.budget_alpha * grad.sign()
                x_new = torch.clamp(x_new, x_s - cfg.budget_eps, x_s + cfg.budget_eps).clamp_(0.0, 1.0)
            x_adv = x_new.requires_grad_(True)
            linf.append(float((x_adv.detach() - x_s).abs().max()))
    else:
        lr = cfg.l2_lr if cfg.constraint_mode == "l2" else cfg.learning_rate
        opt = torch.optim.Adam([x_adv], lr=lr, betas=(cfg.beta1, cfg.beta2), eps=cfg.adam_eps)
        for step in range(cfg.steps + 1):
            loss, bd = evaluate(x_adv)
            _guard(bd, step)
            trace.append(bd)
            if step == cfg.steps:
                break
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            with torch.no_grad():
                x_adv.clamp_(0.0, 1.0)
            linf.append(float((x_adv.detach() - x_s).abs().max()))

    elapsed = time.perf_counter() - start
    return AttackResult(x_adv.detach(), trace, elapsed, cfg, linf)


def _guard(bd: LossBreakdown, step: int) -> None:
    if not all(map(_finite, (bd.destyle, bd.homo, bd.stru, bd.total))):
        raise DivergedError(step)


def _finite(v: float) -> bool:
    return v == v and abs(v) != float("inf")


# --- batch ---------------------------------------------------------------------


def sig9(obj: Any) -> Any:
    """Round every float in a JSON-able structure to 9 significant digits."""
    if isinstance(obj, float):
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {k: sig9(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sig9(v) for v in obj]
    return obj


def manifest_line(record: dict[str, Any]) -> str:
    return json.dumps(sig9(record), sort_keys=False)


def _output_names(inputs: Sequence[Path]) -> list[str]:
    seen: dict[str, int] = {}
    names = []
    for p in inputs:
        stem = p.stem
        n = seen.get(stem, 0)
        seen[stem] = n + 1
        names.append(f"{stem}.png" if n == 0 else f"{stem}_{n}.png")
    return names


def protect_batch(
    inputs: Iterable[str | Path],
    cfg: AttackConfig,
    out_dir: str | Path,
    enc: Encoder | None = None,
    *,
    target_size: int | None = 224,
    bit_depth: int = 16,
    jobs: int = 1,
    manifest_name: str = "manifest.jsonl",
    weights_dir: str | Path | None = None,
) -> list[dict[str, Any]]:
    """Protect every input and write ``<out_dir>/<stem>.png`` plus a JSONL manifest.

    Failures are recorded per item under ``error``; the batch never aborts on
    one bad file. Item ``i`` runs with seed ``cfg.seed + i``.
    """
    inputs = [Path(p) for p in inputs]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / manifest_name
    if not inputs:
        manifest_path.write_text("")
        return []
    if enc is None:
        enc = load_encoder(cfg.encoder, weights_dir, device="cuda" if torch.cuda.is_available() else None)
    names = _output_names(inputs)

    def work(i: int) -> dict[str, Any]:
        item_cfg = replace(cfg, seed=cfg.seed + i)
        out_path = out_dir / names[i]
        rec: dict[str, Any] = {
            "input": str(inputs[i]),
            "output": None,
            "seed": item_cfg.seed,
            "config_digest": item_cfg.digest(),
            "config": item_cfg.to_dict(),
        }
        try:
            x_s = load_image(inputs[i], target_size, dtype=torch.float32)
            res = run_sita(x_s, item_cfg, enc)
            save_image(res.x_adv, out_path, bit_depth=bit_depth)
            rec.update(
                output=str(out_path),
                initial=res.initial.to_dict(),
                final=res.final.to_dict(),
                report=metrics.report(res.x_adv, x_s.to(res.x_adv)).to_dict(),
                elapsed_s=res.elapsed,
            )
        except (StyleCloakError, OSError, RuntimeError, ValueError) as exc:
            log.warning("failed on %s: %s", inputs[i], exc)
            rec["error"] = f"{type(exc).__name__}: {exc}"
        return rec

    records: list[dict[str, Any]] = []
    with open(manifest_path, "w") as fh:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                stream = pool.map(work, range(len(inputs)))
                for rec in stream:
                    fh.write(manifest_line(rec) + "\n")
                    records.append(rec)
        else:
            for i in range(len(inputs)):
                rec = work(i)
                fh.write(manifest_line(rec) + "\n")
                fh.flush()
                records.append(rec)
    return records
