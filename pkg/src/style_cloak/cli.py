"""``style-cloak`` command line.

Exit codes: 0 success, 1 usage or configuration error, 2 at least one item
failed. Attack settings resolve as flags > ``--config`` JSON file > defaults.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import torch

from . import metrics
from .attack import PERCEPTION_TERMS, AttackConfig, manifest_line, protect_batch, sig9
from .defense import DefenseSpec, default_specs, evaluate_robustness
from .encoder import VARIANTS, load_encoder
from .errors import StyleCloakError
from .imaging import CONTENT_MODES, load_image, save_image
from .wavelet import dwt2, homogeneous_component, structural_component

log = logging.getLogger("style_cloak")

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL = 0, 1, 2
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}

# flag dest -> AttackConfig key (serialized form)
FLAG_TO_KEY = {
    "lam": "lambda",
    "steps": "steps",
    "lr": "learning_rate",
    "encoder": "encoder",
    "seed": "seed",
    "constraint_mode": "constraint_mode",
    "destyle_mode": "destyle_mode",
    "blur_sigma": "blur_sigma",
    "content": "content",
    "perception_terms": "perception_terms",
}
RUN_KEYS = {"in", "out", "defenses", "bit_depth", "jobs", "size", "weights_dir"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_attack_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with attack/run settings")
    p.add_argument("--lambda", dest="lam", type=float, help="destylization weight (default 100)")
    p.add_argument("--steps", type=int, help="optimization steps T (default 50)")
    p.add_argument("--lr", type=float, help="Adam learning rate (default 0.005)")
    p.add_argument("--encoder", choices=sorted(VARIANTS), help="encoder variant (default vit-large)")
    p.add_argument("--seed", type=int)
    p.add_argument("--constraint-mode", choices=("sita", "budget", "l2"))
    p.add_argument("--destyle-mode", choices=("sita", "a", "b"))
    p.add_argument("--blur-sigma", type=float, help="content-extraction blur (default 3.0)")
    p.add_argument("--content", choices=CONTENT_MODES, help="content-image recipe (default gray+blur)")
    p.add_argument("--perception-terms", choices=tuple(PERCEPTION_TERMS), help="wavelet terms kept (default homo+stru)")
    p.add_argument("--jobs", type=int, help="images processed in parallel")
    p.add_argument("--bit-depth", type=int, choices=(8, 16), help="output PNG depth (default 16)")
    p.add_argument("--size", type=int, help="resize inputs to SIZE x SIZE (default 224)")
    p.add_argument("--weights-dir", type=Path, help="encoder weights root (default $STYLE_CLOAK_MODELS)")


def resolve(args: argparse.Namespace) -> tuple[AttackConfig, dict[str, Any]]:
    """Merge defaults, the config file and flags into an attack config plus run settings."""
    attack: dict[str, Any] = {}
    run: dict[str, Any] = {"bit_depth": 16, "jobs": 1, "size": 224, "weights_dir": None, "in": None, "out": None}
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise UsageError("config file must hold a JSON object")
        known = {f.name for f in fields(AttackConfig)} | {"lambda"}
        for k, v in doc.items():
            if k in RUN_KEYS:
                run[k] = v
            elif k in known and k != "lam":
                attack[k] = v
            else:
                raise UsageError(f"unknown config key {k!r}")
    for dest, key in FLAG_TO_KEY.items():
        v = getattr(args, dest, None)
        if v is not None:
            attack[key] = v
    for key in ("bit_depth", "jobs", "size", "weights_dir"):
        v = getattr(args, key, None)
        if v is not None:
            run[key] = v
    for key in ("inputs", "out"):
        v = getattr(args, key, None)
        if v:
            run["in" if key == "inputs" else key] = v
    try:
        cfg = AttackConfig.from_dict(attack)
    except (TypeError, StyleCloakError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc
    if run["bit_depth"] not in (8, 16):
        raise UsageError("bit_depth must be 8 or 16")
    if int(run["jobs"]) < 1:
        raise UsageError("jobs must be >= 1")
    return cfg, run


def collect_images(paths: Sequence[str | Path] | str | Path | None) -> list[Path]:
    if paths is None:
        raise UsageError("no input given (--in)")
    if isinstance(paths, (str, Path)):
        paths = [paths]
    found: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            found.extend(sorted(q for q in p.iterdir() if q.suffix.lower() in IMAGE_SUFFIXES and q.is_file()))
        elif p.is_file():
            found.append(p)
        else:
            raise UsageError(f"input not found: {p}")
    return found


def _load_encoder(name: str, weights_dir):
    device = "cuda" if torch.cuda.is_available() else None
    try:
        return load_encoder(name, weights_dir, device=device)
    except StyleCloakError as exc:
        raise UsageError(str(exc)) from exc


# --- protect -----------------------------------------------------------------


def cmd_protect(args: argparse.Namespace) -> int:
    cfg, run = resolve(args)
    inputs = collect_images(run["in"])
    if not run["out"]:
        raise UsageError("no output directory given (--out)")
    enc = _load_encoder(cfg.encoder, run["weights_dir"]) if inputs else None
    records = protect_batch(
        inputs,
        cfg,
        run["out"],
        enc,
        target_size=run["size"],
        bit_depth=run["bit_depth"],
        jobs=int(run["jobs"]),
    )
    failed = [r for r in records if "error" in r]
    for r in failed:
        print(f"error: {r['input']}: {r['error']}", file=sys.stderr)
    log.info("protected %d/%d images", len(records) - len(failed), len(records))
    return EXIT_PARTIAL if failed else EXIT_OK


# --- report ------------------------------------------------------------------


def _pairs_from_dirs(clean: Path, protected: Path) -> list[tuple[Path, Path]]:
    a = {p.stem: p for p in collect_images(clean)}
    b = {p.stem: p for p in collect_images(protected)}
    orphans = sorted(set(a) ^ set(b))
    if orphans:
        raise UsageError("unpaired files: " + ", ".join(str(a.get(s) or b.get(s)) for s in orphans))
    return [(a[s], b[s]) for s in sorted(a)]


def read_manifest(path: Path) -> list[dict[str, Any]]:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read manifest {path}: {exc}") from exc
    try:
        return [json.loads(line) for line in lines if line.strip()]
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed manifest {path}: {exc}") from exc


def cmd_report(args: argparse.Namespace) -> int:
    if args.manifest:
        recs = [r for r in read_manifest(args.manifest) if not r.get("error")]
        pairs = [(Path(r["input"]), Path(r["output"])) for r in recs]
        clean_size = args.size or 224
        prot_size = args.size
    else:
        if not (args.clean and args.protected):
            raise UsageError("give --manifest, or both --clean and --protected")
        if Path(args.clean).is_file() != Path(args.protected).is_file():
            raise UsageError("--clean and --protected must both be files or both be directories")
        if Path(args.clean).is_file():
            pairs = [(Path(args.clean), Path(args.protected))]
        else:
            pairs = _pairs_from_dirs(Path(args.clean), Path(args.protected))
        clean_size = prot_size = args.size

    out = open(args.out, "w") if args.out else sys.stdout
    reports = []
    try:
        for clean, prot in pairs:
            try:
                a = load_image(clean, clean_size, dtype=torch.float64)
                b = load_image(prot, prot_size, dtype=torch.float64)
            except StyleCloakError as exc:
                raise UsageError(str(exc)) from exc
            if a.shape != b.shape:
                raise UsageError(f"size mismatch: {clean} {tuple(a.shape)} vs {prot} {tuple(b.shape)}")
            rep = metrics.report(b, a)
            reports.append(rep)
            out.write(json.dumps(sig9({"clean": str(clean), "protected": str(prot), **rep.to_dict()})) + "\n")
        if reports:
            agg = metrics.mean_report(reports)
            out.write(json.dumps(sig9({"aggregate": agg.to_dict(), "count": len(reports)})) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


# --- decompose ---------------------------------------------------------------


def cmd_decompose(args: argparse.Namespace) -> int:
    try:
        x = load_image(args.input, args.size, dtype=torch.float64)
    except StyleCloakError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    p = dwt2(x)
    homo = homogeneous_component(x)
    stru = structural_component(x)
    # ll spans [0, 2] for [0, 1] input; detail bands and the structural part are signed
    views = {
        "ll_div2.png": p.ll / 2,
        "lh_plus0.5.png": p.lh + 0.5,
        "hl_plus0.5.png": p.hl + 0.5,
        "hh_plus0.5.png": p.hh + 0.5,
        "homo.png": homo,
        "stru_plus0.5.png": stru + 0.5,
    }
    for name, img in views.items():
        save_image(img.clamp(0.0, 1.0), out / name, bit_depth=16)
    np.savez(
        out / "bands.npz",
        **{k: v.numpy() for k, v in p.bands().items()},
        homo=homo.numpy(),
        stru=stru.numpy(),
    )
    return EXIT_OK


# --- defend ------------------------------------------------------------------


def cmd_defend(args: argparse.Namespace) -> int:
    try:
        specs = [DefenseSpec.parse(s) for s in args.defense] if args.defense else default_specs()
    except StyleCloakError as exc:
        raise UsageError(str(exc)) from exc
    records = read_manifest(args.manifest)
    encoders: dict[str, Any] = {}
    failures = 0
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w") as fh:
        for rec in records:
            if rec.get("error") or not rec.get("output"):
                continue
            cfg = rec.get("config", {})
            name = args.encoder or cfg.get("encoder", "vit-large")
            if name not in encoders:
                encoders[name] = _load_encoder(name, args.weights_dir)
            enc = encoders[name]
            row: dict[str, Any] = {"input": rec["input"], "output": rec["output"], "encoder": name}
            try:
                x_s = load_image(rec["input"], args.size, dtype=enc.dtype)
                x_adv = load_image(rec["output"], None, dtype=enc.dtype)
                rob = evaluate_robustness(
                    x_s, x_adv, enc, specs, cfg.get("blur_sigma", 3.0), cfg.get("content", "gray+blur")
                )
                row.update(rob.to_dict())
            except (StyleCloakError, OSError, ValueError) as exc:
                failures += 1
                row["error"] = f"{type(exc).__name__}: {exc}"
                print(f"error: {rec['output']}: {exc}", file=sys.stderr)
            fh.write(manifest_line(row) + "\n")
    return EXIT_PARTIAL if failures else EXIT_OK


# --- sweep -------------------------------------------------------------------

SWEEP_COLUMNS = ("lambda", "lr", "steps", "ssim", "psnr_db", "mae", "l2", "linf", "final_destyle")


def _grid(text: str | None, cast, fallback) -> list:
    if not text:
        return [fallback]
    try:
        return [cast(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad grid {text!r}: {exc}") from exc


def cmd_sweep(args: argparse.Namespace) -> int:
    base, run = resolve(args)
    inputs = collect_images(run["in"])
    if not run["out"]:
        raise UsageError("no output directory given (--out)")
    out = Path(run["out"])
    lams = _grid(args.lambdas, float, base.lam)
    lrs = _grid(args.lrs, float, base.learning_rate)
    steps = _grid(args.steps_grid, int, base.steps)
    enc = _load_encoder(base.encoder, run["weights_dir"])
    failed = False
    rows = []
    for lam in lams:
        for lr in lrs:
            for t in steps:
                try:
                    cfg = AttackConfig.from_dict({**base.to_dict(), "lambda": lam, "learning_rate": lr, "steps": t})
                except StyleCloakError as exc:
                    raise UsageError(str(exc)) from exc
                point_dir = out / f"lambda{lam:g}_lr{lr:g}_T{t}"
                recs = protect_batch(inputs, cfg, point_dir, enc, target_size=run["size"], bit_depth=run["bit_depth"], jobs=int(run["jobs"]))
                ok = [r for r in recs if "error" not in r]
                failed |= len(ok) != len(recs)
                row = {"lambda": lam, "lr": lr, "steps": t}
                if ok:
                    agg = metrics.mean_report(metrics.PerceptualReport(**r["report"]) for r in ok)
                    row.update(agg.to_dict())
                    row["final_destyle"] = float(np.mean([r["final"]["destyle"] for r in ok]))
                rows.append(row)
    csv_path = Path(args.csv) if args.csv else out / "sweep.csv"
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.9g}" if isinstance(v, float) else v) for k, v in row.items()})
    return EXIT_PARTIAL if failed else EXIT_OK


# --- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="style-cloak", description="Protect artwork against style mimicry.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("protect", help="protect images and write a JSONL manifest")
    p.add_argument("--in", dest="inputs", action="append", type=Path, help="image file or directory (repeatable)")
    p.add_argument("--out", type=Path, help="output directory")
    _add_attack_flags(p)
    p.set_defaults(func=cmd_protect)

    p = sub.add_parser("report", help="perceptual metrics between clean and protected images")
    p.add_argument("--manifest", type=Path, help="manifest written by `protect`")
    p.add_argument("--clean", type=Path)
    p.add_argument("--protected", type=Path)
    p.add_argument("--size", type=int, help="resize both sides to SIZE (default: native; 224 for clean side of a manifest)")
    p.add_argument("--out", type=Path, help="write JSONL here instead of stdout")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("decompose", help="write wavelet bands and homogeneous/structural parts")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--size", type=int, help="resize before decomposing (default: native)")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("defend", help="measure robustness of protected images to preprocessing defenses")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="JSONL robustness report")
    p.add_argument("--defense", action="append", help="kind[:value[:seed]], e.g. jpeg:75, blur:1.0, noise:0.02, bits:5")
    p.add_argument("--encoder", choices=sorted(VARIANTS), help="override the manifest's encoder")
    p.add_argument("--weights-dir", type=Path)
    p.add_argument("--size", type=int, default=224, help="clean-image size (default 224)")
    p.set_defaults(func=cmd_defend)

    p = sub.add_parser("sweep", help="protect + report over a lambda/lr/steps grid, write CSV")
    p.add_argument("--in", dest="inputs", action="append", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--lambdas", help="comma-separated lambda values")
    p.add_argument("--lrs", help="comma-separated learning rates")
    p.add_argument("--steps-grid", help="comma-separated step counts")
    p.add_argument("--csv", type=Path, help="CSV path (default OUT/sweep.csv)")
    _add_attack_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"style-cloak: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
