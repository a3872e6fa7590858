"""
Trading protection strength for visibility
==========================================

Sweeps the destylization weight with the command-line tool and prints the
resulting CSV. Larger weights should buy lower cosines at the price of a
larger perturbation.
"""
import csv
import tempfile
from pathlib import Path

from style_cloak.cli import main
from style_cloak.samples import write_corpus

work = Path(tempfile.mkdtemp(prefix="sweep-"))
write_corpus(work / "art", n=3)

code = main([
    "sweep", "--in", str(work / "art"), "--out", str(work / "runs"),
    "--lambdas", "10,100,1000", "--steps-grid", "20,50", "--encoder", "toy",
])
print("exit code", code)

with open(work / "runs" / "sweep.csv") as fh:
    for row in csv.DictReader(fh):
        print(f"lambda {row['lambda']:>5}  T {row['steps']:>3}  l2 {float(row['l2']):7.3f}  "
              f"ssim {float(row['ssim']):.4f}  destyle {float(row['final_destyle']):+.4f}")

# the budget variant caps every pixel change instead of shaping it
main(["protect", "--in", str(work / "art"), "--out", str(work / "budget"),
      "--encoder", "toy", "--constraint-mode", "budget"])
print((work / "budget" / "manifest.jsonl").read_text().splitlines()[0][:200], "...")
