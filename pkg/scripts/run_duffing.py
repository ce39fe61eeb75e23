#!/usr/bin/env python3
"""Full desk run on the simulated cubic-stiffness oscillator: generate the
three datasets, train, select parameters with all three approaches, fit the
sparse-regression baseline, and emit the comparison report.

Usage: python scripts/run_duffing.py [outdir] [--epochs N]
"""

import argparse
import json
import sys
import time
from pathlib import Path

from siva.cli import main as siva_main
from siva.experiments import DUFFING_TRUTH, duffing_config


def run(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("outdir", nargs="?", default="runs/duffing")
    ap.add_argument("--epochs", type=int, default=1000)
    ap.add_argument("--stride", type=int, default=1)
    args = ap.parse_args(argv)

    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    cfg_path = out / "config.json"
    cfg_path.write_text(json.dumps(
        duffing_config(max_epochs=args.epochs, approach_three_stride=args.stride),
        indent=2,
    ))

    for command in ("simulate", "identify", "select", "sindy", "report"):
        t0 = time.time()
        rc = siva_main([command, "--config", str(cfg_path), "--out", str(out)])
        print(f"{command}: {time.time() - t0:.1f} s (exit {rc})")
        if rc != 0:
            return rc

    selection = json.loads((out / "selection.json").read_text())
    print("\ncoefficient          truth        I            II           III")
    for name, truth in DUFFING_TRUTH.items():
        row = [f"{name:<16}", f"{truth:<12.6g}"]
        for ap_name in ("one", "two", "three"):
            row.append(f"{selection['approaches'][ap_name]['parameters'][name]:<12.6g}")
        print(" ".join(row))
    print("mse             ", " " * 12, " ".join(
        f"{selection['approaches'][a].get('mse'):<12.4g}" for a in ("one", "two", "three")
    ))
    return 0


if __name__ == "__main__":
    sys.exit(run())
