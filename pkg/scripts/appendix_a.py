"""Random initial conditions: six starts drawn from [-10, 10]^d, one shared emulator per system.

Writes ``<out>/batch/ic_XX/report_<mode>.json`` and ``<out>/batch/summary.csv``.

    python3 scripts/appendix_a.py [--system lorenz|vanderpol|both] [--mode MODE] [--seed N]
"""

import argparse
from pathlib import Path

from flowemu.cli import run_batch
from flowemu.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--system", choices=["lorenz", "vanderpol", "both"], default="both")
    p.add_argument("--mode", default="correlated")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-root", default="out/appendix_a")
    a = p.parse_args()
    systems = ["lorenz", "vanderpol"] if a.system == "both" else [a.system]
    for name in systems:
        cfg = load_config(ROOT / "configs" / f"{name}.ini").with_overrides(
            seed=a.seed, mode=a.mode, out=str(Path(a.out_root) / name))
        for path in run_batch(cfg):
            print(path)
        print((Path(cfg.out) / "batch" / "summary.csv").read_text())


if __name__ == "__main__":
    main()
