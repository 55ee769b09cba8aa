"""Run both example configs, print a summary table and the condition reports.

Usage: python3 scripts/reproduce_examples.py [--out DIR]
"""

import argparse
import os
from pathlib import Path

from esc_lab.config import load_config
from esc_lab.experiments import run_experiment, validate_conditions

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=None, help="output directory (default from config)")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    if args.out:
        os.environ["ESC_LAB_OUT"] = args.out
    code = 0
    for name in ("example1", "example2"):
        cfg = load_config(CONFIGS / f"{name}.cfg")
        cfg.jobs = args.jobs
        print(f"== {name} ({cfg.pair_family})")
        print(validate_conditions(cfg).text())
        out = run_experiment(cfg)
        for r in out.results:
            s = r.summary
            print(f"  {r.system:14s} {r.status:9s} t={s.get('final_time', float('nan')):.4g} "
                  f"|x-x*|={s.get('final_distance', float('nan')):.3e} "
                  f"max|u|={s.get('max_control', float('nan')):.3e}"
                  + (f" ({r.reason})" if r.reason else ""))
        print(f"  summary: {out.summary_path}")
        code = max(code, out.exit_code)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
