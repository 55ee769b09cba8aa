"""Command-line entry point: ``esc-lab run|sweep|validate <config>``.

Exit codes: 0 all requested checks pass, 1 invalid config or failed condition,
2 an integration aborted in a requested system. ``ESC_LAB_OUT`` overrides the
output directory.
"""

from __future__ import annotations

import argparse
import sys

from esc_lab.config import ConfigError, load_config
from esc_lab.experiments import (EXIT_INVALID, EXIT_OK, SWEEP_COLUMNS, run_experiment,
                                 sweep_omega, validate_conditions)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="esc-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="integrate every configured system and write CSVs")
    r.add_argument("config")
    r.add_argument("--jobs", type=int, default=None, help="worker processes (overrides run.jobs)")
    s = sub.add_parser("sweep", help="sup-deviation from the averaged flow over several omegas")
    s.add_argument("config")
    s.add_argument("--omegas", type=float, nargs="+", required=True)
    s.add_argument("--t-end", type=float, default=None, help="horizon (default integration.t_end)")
    s.add_argument("--jobs", type=int, default=None)
    v = sub.add_parser("validate", help="certificate-style report of the standing conditions")
    v.add_argument("config")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if getattr(args, "jobs", None):
        cfg.jobs = args.jobs

    if args.verb == "run":
        out = run_experiment(cfg)
        for p in out.problems:
            print(f"config: {p}", file=sys.stderr)
        for r in out.results:
            s = r.summary
            line = f"{r.system:14s} {r.status:9s}"
            if s:
                line += (f" t={s['final_time']:.4g} |x-x*|={s['final_distance']:.3e}"
                         f" max|u|={s['max_control']:.3e}")
            if r.reason:
                line += f" ({r.reason})"
            print(line)
        if out.summary_path:
            print(f"summary: {out.summary_path}")
        return out.exit_code

    if args.verb == "sweep":
        code, rows = sweep_omega(cfg, args.omegas, args.t_end)
        if code == EXIT_INVALID:
            for r in rows:
                print(f"config: {r['problem']}", file=sys.stderr)
            return code
        print(" ".join(f"{c:>14s}" for c in SWEEP_COLUMNS))
        for r in rows:
            print(" ".join(f"{r[c]:>14.6g}" if isinstance(r[c], (int, float)) and r[c] is not None
                           else f"{str(r[c]):>14s}" for c in SWEEP_COLUMNS))
        return code

    rep = validate_conditions(cfg)
    print(rep.text())
    return EXIT_OK if rep.passed else EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
