"""Command-line interface: run, sweep, plotdata, diagnose."""

from __future__ import annotations

import argparse
import sys

from .errors import PhacklabError
from .runner import PLOT_KINDS, diagnose, emit_plotdata, run_policy_sweep, run_scenario


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phacklab",
        description="Simulate and diagnose sequential research with p-hacking distortion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario ensemble end to end")
    run.add_argument("config", help="scenario TOML file")
    run.add_argument("--out", default=None, help="run directory (default: runs/<hash>_<ts>)")
    run.add_argument("--workers", type=int, default=1, help="worker processes")
    run.add_argument("--seed-offset", type=int, default=0, help="shift trajectory indices")

    sweep = sub.add_parser("sweep", help="tabulate the optimal project over a belief grid")
    sweep.add_argument("config", help="scenario TOML file")
    sweep.add_argument("--out", default=None)

    plot = sub.add_parser("plotdata", help="emit tidy CSVs for external plotting")
    plot.add_argument("manifest", help="manifest.json of a run or sweep (or its directory)")
    plot.add_argument("--kind", required=True, choices=PLOT_KINDS)
    plot.add_argument("--out", default=None, help="output CSV path")

    dia = sub.add_parser("diagnose", help="recompute diagnostics from stored trajectories")
    dia.add_argument("manifest", help="manifest.json of a run (or its directory)")
    dia.add_argument("--out", default=None, help="output JSON path")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            manifest, run_dir = run_scenario(
                args.config, out_dir=args.out, workers=args.workers, seed_offset=args.seed_offset
            )
            agg = manifest["aggregates"]
            print(
                f"run complete: {len(manifest['seed_list'])} trajectories -> {run_dir}\n"
                f"  learned fraction {agg['learned_fraction']:.4f}, "
                f"mean terminal log-odds {agg['mean_lambda_end']:.3f}"
            )
            acceptance = manifest["acceptance"]
            if acceptance["declared"]:
                for check in acceptance["checks"]:
                    state = "ok" if check["passed"] else "FAILED"
                    print(
                        f"  acceptance {check['name']}: value {check['value']:.4f} "
                        f"vs bound {check['bound']:.4f} -> {state}"
                    )
                if not acceptance["passed"]:
                    return 1
        elif args.command == "sweep":
            manifest, run_dir = run_policy_sweep(args.config, out_dir=args.out)
            print(f"sweep complete: {len(manifest['u_grid'])} beliefs -> {run_dir}")
            for summary in manifest["summaries"]:
                print(
                    f"  {summary['payoff']}: l* in [{summary['l_star_min']:.4g}, "
                    f"{summary['l_star_max']:.4g}], "
                    f"constricted={summary['constricted_heuristic']}"
                )
        elif args.command == "plotdata":
            out = emit_plotdata(args.manifest, args.kind, args.out)
            print(f"wrote {out}")
        else:
            _, out = diagnose(args.manifest, args.out)
            print(f"wrote {out}")
    except PhacklabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
