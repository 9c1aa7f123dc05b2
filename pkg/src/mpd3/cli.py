"""Command line interface: ``mpd3 run|validate|compare|audit``."""

import argparse
import logging
import sys
from pathlib import Path

from .errors import MPD3Error
from .harness import run
from .oracle import audit_trace
from .scenario import load_scenario
from .traces import read_trace, render_density, summarize, write_snapshot, write_trace

log = logging.getLogger("mpd3")


def _cmd_run(args):
    scenario = load_scenario(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def save(state):
        write_snapshot(state, out / "snapshots" / f"step_{state.step:06d}.csv")

    result = run(scenario, mode=args.mode, seed=args.seed, snapshot_every=args.snapshot_every,
                 snapshot_callback=save)
    write_trace(result.trace, out / "trace.csv")
    write_snapshot(result.state, out / "final_snapshot.csv")
    render_density(result.state, out / "density.ppm")
    s = summarize(result.trace)
    print(f"{scenario.name}: {s['steps']} steps, settled in {result.settle_iterations} sweeps, "
          f"mean elapsed/step {s['mean_elapsed']:.6g}, final imbalance {s['final_imbalance']:.4f}")
    print(f"wrote {out / 'trace.csv'}")
    return 0


def _cmd_validate(args):
    scenario = load_scenario(args.scenario)
    particles = scenario.build_particles()
    print(f"{scenario.name}: ok ({len(particles)} particles, {scenario.n_workers} workers, "
          f"{scenario.n_steps} steps, mode {scenario.mode})")
    return 0


def _cmd_compare(args):
    a, b = summarize(read_trace(args.trace_a)), summarize(read_trace(args.trace_b))
    print("trace,steps,mean_elapsed,final_imbalance")
    for name, s in ((args.trace_a, a), (args.trace_b, b)):
        print(f"{name},{s['steps']},{s['mean_elapsed']!r},{s['final_imbalance']!r}")
    if a["mean_elapsed"] > 0:
        print(f"elapsed ratio B/A: {b['mean_elapsed'] / a['mean_elapsed']:.4f}")
    return 0


def _cmd_audit(args):
    report = audit_trace(args.trace)
    print(report)
    return 0 if report.passed else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="mpd3", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario and write its trace")
    p.add_argument("scenario")
    p.add_argument("--mode", choices=("mpd3", "static", "frozen"))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out")
    p.add_argument("--snapshot-every", type=int, default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("compare", help="summarize two traces side by side")
    p.add_argument("trace_a")
    p.add_argument("trace_b")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("audit", help="check a trace against its invariants")
    p.add_argument("trace")
    p.set_defaults(func=_cmd_audit)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except MPD3Error as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
