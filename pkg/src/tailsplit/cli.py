"""Command line: run studies, tabulate robustness bounds, serve campaigns.

Subcommands
-----------
simulate
    Run a Monte Carlo study (a JSON file mirroring StudySpec, or the name of
    a registered benchmark) and write stats.csv, replicas.jsonl and a
    rendered table per study.
robustness
    Print CSV grids of the misspecification bounds.
serve
    Start the campaign HTTP service on a data directory.
campaign
    Offline tools on campaign logs (currently: replay).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .distributions import GpdParams
from .robustness import NeighborhoodSpec, conditional_bounds, relative_error_bound
from .simulation import StudySpec, emit_table, run_study
from .studies import DEFAULT_SEED, STUDIES, build_study

__all__ = ["main"]


def _load_specs(study: str) -> tuple[list, int]:
    if os.path.exists(study):
        with open(study, encoding="utf-8") as fh:
            doc = json.load(fh)
        docs = doc if isinstance(doc, list) else [doc]
        return [StudySpec(**d) for d in docs], DEFAULT_SEED
    if study in STUDIES:
        return build_study(study)
    raise SystemExit(
        f"'{study}' is neither a file nor a known study "
        f"(known: {', '.join(sorted(STUDIES))})")


def _cmd_simulate(args) -> int:
    specs, seed = _load_specs(args.study)
    if args.seed is not None:
        seed = args.seed
    os.makedirs(args.out, exist_ok=True)
    for spec in specs:
        if args.replicas is not None:
            spec = replace(spec, replicas=args.replicas)
        result = run_study(spec, seed=seed)
        out_dir = os.path.join(args.out, spec.name)
        os.makedirs(out_dir, exist_ok=True)

        with open(os.path.join(out_dir, "stats.csv"), "w",
                  encoding="utf-8") as fh:
            fh.write("metric,n,mean,std,min,q25,median,q75,max,n_flagged\n")
            for name, st in sorted(result.metrics.items()):
                fh.write(f"{name},{st.n},{st.mean:.10g},{st.std:.10g},"
                         f"{st.minimum:.10g},{st.q25:.10g},{st.median:.10g},"
                         f"{st.q75:.10g},{st.maximum:.10g},{st.n_flagged}\n")

        with open(os.path.join(out_dir, "replicas.jsonl"), "w",
                  encoding="utf-8") as fh:
            for rec in result.replicas:
                fh.write(json.dumps(rec, sort_keys=True,
                                    separators=(",", ":")) + "\n")

        rows = [(name, st) for name, st in sorted(result.metrics.items())]
        _, text = emit_table(rows, layout=args.layout)
        with open(os.path.join(out_dir, "table.txt"), "w",
                  encoding="utf-8") as fh:
            fh.write(f"{spec.name}  (replicas={spec.replicas}, seed={seed})\n")
            fh.write(text)
        print(f"{spec.name}: wrote {out_dir}/", file=sys.stderr)
    return 0


def _parse_grid(text: str) -> np.ndarray:
    """A number, or an inclusive lo:hi:n grid."""
    if ":" in text:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    return np.array([float(text)])


def _cmd_robustness(args) -> int:
    spec = NeighborhoodSpec(
        base=GpdParams(args.c, args.a), epsilon=args.eps,
        weight=(args.w, args.kappa), delta_target=args.delta)
    s_grid = _parse_grid(args.s)
    x_grid = _parse_grid(args.x)
    print("s,x,lower,upper,first_order_bound")
    for s in s_grid:
        for x in x_grid:
            if x < s:
                continue
            lo, hi = conditional_bounds(spec, float(s), float(x))
            u = relative_error_bound(spec, float(s), float(x))
            print(f"{s:.10g},{x:.10g},{lo:.10g},{hi:.10g},{u:.10g}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .campaign import CampaignStore
    from .service import create_app

    store = CampaignStore(args.data_dir)
    app = create_app(store)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def _cmd_campaign_replay(args) -> int:
    from .campaign import CampaignStore, session_report

    events = CampaignStore.read_events(args.log)
    session = CampaignStore.replay_events(events)
    doc = session_report(session) if args.report else session.to_dict()
    print(json.dumps(doc, sort_keys=True, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tailsplit", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a Monte Carlo study")
    p.add_argument("--study", required=True,
                   help="JSON spec file or registered study name")
    p.add_argument("--seed", type=int, default=None,
                   help=f"RNG seed (default: study's pinned seed, else {DEFAULT_SEED})")
    p.add_argument("--replicas", type=int, default=None,
                   help="override the spec's replica count")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--layout", default="quartiles",
                   choices=("mean-std", "quartiles"),
                   help="rendered table layout")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("robustness", help="misspecification bound grids")
    rsub = p.add_subparsers(dest="subcommand", required=True)
    b = rsub.add_parser("bounds", help="conditional probability bounds as CSV")
    b.add_argument("--c", type=float, required=True, help="GPD shape")
    b.add_argument("--a", type=float, required=True, help="GPD scale")
    b.add_argument("--eps", type=float, required=True,
                   help="neighborhood radius")
    b.add_argument("--w", default="power", choices=("power", "exp"),
                   help="weight family")
    b.add_argument("--kappa", type=float, default=1.0, help="weight exponent")
    b.add_argument("--delta", type=float, default=0.1,
                   help="relative-error budget")
    b.add_argument("--s", required=True, help="threshold: value or lo:hi:n")
    b.add_argument("--x", required=True, help="target level: value or lo:hi:n")
    b.set_defaults(fn=_cmd_robustness)

    p = sub.add_parser("serve", help="run the campaign HTTP service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-dir", default="campaign-data",
                   help="directory for session event logs")
    p.set_defaults(fn=_cmd_serve)

    p = sub.add_parser("campaign", help="offline campaign-log tools")
    csub = p.add_subparsers(dest="subcommand", required=True)
    r = csub.add_parser("replay", help="reconstruct a session from its log")
    r.add_argument("log", help="path to a session .jsonl event log")
    r.add_argument("--report", action="store_true",
                   help="print the full report instead of the session")
    r.set_defaults(fn=_cmd_campaign_replay)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
