"""Command-line interface for the certification suite.

``certify`` runs the full pipeline and writes the label plus its audit
artifacts; ``profile``, ``check``, and ``render`` expose the individual
stages; ``db validate`` and ``components list`` work on knowledge-database
files.  Exit code 0 means a label was emitted (even with failed checks);
nonzero means the pipeline aborted.
"""
from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from pathlib import Path

import numpy as np

from .checks import (
    CheckConfig,
    convergence_check,
    distribution_recovery_check,
    merge_check_results,
)
from .knowledge import (
    ConfigurationError,
    MethodConfiguration,
    SchemaError,
    default_knowledge_db,
    load_knowledge_db,
)
from .label import SuiteParams, certify_with_artifacts
from .mrf import DEFAULT_ENUMERATION_CAP
from .profiling import (
    DEFAULT_POWER_WATTS,
    generate_profiling_suite,
    measurements_to_csv,
    run_scaling_experiment,
)
from .render import parse_json, render_json, render_svg, render_text
from .training import gradient_descent_fit
from .mrf import DiscreteMRF

LABEL_FILES = {"json": "label.json", "text": "label.txt", "svg": "label.svg"}


def _load_db(path: str | None):
    if path is None:
        return default_knowledge_db()
    return load_knowledge_db(path)


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--db", default=None, help="knowledge database JSON (default: bundled)")
    p.add_argument("--method", default="mrf")
    p.add_argument("--loss", default="likelihood")
    p.add_argument("--optimizer", default="gd")
    p.add_argument("--inference", default="jt", choices=("jt", "lbp"))


def _add_suite_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--max-side", type=int, default=8)
    p.add_argument("--samples", type=int, default=1000,
                   help="Gibbs samples per suite size")
    p.add_argument("--repeats", type=int, default=10)
    # flags win over the CARELABEL_POWER_WATTS / CARELABEL_METER env vars
    p.add_argument("--power-watts", type=float,
                   default=float(os.environ.get("CARELABEL_POWER_WATTS",
                                                DEFAULT_POWER_WATTS)))
    p.add_argument("--meter", choices=("model", "rapl", "auto"),
                   default=os.environ.get("CARELABEL_METER", "model"),
                   help="energy meter (auto picks rapl when available)")


def _meter_spec(name: str):
    return None if name == "auto" else name


def _write(out_dir: Path, name: str, text: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(text)


def _cmd_certify(args) -> int:
    db = _load_db(args.db)
    config = MethodConfiguration(args.method, args.loss, args.optimizer, args.inference)
    suite_params = SuiteParams(seed=args.seed, max_side=args.max_side,
                               samples_per_size=args.samples, repeats=args.repeats)
    stamp = None
    if args.timestamp:
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    label, scaling = certify_with_artifacts(
        config, db, suite_params, CheckConfig(), meter=_meter_spec(args.meter),
        power_watts=args.power_watts, timestamp=stamp)
    out = Path(args.out)
    formats = [f.strip() for f in args.format.split(",") if f.strip()]
    for fmt in formats:
        if fmt not in LABEL_FILES:
            print(f"unknown format {fmt!r}", file=sys.stderr)
            return 2
    renderers = {"json": render_json, "text": render_text, "svg": render_svg}
    for fmt in formats:
        _write(out, LABEL_FILES[fmt], renderers[fmt](label))
    _write(out, "measurements.csv", measurements_to_csv(scaling))
    _write(out, "checks.json",
           json.dumps({"checks": label.audit["checks"]}, sort_keys=True, indent=2) + "\n")
    marks = label.implementation["checkmarks"]
    print(f"label written to {out} "
          f"(reliability={marks['reliability']}, runtime={marks['runtime']}, "
          f"memory={marks['memory']})")
    return 0


def _cmd_profile(args) -> int:
    suite = generate_profiling_suite(args.seed, max_side=args.max_side,
                                     samples_per_size=args.samples)
    results = run_scaling_experiment(
        suite, args.inference, repeats=args.repeats, meter=_meter_spec(args.meter),
        power_watts=args.power_watts,
        lbp_fixed_budget=(args.inference == "lbp"))
    out = Path(args.out)
    _write(out, "measurements.csv", measurements_to_csv(results))
    for r in results:
        if r.feasible:
            print(f"side {r.side}: runtime {r.measurement.runtime_seconds:.6g} s, "
                  f"cells {r.measurement.analytic_table_cells}")
        else:
            print(f"side {r.side}: infeasible (clique table cap)")
    return 0


def _cmd_check(args) -> int:
    config = CheckConfig()
    suite = generate_profiling_suite(args.seed, max_side=args.max_side,
                                     samples_per_size=args.samples)
    recovery = []
    convergence = []
    trace_csv = None
    for entry in suite.entries:
        ds = f"grid-{entry.side}x{entry.side}"
        if entry.mrf.graph.state_space_size() <= DEFAULT_ENUMERATION_CAP:
            recovery.append(distribution_recovery_check(
                entry.mrf, args.inference, config, dataset_id=ds))
        convergence.append(convergence_check(
            args.inference, entry.mrf.graph, entry.samples, config, dataset_id=ds))
    largest = suite.entries[-1]
    zero = DiscreteMRF(
        largest.mrf.graph,
        [np.zeros(c) for c in largest.mrf.graph.cardinalities],
        [np.zeros((largest.mrf.graph.cardinalities[s], largest.mrf.graph.cardinalities[t]))
         for s, t in largest.mrf.graph.edges])
    _, trace = gradient_descent_fit(
        zero, largest.samples, step=config.fit_step,
        max_iterations=config.fit_budget,
        grad_tolerance=config.grad_norm_threshold, backend=args.inference)
    trace_csv = trace.to_csv()
    checks = [
        merge_check_results("distribution_recovery", recovery).to_dict()
        if recovery else {"check_id": "distribution_recovery", "passed": False,
                          "note": "no dataset under the enumeration cap"},
        merge_check_results("convergence", convergence).to_dict(),
    ]
    out = Path(args.out)
    _write(out, "checks.json", json.dumps({"checks": checks}, sort_keys=True, indent=2) + "\n")
    _write(out, "fit_trace.csv", trace_csv)
    for c in checks:
        print(f"{c['check_id']}: {'pass' if c.get('passed') else 'fail'}")
    return 0


def _cmd_render(args) -> int:
    label = parse_json(Path(args.label).read_text())
    out = Path(args.out)
    renderers = {"json": render_json, "text": render_text, "svg": render_svg}
    for fmt in [f.strip() for f in args.format.split(",") if f.strip()]:
        if fmt not in renderers:
            print(f"unknown format {fmt!r}", file=sys.stderr)
            return 2
        _write(out, LABEL_FILES[fmt], renderers[fmt](label))
    print(f"rendered to {out}")
    return 0


def _cmd_db_validate(args) -> int:
    try:
        db = _load_db(args.db)
    except (SchemaError, FileNotFoundError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    print(f"valid (schema_version {db.schema_version}, "
          f"{len(db.components)} components, {len(db.badges)} badges)")
    return 0


def _cmd_components_list(args) -> int:
    db = _load_db(args.db)
    rows = [("id", "kind", "name", "ratings")]
    for cid in sorted(db.components):
        comp = db.components[cid]
        ratings = "".join(
            (comp.ratings[c].value if comp.ratings[c].value != "neutral" else "-")
            for c in ("expressivity", "usability", "reliability", "runtime", "memory"))
        rows.append((cid, comp.kind, comp.name, ratings))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    for r in rows:
        print("  ".join(val.ljust(w) for val, w in zip(r, widths)).rstrip())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carelabel",
        description="Certify MRF inference configurations and emit care labels.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", help="run the full pipeline and write a label")
    _add_config_args(p)
    _add_suite_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", default="json,text,svg")
    p.add_argument("--timestamp", action="store_true",
                   help="include a wall-clock timestamp in the audit")
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("profile", help="run the scaling experiment only")
    p.add_argument("--inference", default="jt", choices=("jt", "lbp"))
    _add_suite_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_profile)

    p = sub.add_parser("check", help="run the reliability bound checks only")
    p.add_argument("--inference", default="jt", choices=("jt", "lbp"))
    _add_suite_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("render", help="re-render an existing label.json")
    p.add_argument("--label", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", default="json,text,svg")
    p.set_defaults(func=_cmd_render)

    p_db = sub.add_parser("db", help="knowledge database utilities")
    db_sub = p_db.add_subparsers(dest="db_command", required=True)
    p = db_sub.add_parser("validate", help="schema-validate a database file")
    p.add_argument("--db", default=None)
    p.set_defaults(func=_cmd_db_validate)

    p_comp = sub.add_parser("components", help="inspect database components")
    comp_sub = p_comp.add_subparsers(dest="components_command", required=True)
    p = comp_sub.add_parser("list", help="list components and their ratings")
    p.add_argument("--db", default=None)
    p.set_defaults(func=_cmd_components_list)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
