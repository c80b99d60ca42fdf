"""Command-line front end.

run    execute a pipeline document over CSV data and write every sink,
       the dashboard, and the run audit into an output directory
check  validate a pipeline document without running it
fuzz   drive randomized equivalence checks of the query compiler

Exit codes: run 0 ok / 2 bad input or wiring / 3 conservation broken;
check 0 ok / 2 violations; fuzz 0 ok / 1 divergence found.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .audit import audit_document, conservation_check, dashboard_document, render_dashboard
from .csvio import load_sidecar, read_table, table_schema, write_csv, write_text
from .errors import TallyError
from .fuzz import run_fuzz
from .pipeline_doc import build_graph, load_doc, source_files


def _out(msg: str) -> None:
    sys.stdout.write(msg + "\n")


def _err(msg: str) -> None:
    sys.stderr.write(msg + "\n")


def _load_sources(doc: dict, data_dir: str):
    """Read every source CSV; pids run in one sequence across sources."""
    schemas: dict = {}
    inputs: dict = {}
    ingest_errors: dict = {}
    pid = 1
    for name, fname in source_files(doc).items():
        csv_path = os.path.join(data_dir, fname)
        sidecar = csv_path + ".yaml"
        if not os.path.exists(csv_path):
            raise FileNotFoundError(f"source {name!r}: no such file {csv_path}")
        if not os.path.exists(sidecar):
            raise FileNotFoundError(f"source {name!r}: no column description {sidecar}")
        cols = load_sidecar(sidecar)
        schemas[name] = table_schema(cols)
        rel, bad, pid = read_table(csv_path, cols, first_pid=pid, name=name)
        inputs[name] = rel
        if len(bad):
            ingest_errors[name] = bad
    return schemas, inputs, ingest_errors


def cmd_run(args) -> int:
    try:
        doc = load_doc(args.pipeline)
        schemas, inputs, ingest_errors = _load_sources(doc, args.data)
        graph = build_graph(doc, schemas)
    except (OSError, ValueError, TallyError) as exc:
        _err(f"run: {exc}")
        return 2

    violations = graph.validate()
    if violations:
        for v in violations:
            _err(f"run: {v.kind} at {v.where}: {v.detail}")
        return 2

    try:
        result = graph.run(inputs)
    except TallyError as exc:
        _err(f"run: {exc}")
        return 2

    os.makedirs(args.out, exist_ok=True)
    for name, rel in sorted(result.sinks.items()):
        write_csv(os.path.join(args.out, f"{name}.csv"), rel)
    for name, rel in sorted(ingest_errors.items()):
        write_csv(os.path.join(args.out, f"{name}_ingest_errors.csv"), rel)

    dash = dashboard_document(graph, result)
    text = render_dashboard(dash)
    write_text(os.path.join(args.out, "dashboard.txt"), text)
    write_text(os.path.join(args.out, "dashboard.json"),
               json.dumps(dash, indent=2, sort_keys=True) + "\n")
    write_text(os.path.join(args.out, "audit.json"),
               json.dumps(audit_document(result.audit), indent=2, sort_keys=True) + "\n")

    if args.format == "structured":
        _out(json.dumps(dash, indent=2, sort_keys=True))
    else:
        _out(text.rstrip("\n"))

    report = conservation_check(result.audit)
    if not report.ok:
        for c in report.checks:
            if not c.ok:
                _err(f"run: conservation broken: {c.name}: {c.detail}")
        return 3
    return 0


def cmd_check(args) -> int:
    try:
        doc = load_doc(args.pipeline)
        if args.data:
            schemas = {}
            for name, fname in source_files(doc).items():
                sidecar = os.path.join(args.data, fname) + ".yaml"
                if not os.path.exists(sidecar):
                    raise FileNotFoundError(
                        f"source {name!r}: no column description {sidecar}")
                schemas[name] = table_schema(load_sidecar(sidecar))
        else:
            raise ValueError("check needs --data to find the column descriptions")
        graph = build_graph(doc, schemas)
    except (OSError, ValueError, TallyError) as exc:
        _err(f"check: {exc}")
        return 2
    violations = graph.validate()
    for v in violations:
        _out(f"{v.kind} at {v.where}: {v.detail}")
    if violations:
        return 2
    _out(f"check: {graph.name}: graph is runnable "
         f"({len(graph.nodes)} stages, {len(graph.sinks)} sinks)")
    return 0


def cmd_fuzz(args) -> int:
    report = run_fuzz(args.seed, args.iterations)
    if args.format == "structured":
        _out(json.dumps({
            "iterations": report.iterations,
            "failures": report.failures,
            "first_failure": report.first_failure,
            "kinds_seen": list(report.kinds_seen),
        }, indent=2, sort_keys=True))
    else:
        _out(f"fuzz: {report.iterations} iterations, seed {args.seed}, "
             f"{report.failures} failures")
        _out(f"fuzz: node kinds seen: {', '.join(report.kinds_seen)}")
        if report.first_failure:
            _out(f"fuzz: first failure:\n{report.first_failure}")
    return 1 if report.failures else 0


def main(argv=None) -> int:
    p = argparse.ArgumentParser(
        prog="tallyflow",
        description="Lossless data pipelines with conservation accounting.")
    sub = p.add_subparsers(dest="command", required=True)

    rp = sub.add_parser("run", help="execute a pipeline over CSV data")
    rp.add_argument("pipeline", help="pipeline description document")
    rp.add_argument("--data", required=True, help="directory with source CSVs")
    rp.add_argument("--out", required=True, help="directory for sinks and reports")
    rp.add_argument("--format", choices=("text", "structured"), default="text")
    rp.set_defaults(fn=cmd_run)

    cp = sub.add_parser("check", help="validate a pipeline document")
    cp.add_argument("pipeline")
    cp.add_argument("--data", help="directory with the column descriptions")
    cp.set_defaults(fn=cmd_check)

    fp = sub.add_parser("fuzz", help="randomized compiler cross-checks")
    fp.add_argument("--seed", type=int, default=0)
    fp.add_argument("--iterations", type=int, default=1000)
    fp.add_argument("--format", choices=("text", "structured"), default="text")
    fp.set_defaults(fn=cmd_fuzz)

    args = p.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
