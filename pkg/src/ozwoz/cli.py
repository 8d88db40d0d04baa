"""Command-line entry point: serve, pipeline check, export, analyze."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .analysis import extract_turns, session_report, turns_to_csv
from .errors import OzwozError
from .model import canonical_json
from .pipeline import PipelineConfig, check_report
from .server import OzwozServer
from .session import read_log


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ozwoz",
                                     description="Wizard-of-Oz prototyping server")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the experiment server")
    serve.add_argument("--port", type=int, default=8700)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--data-dir", required=True)
    serve.add_argument("--ui-dir", default=None,
                       help="directory with the built wizard/participant consoles")
    serve.add_argument("--ping-interval", type=float, default=20.0,
                       help="seconds between channel heartbeat pings")
    serve.add_argument("--disconnect-grace", type=float, default=60.0,
                       help="seconds before a participant disconnect ends the session")

    pipeline = sub.add_parser("pipeline", help="pipeline configuration tools")
    pipeline_sub = pipeline.add_subparsers(dest="pipeline_command", required=True)
    check = pipeline_sub.add_parser(
        "check", help="lint an experiment or pipeline JSON file")
    check.add_argument("file")

    export = sub.add_parser("export", help="export one session log")
    export.add_argument("session_id")
    export.add_argument("--format", choices=["csv", "ndjson"], default="ndjson")
    export.add_argument("--data-dir", required=True)
    export.add_argument("--out", default=None, help="output file (default stdout)")

    analyze = sub.add_parser("analyze", help="wizard-performance metrics per session")
    analyze.add_argument("session_ids", nargs="+", metavar="session-id")
    analyze.add_argument("--data-dir", required=True)
    analyze.add_argument("--csv", default=None, help="also write the turn table here")
    return parser


def _load_pipeline(path: str) -> PipelineConfig:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(doc, dict) and "pipeline" in doc and doc["pipeline"] is not None:
        doc = doc["pipeline"]
    return PipelineConfig.from_dict(doc)


def cmd_serve(args) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    server = OzwozServer(args.data_dir, host=args.host, port=args.port,
                         ping_interval=args.ping_interval,
                         disconnect_grace=args.disconnect_grace, ui_dir=args.ui_dir)
    print(f"ozwoz server listening on http://{server.host}:{server.port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def cmd_pipeline_check(args) -> int:
    config = _load_pipeline(args.file)
    lines = check_report(config)
    for line in lines:
        print(line)
    return 1 if any(line.startswith("VIOLATION") for line in lines) else 0


def _session_log(data_dir: str, session_id: str) -> Path:
    path = Path(data_dir) / "sessions" / f"{session_id}.ndjson"
    if not path.exists():
        raise OzwozError(f"no log for session {session_id!r} under {data_dir}")
    return path


def cmd_export(args) -> int:
    path = _session_log(args.data_dir, args.session_id)
    if args.format == "ndjson":
        content = path.read_text(encoding="utf-8")
    else:
        turns = extract_turns(read_log(path))
        content = turns_to_csv(turns)
    if args.out:
        Path(args.out).write_text(content, encoding="utf-8")
    else:
        sys.stdout.write(content)
    return 0


def cmd_analyze(args) -> int:
    reports = {}
    all_turns = []
    for sid in args.session_ids:
        turns = extract_turns(read_log(_session_log(args.data_dir, sid)))
        all_turns.extend(turns)
        reports[sid] = session_report(turns)
    out = {"sessions": reports, "aggregate": session_report(all_turns)}
    print(canonical_json(out))
    if args.csv:
        Path(args.csv).write_text(turns_to_csv(all_turns), encoding="utf-8")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            return cmd_serve(args)
        if args.command == "pipeline":
            return cmd_pipeline_check(args)
        if args.command == "export":
            return cmd_export(args)
        if args.command == "analyze":
            return cmd_analyze(args)
    except OzwozError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
