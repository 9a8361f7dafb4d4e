"""Command-line front end: run experiments, verify acceptance suites, list kinds.

Exit status: 0 success, 1 a verify suite failed, 2 invalid configuration,
3 numerical failure (an error JSON is printed to stderr and written to the
output directory).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._rng import THREADS_ENV
from .errors import ConfigError, PhotocorrError

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _threads(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("--threads must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="photocorr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("--config", required=True, help="path to the experiment config (JSON)")
    run.add_argument("--seed", type=int, help="override the master seed of the config")
    run.add_argument("--threads", type=_threads,
                     help=f"worker threads (default: ${THREADS_ENV} or 1)")
    run.add_argument("--out-dir", help="output directory (default: config output.dir or results/<name>)")

    ver = sub.add_parser("verify", help="run an acceptance suite and print pass/fail per criterion")
    ver.add_argument("suite", nargs="?", default="fast", help="suite name (see list-experiments)")
    ver.add_argument("--threads", type=_threads, help="worker threads")
    ver.add_argument("--json", dest="json_out", help="also write the report as JSON to this path")

    sub.add_parser("list-experiments", help="list experiment kinds, shipped configs and verify suites")
    return parser


def _error_json(kind: str, exc: Exception, **extra) -> str:
    payload = {"status": "error", "error": kind, "type": type(exc).__name__, "message": str(exc), **extra}
    return json.dumps(payload, sort_keys=True)


def _cmd_run(args) -> int:
    from .experiments import load_config, run_experiment

    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as exc:
        print(f"photocorr: invalid config: {exc}", file=sys.stderr)
        print(_error_json("config", exc, path=exc.path), file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = run_experiment(cfg, args.out_dir, args.threads)
    except ConfigError as exc:
        print(f"photocorr: invalid config: {exc}", file=sys.stderr)
        print(_error_json("config", exc, path=exc.path), file=sys.stderr)
        return EXIT_CONFIG
    except (PhotocorrError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        text = _error_json("numerical", exc, experiment=cfg["experiment"])
        print(text, file=sys.stderr)
        out = Path(args.out_dir) if args.out_dir else Path(cfg.get("output", {}).get(
            "dir", Path("results") / cfg.get("name", cfg["experiment"])))
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(text + "\n", encoding="utf-8")
        return EXIT_NUMERIC
    out = Path(args.out_dir) if args.out_dir else None
    print(f"{summary['name']}: wrote {len(summary['files']) + 1} files"
          + (f" to {out}" if out else ""))
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .acceptance import SUITES, run_suite

    if args.suite not in SUITES:
        print(f"photocorr: unknown suite {args.suite!r}; choose from {', '.join(sorted(SUITES))}",
              file=sys.stderr)
        return EXIT_CONFIG
    results = run_suite(args.suite, args.threads)
    for res in results:
        print(res.report())
    ok = all(r.passed for r in results)
    print(f"suite {args.suite}: {sum(r.passed for r in results)}/{len(results)} criteria passed")
    if args.json_out:
        from .experiments import _jsonable

        data = [{"criterion": r.number, "title": r.title, "passed": r.passed,
                 "checks": [{"name": c.name, "passed": c.passed, "measured": _jsonable(c.measured),
                             "expected": _jsonable(c.expected), "tolerance": _jsonable(c.tolerance),
                             "note": c.note} for c in r.checks]} for r in results]
        Path(args.json_out).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK if ok else EXIT_FAILED


def _cmd_list(args) -> int:
    from .acceptance import SUITES
    from .experiments import KINDS

    print("experiment kinds:")
    for kind, text in KINDS.items():
        print(f"  {kind:16s} {text}")
    configs = sorted(Path("configs").glob("*.json"))
    if configs:
        print("configs:")
        for path in configs:
            try:
                cfg = json.loads(path.read_text(encoding="utf-8"))
                print(f"  {str(path):32s} {cfg.get('experiment', '?'):16s} {cfg.get('description', '')}")
            except json.JSONDecodeError:
                print(f"  {str(path):32s} (unreadable)")
    print("verify suites:")
    print("  " + ", ".join(sorted(SUITES)))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "verify": _cmd_verify, "list-experiments": _cmd_list}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
