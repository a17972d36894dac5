"""Command line entry point: ``hjblab run|check|emit-plots``."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, HJBLabError, MissingReportError
from .harness import OUT_ENV, emit_plot_data, load_config, resolve_out_dir, run


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hjblab", description="Run HJB/Kolmogorov experiments from TOML configs.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute a scenario and write artifacts")
    r.add_argument("config")
    r.add_argument("--seed", type=int, default=None, help="override the master seed")
    r.add_argument("--out", default=None, help=f"output directory (default: config 'out', else ${OUT_ENV}/<name>)")
    r.add_argument("--workers", type=int, default=None, help="worker threads for independent jobs")

    c = sub.add_parser("check", help="validate a config without running it")
    c.add_argument("config")

    e = sub.add_parser("emit-plots", help="flatten report.json files into a long-format CSV")
    e.add_argument("report_dir")
    e.add_argument("--out", default=None, help="CSV path (default: <report_dir>/plot_data.csv)")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "check":
            cfg = load_config(args.config)
            print(f"ok: {cfg.name} ({cfg.scenario}) config_hash={cfg.config_hash()}")
            return 0
        if args.command == "run":
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg = cfg.with_seed(args.seed)
            if args.workers is not None:
                cfg.workers = max(1, args.workers)
            res = run(cfg, resolve_out_dir(cfg, args.out))
            print(json.dumps({"out": str(res.out_dir), "files": res.manifest["files"]}, indent=2))
            return res.status
        path = emit_plot_data(args.report_dir, args.out)
        print(path)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MissingReportError as exc:
        print(f"missing report: {exc}", file=sys.stderr)
        return 3
    except HJBLabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
