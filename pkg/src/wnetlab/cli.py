"""Command-line entry point: validate, plan, compile, run, report, cost, sweep.

Exit codes: 0 success, 2 configuration error, 3 runtime error, 4 I/O error.
Machine-readable output goes to files under the output directory; stderr
carries stage-labelled messages.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from . import config as cfg
from .dists import DistError
from .emucore import EmulationConfigError
from .linkevents import EelError
from .orchestrator import (DEFAULT_HOST_MODEL, HOST_MODELS, Pricing, StageError,
                           compile_external, estimate_cost, parse_range,
                           prepare, run_scenario, sweep)
from .topology import TopologyError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4
_CONFIG_ERRORS = (cfg.ConfigError, DistError, TopologyError, EelError, EmulationConfigError)

log = logging.getLogger("wnetlab")


def _exit_code(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, StageError) else exc
    if isinstance(cause, _CONFIG_ERRORS):
        return EXIT_CONFIG
    if isinstance(cause, OSError):
        return EXIT_IO
    return EXIT_RUNTIME


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("MENES_OUT") or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _say(args, text: str) -> None:
    if not args.quiet:
        print(text)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


def _table(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rows, sort_keys=True, indent=2) + "\n"
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def _overrides(args) -> dict:
    return {"seed": args.seed, "duration": args.duration}


# ----------------------------------------------------------------- commands


def cmd_validate(args) -> int:
    prep = prepare(args.config, _overrides(args), args.host_model)
    _say(args, f"ok: {prep.scenario.n_nodes} nodes, {len(prep.scenario.network.links)} links, "
               f"{len(prep.spec.traffic)} flows")
    return EXIT_OK


def cmd_plan(args) -> int:
    prep = prepare(args.config, _overrides(args), args.host_model)
    out = _out_dir(args)
    _write(out / "plan.json", json.dumps(prep.plan.to_dict(), sort_keys=True, indent=2) + "\n")
    _say(args, f"{prep.plan.host_model}: {prep.plan.hosts} host(s) for {prep.plan.n_nodes} nodes")
    return EXIT_OK


def cmd_compile(args) -> int:
    prep = prepare(args.config, _overrides(args), args.host_model)
    bundle = compile_external(prep.scenario, prep.events)
    bundle.write(_out_dir(args) / "bundle")
    _say(args, f"bundle: {len(bundle.files)} files, manifest {bundle.manifest_hash[:12]}")
    return EXIT_OK


def cmd_run(args) -> int:
    report = run_scenario(args.config, _out_dir(args), _overrides(args), args.host_model,
                          metrics_format=args.format)
    if report.summary is not None:
        for s in report.summary.flows.values():
            _say(args, f"flow {s.flow_id} {s.app} {s.src}->{s.dst}: sent {s.sent}, "
                       f"delivered {s.delivered}, throughput {s.throughput_bps:.0f} bit/s")
    else:
        _say(args, "compile-only backend: bundle written, no emulation")
    return EXIT_OK


def cmd_report(args) -> int:
    src = Path(args.report_dir or _out_dir(args)) / "report" / "summary.csv"
    text = src.read_text(encoding="utf-8")
    _say(args, text.rstrip("\n"))
    return EXIT_OK


def cmd_cost(args) -> int:
    prep = prepare(args.config, _overrides(args), args.host_model)
    rows = [estimate_cost(prep.plan, Pricing(env, **_pricing(args)), args.months).to_dict()
            for env in ("in-house", "cloud")]
    _write(_out_dir(args) / f"cost.{args.format}", _table(rows, args.format))
    for r in rows:
        _say(args, f"{r['environment']}: capex {r['capex']:.2f}, opex {r['opex']:.2f}, "
                   f"total {r['total']:.2f} USD")
    return EXIT_OK


def cmd_sweep(args) -> int:
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    for m in models:
        if m not in HOST_MODELS:
            raise cfg.ConfigError("E_ENUM", f"unknown host model {m!r}")
    try:
        nodes = parse_range(args.nodes)
    except ValueError as exc:
        raise cfg.ConfigError("E_RANGE", str(exc)) from None
    pricings = tuple(Pricing(env, **_pricing(args)) for env in ("in-house", "cloud"))
    hosts, costs = sweep(nodes, models, pricings, args.months)
    out = _out_dir(args)
    _write(out / f"hosts.{args.format}", _table(hosts, args.format))
    _write(out / f"cost.{args.format}", _table(costs, args.format))
    _say(args, f"sweep: {len(nodes)} sizes x {len(models)} models -> {out}")
    return EXIT_OK


def _pricing(args) -> dict:
    keys = {"unit_cost": args.unit_cost, "hourly_rate": args.hourly_rate,
            "management_per_host_month": args.mgmt_cost}
    return {k: v for k, v in keys.items() if v is not None}


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--duration", type=int, help="override the scenario duration (s)")
    common.add_argument("--out", help="output directory (default $MENES_OUT or ./out)")
    common.add_argument("--host-model", default=DEFAULT_HOST_MODEL, choices=sorted(HOST_MODELS))
    common.add_argument("--quiet", action="store_true", help="print nothing on stdout")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    pricing = argparse.ArgumentParser(add_help=False)
    pricing.add_argument("--unit-cost", type=float, help="in-house server price (USD)")
    pricing.add_argument("--hourly-rate", type=float, help="cloud host hourly rate (USD)")
    pricing.add_argument("--mgmt-cost", type=float, help="management cost per host-month (USD)")
    pricing.add_argument("--months", type=float, help="cost horizon in months (default 24)")

    p = argparse.ArgumentParser(prog="wnetlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, helptext, extra in (
        ("validate", cmd_validate, "check a configuration and print counts", ()),
        ("plan", cmd_plan, "write the deployment plan", ()),
        ("compile", cmd_compile, "write the external-tool artifact bundle", ()),
        ("run", cmd_run, "run the scenario and write the report", ()),
        ("cost", cmd_cost, "estimate deployment cost", (pricing,)),
    ):
        sp = sub.add_parser(name, parents=[common, *extra], help=helptext)
        sp.add_argument("config", help="scenario YAML file")
        sp.set_defaults(func=fn)
    rp = sub.add_parser("report", parents=[common], help="print a finished run's summary")
    rp.add_argument("report_dir", nargs="?", help="output directory of a previous run")
    rp.set_defaults(func=cmd_report)
    sw = sub.add_parser("sweep", parents=[common, pricing],
                        help="host counts and costs over a range of sizes")
    sw.add_argument("--nodes", default="50:1000:50", help="start:stop:step or a comma list")
    sw.add_argument("--models", default=",".join(HOST_MODELS),
                    help="comma-separated host models")
    sw.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except _CONFIG_ERRORS as exc:
        print(f"error: stage=config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: stage=io: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, RuntimeError) as exc:
        print(f"error: stage=run: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
