"""Command-line entry point: ``chebslider run`` and ``chebslider validate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .engine import ConfigError, RunConfig, run, validate_config
from .pricer import PricingError

EXIT_OK, EXIT_CONFIG, EXIT_PRICING = 0, 1, 2


def _subset(text: str):
    return int(text) if text.isdigit() else [t for t in text.split(",") if t]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chebslider", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "run the full benchmark vs slider experiment"),
                            ("validate", "check a config without running it")):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="JSON run config; unset fields take defaults")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out-dir", dest="output_dir")
        sp.add_argument("--trades-subset", type=_subset,
                        help="first N trades, or a comma-separated list of trade ids")
        sp.add_argument("--threads", type=int)
        sp.add_argument("--paths", type=int, help="Monte Carlo paths (overrides config)")
        sp.add_argument("--export-artifacts", action="store_true", default=None,
                        help="also write market, portfolio, histories, scenario sets and sliders")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_json(args.config) if args.config else RunConfig()
    for name in ("seed", "output_dir", "trades_subset", "threads", "paths", "export_artifacts"):
        value = getattr(args, name)
        if value is not None:
            setattr(cfg, name, value)
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        problems = validate_config(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if problems:
        for msg in problems:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print("config ok")
        return EXIT_OK
    try:
        result = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PricingError as exc:
        print(f"pricing failure: {exc}", file=sys.stderr)
        return EXIT_PRICING
    port = result.results["portfolio"]["sets"]
    summary = {label: {k: m[k] for k in ("es_full", "es_slider", "relative_es_error")} | (
        {"pla": m["pla"]} if "pla" in m else {}) for label, m in port.items()}
    print(json.dumps({"cost": {k: result.cost[k] for k in ("calls_full", "calls_slider", "reduction")},
                      "portfolio": summary}, indent=1))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
