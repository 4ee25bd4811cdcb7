"""``mudich`` command line: run one config and write a JSON report.

Exit codes: 0 pass, 1 verification failure or falsified prediction,
2 invalid config, 3 unsupported capability.
"""
from __future__ import annotations

import argparse
import sys

from .config import load
from .errors import ConfigError, DomainError, EvolutionOverflowError, ParameterError, UnsupportedCapabilityError
from .runner import run, write_outputs

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_UNSUPPORTED = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mudich", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON config file (default: the built-in example battery)")
    p.add_argument("--out", default=None, help="output directory for report.json and CSV files")
    p.add_argument("--format", choices=["json", "json+csv"], default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--window-scale", type=float, default=None,
                   help="multiply every window schedule and the pair-grid extent")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load(args.config) if args.config else {"command": "paper-examples"}
        report, tables = run(config, args.seed, args.window_scale, args.format, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnsupportedCapabilityError as exc:
        print(f"unsupported: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (ParameterError, DomainError) as exc:
        print(f"config error: inputs: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EvolutionOverflowError as exc:
        print(f"evolution overflow: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out = report["config"]["output"]
    paths = write_outputs(report, tables, out["dir"], out["format"])
    verdict = report["verdict"]
    print(f"{report['command']}: {'PASS' if verdict['passed'] else 'FAIL'} ({verdict['summary']})")
    for path in paths:
        print(f"  wrote {path}")
    return EXIT_OK if verdict["passed"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
