"""Command line front door.

    bflux run CONFIG [--set section.key=value]...
    bflux validate CONFIG [--set ...]
    bflux calibrate CONFIG [--set ...]

``calibrate`` is shorthand for ``run`` with the preset forced to
``calibrate``.  The BFLUX_OUT environment variable overrides the
configured output directory.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config, validate
from .errors import BfluxError, ConfigError
from .presets import run_preset


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bflux",
        description="reaction-diffusion solver with nonlinear boundary flux")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("run", "execute the configured preset"),
                       ("validate", "check a config without running it"),
                       ("calibrate", "run the calibration preset")):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("config", help="path to the INI config file")
        cmd.add_argument("--set", dest="overrides", action="append",
                         default=[], metavar="SECTION.KEY=VALUE",
                         help="override one config value (repeatable)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.command == "calibrate":
        overrides.append("run.preset=calibrate")
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    if args.command == "validate":
        violations = validate(cfg)
        for v in violations:
            print(f"violation: {v}")
        if not violations:
            print("ok")
        return 1 if violations else 0

    try:
        manifest = run_preset(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1
    except BfluxError as exc:
        print(f"check machinery failed: {exc}", file=sys.stderr)
        return 2

    for check in manifest.checks:
        tag = "PASS" if check.passed else "FAIL"
        detail = f"  ({check.detail})" if check.detail else ""
        print(f"[{tag}] {check.name}{detail}")
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
