"""Command line: ``nhcyl [check|average|solve|certify|sweep|run] [flags]``.

Exit codes: 0 all certificates pass, 2 a certificate failed, 3 configuration error
(including a missing upstream artifact).
"""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, builtin, load
from .pipeline import STAGES, MissingArtifact, Pipeline, run_pipeline

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nhcyl", description="Construct and certify a normally hyperbolic cylinder.")
    p.add_argument("command", nargs="?", default="run", choices=STAGES + ("run",),
                   help="one stage from cached upstream artifacts, or 'run' for the whole pipeline")
    p.add_argument("--config", help="scenario JSON, or builtin:<name> (default builtin:pendulum-cylinder)")
    p.add_argument("--out", default="nhcyl-out", help="artifact directory")
    p.add_argument("--stage", choices=STAGES, help="with 'run': stop after this stage")
    p.add_argument("--epsilon", type=float, help="replace the epsilon ladder by this single value")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--strict", action="store_true", help="treat certificate warnings as failures")
    return p


def load_config(spec: str | None):
    if spec is None:
        return builtin("pendulum-cylinder")
    if spec.startswith("builtin:"):
        return builtin(spec.split(":", 1)[1])
    return load(spec)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(args.epsilon, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "run":
        return run_pipeline(cfg, args.out, args.stage, args.strict)
    pipe = Pipeline(cfg, args.out, args.strict)
    try:
        ok = getattr(pipe, args.command)()
    except (ConfigError, MissingArtifact) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_PASS if ok else EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
