"""``polariton-lab <mode> --config FILE [--out DIR] [--threads N]``.

Exit codes: 0 when every enforced check passes, 1 when one fails or the run
raises a physics error, 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import MODES, parse_config
from .errors import ConfigError
from .runner import RunError, run

log = logging.getLogger("polariton_lab")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polariton-lab",
        description="Dark-state polariton toolkit: transforms, dispersion, propagation, protocols.",
    )
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True, type=Path, help="YAML configuration file")
    parser.add_argument("--out", type=Path, default=None, help="output directory (overrides output_dir)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for batched linear algebra")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    if args.threads < 1:
        log.error("--threads must be >= 1")
        return 2
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return 2
    try:
        cfg = parse_config(text, mode=args.mode)
    except ConfigError as exc:
        for err in exc.errors:
            log.error("config %s", err)
        return 2
    try:
        manifest = run(cfg, args.out, threads=args.threads)
    except RunError as exc:
        log.error("%s", exc)
        return 1
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return 1
    for chk in manifest["checks"]:
        state = "ok" if chk["passed"] else ("FAIL" if chk["enforced"] else "diag")
        log.info("%-4s %s = %.6g (%s %.3g)", state, chk["name"], chk["value"], chk["op"], chk["threshold"])
    for w in manifest["warnings"]:
        log.warning("%s", w)
    return 0 if manifest["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
