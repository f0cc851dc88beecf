"""
wforge command-line entry point

Builds and checks entanglement witnesses for N-qubit GHZ and W states:

    wforge gen-data --config run.json
    wforge train    --config run.json
    wforge adjust   --config run.json
    wforge rfe      --config run.json --set rfe.target_feature_count=5
    wforge verify   --config run.json
    wforge compare  --config run.json --reference mermin
    wforge report   --output runs/ghz4
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from src import __version__
from src.errors import EXIT_INCOMPLETE, EXIT_OK, ConfigError, WforgeError
from src.models import PipelineConfig, build_pipeline_config
from src import tools

logger = logging.getLogger("wforge")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# commands that take a witness file argument
_WITNESS_COMMANDS = ("adjust", "rfe", "verify", "compare")


def _load_raw_config(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        return {}
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(f"config file not found: {config_path}")
    try:
        raw = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{config_path} is not valid JSON: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{config_path} must hold a JSON object")
    return raw


def load_config(args: argparse.Namespace) -> PipelineConfig:
    """Config file, then --set overrides, then the dedicated flags."""
    overrides: List[str] = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.output is not None:
        overrides.append(f"output_dir={json.dumps(args.output)}")
    threads = args.threads if args.threads is not None else os.environ.get("WFORGE_THREADS")
    if threads is not None:
        overrides.append(f"threads={threads}")
    return build_pipeline_config(_load_raw_config(args.config), overrides)


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors raise ConfigError"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--threads", type=int, help="worker threads (default: $WFORGE_THREADS or 1)")
    common.add_argument("--output", help="run directory (overrides output_dir)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="dotted config override, value parsed as JSON; repeatable")
    common.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = _Parser(prog="wforge", description="Entanglement witness forge")
    parser.add_argument("--version", action="version", version=f"wforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", parents=[common], help="generate training samples")
    sub.add_parser("train", parents=[common], help="train the SVM witness")
    for name, help_text in (
        ("adjust", "shift the bias by the separable minimum"),
        ("rfe", "recursive feature elimination"),
        ("verify", "classify fresh test states"),
        ("compare", "percent error against a reference witness"),
    ):
        cmd = sub.add_parser(name, parents=[common], help=help_text)
        cmd.add_argument("--witness", help="witness JSON (default: the run's own artifact)")
    sub.choices["compare"].add_argument(
        "--reference", default="mermin", help="mermin, a bundled fixture name or a witness JSON path"
    )
    sub.add_parser("report", parents=[common], help="render report.html for a run")
    return parser


def run(args: argparse.Namespace) -> int:
    if args.command == "report":
        output = args.output
        if output is None:
            output = load_config(args).output_dir
        response = tools.cmd_report(output)
        print(response.model_dump_json(indent=2))
        if not response.complete:
            logger.warning("Missing artifacts: %s", ", ".join(response.missing))
            return EXIT_INCOMPLETE
        return EXIT_OK

    cfg = load_config(args)
    command = {
        "gen-data": tools.cmd_gen_data,
        "train": tools.cmd_train,
        "adjust": tools.cmd_adjust,
        "rfe": tools.cmd_rfe,
        "verify": tools.cmd_verify,
        "compare": tools.cmd_compare,
    }[args.command]
    kwargs: Dict[str, Any] = {}
    if args.command in _WITNESS_COMMANDS:
        kwargs["witness_path"] = args.witness
    if args.command == "compare":
        kwargs["reference"] = args.reference
    response = command(cfg, **kwargs)
    print(response.model_dump_json(indent=2))
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT)
    try:
        return run(args)
    except WforgeError as e:
        logger.error("%s", e)
        report = getattr(e, "report", None)
        if report is not None:
            print(report.model_dump_json(indent=2))
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
