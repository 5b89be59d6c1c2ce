import argparse
import logging
import sys
from typing import List, Optional

from commands.data_commands import GenerateCommand
from commands.diagnostic_commands import GradcheckCommand, InspectCommand
from commands.training_commands import AblateCommand, EvalCommand, TrainCommand
from config.settings import ConfigManager
from container import DIContainer, container
from core.exceptions import LstrlError

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Run config file (key = value lines)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override one config key; repeatable")
    common.add_argument("--seed", type=int, help="Shortcut for --set seed=N")

    variants = argparse.ArgumentParser(add_help=False)
    variants.add_argument("--variant", choices=["baseline", "+mae", "+bme", "+mae+bme"],
                          help="Block insertion preset")
    variants.add_argument("--ablate-granularity", action="append", metavar="A<i>",
                          help="Remove one appearance granularity; repeatable")
    variants.add_argument("--motion", choices=["global", "local"], help="Motion pairing manner")
    variants.add_argument("--direction", choices=["bi", "single"], help="Motion directions")

    parser = argparse.ArgumentParser(prog="lstrl", description="Video person re-identification at desk scale")
    sub = parser.add_subparsers(dest="command", required=True)

    generate = sub.add_parser("generate", parents=[common], help="Render the synthetic dataset")
    generate.add_argument("--force", action="store_true", help="Overwrite a non-empty dataset directory")

    train = sub.add_parser("train", parents=[common, variants], help="Train a model")
    train.add_argument("--resume", action="store_true", help="Continue from the latest checkpoint")

    evaluate = sub.add_parser("eval", parents=[common, variants], help="Evaluate a checkpoint")
    evaluate.add_argument("--checkpoint", help="Checkpoint file (default: latest in checkpoint_dir)")
    evaluate.add_argument("--dump-embeddings", action="store_true",
                          help="Also write query/gallery embeddings as tensor files")

    ablate = sub.add_parser("ablate", parents=[common], help="Run an ablation grid")
    ablate.add_argument("--grid", choices=["modules", "granularity", "motion"], default="modules")
    ablate.add_argument("--seeds", type=int, default=3)

    gradcheck = sub.add_parser("gradcheck", parents=[common], help="Finite-difference gradient checks")
    gradcheck.add_argument("--corrupt", metavar="OP", help=argparse.SUPPRESS)
    gradcheck.add_argument("--skip-network", action="store_true", help="Skip the end-to-end network check")

    inspect = sub.add_parser("inspect", parents=[common, variants], help="Dump D and M maps of one clip")
    inspect.add_argument("--checkpoint", help="Checkpoint file (default: latest in checkpoint_dir)")
    inspect.add_argument("--clip", required=True, help="Tracklet directory or [T,H,W,3] tensor file")
    inspect.add_argument("--out", dest="output", help="Output directory")
    return parser


class Application:
    """Command-line application wiring configuration, handlers and commands"""

    def __init__(self, di: Optional[DIContainer] = None):
        self.container = di or container
        self.config_manager: ConfigManager = self.container.get('config_manager')  # type: ignore[assignment]
        self._commands = {
            "generate": (GenerateCommand, ("force",)),
            "train": (TrainCommand, ("resume",)),
            "eval": (EvalCommand, ("checkpoint", "dump_embeddings")),
            "ablate": (AblateCommand, ("grid", "seeds")),
            "gradcheck": (GradcheckCommand, ("corrupt", "skip_network")),
            "inspect": (InspectCommand, ("checkpoint", "clip", "output")),
        }

    def configure_logging(self) -> None:
        settings = self.config_manager.get_app_settings()
        logging.basicConfig(level=getattr(logging, settings.log_level, logging.INFO),
                            format=settings.log_format)

    def run(self, argv: Optional[List[str]] = None) -> int:
        args = build_parser().parse_args(argv)
        try:
            self.config_manager.load(
                args.config, args.overrides, seed=args.seed,
                variant=getattr(args, "variant", None),
                ablate_granularity=getattr(args, "ablate_granularity", None),
                motion=getattr(args, "motion", None), direction=getattr(args, "direction", None))
        except LstrlError as exc:
            logger.error("Invalid configuration: %s", exc)
            return exc.exit_code

        command_class, option_names = self._commands[args.command]
        options = {name: getattr(args, name) for name in option_names}
        command = self.container.create_with_dependencies(command_class, **options)
        return command.run()


def main(argv: Optional[List[str]] = None) -> int:
    app = Application()
    app.configure_logging()
    return app.run(argv)


if __name__ == "__main__":
    sys.exit(main())
