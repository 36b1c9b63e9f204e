"""Trains the fusion generator adversarially on a patch dataset.
"""

# Standard library imports
from pathlib import Path

# Third-party imports
from django.core.management.base import CommandError, CommandParser

# Application imports
from oxymap.management.base import PipelineCommand


class Command(PipelineCommand):
    """Trains the generator and discriminator on a dataset written by
    `phantom gen --dataset`, then exports `generator.oxw`, `oracle.oxw`
    and `train_log.csv`. Requires torch.
    """

    help = "Trains the StO2 generator and exports its weights."
    name = "Train"

    def add_arguments(self, parser: CommandParser) -> None:
        """Requires the dataset directory `--dataset` and the output
        directory `--out`. Hyperparameters come from the settings,
        overridden by `--config` and then by the individual flags.

        Args:
            parser (`CommandParser`)

        Returns:
            `None`
        """
        parser.add_argument("--dataset", required=True)
        parser.add_argument("--out", required=True)
        parser.add_argument("--config")
        parser.add_argument("--epochs", type=int)
        parser.add_argument("--patch-size", type=int)
        parser.add_argument("--seed", type=int)
        parser.add_argument("--device")
        parser.add_argument("--no-adversarial", action="store_true")

    def handle(self, *args, **options) -> None:
        """Executes the command.

        Args:
            `None`

        Returns:
            `None`
        """
        try:
            from oxymap.training import TrainConfig, load_train_config, train
        except ImportError as e:
            raise CommandError(
                f"Training requires torch, which failed to import. {e}"
            ) from e

        with self.stage("Loading training config"):
            config = load_train_config(options["config"], self.store)
            overrides = {
                "epochs": options["epochs"],
                "patch_size": options["patch_size"],
                "seed": options["seed"],
                "device": options["device"],
            }
            if options["no_adversarial"]:
                overrides["adversarial"] = False
            overrides = {k: v for k, v in overrides.items() if v is not None}
            config = TrainConfig(**{**config.model_dump(), **overrides})

        with self.stage("Training generator"):
            result = train(
                options["dataset"],
                config,
                Path(options["out"]),
                store=self.store,
            )

        last = result.history.iloc[-1].to_dict() if len(result.history) else {}
        self.emit(
            {
                "stage": "train",
                "weights": str(result.weights_path),
                "oracle": str(result.oracle_path),
                "log": str(result.log_path),
                "epochs": config.epochs,
                "final": {k: float(v) for k, v in last.items()},
            }
        )
