"""Times the CPU inference engine.
"""

# Standard library imports
import json

# Third-party imports
from django.conf import settings
from django.core.management.base import CommandParser

# Application imports
from oxymap.management.base import PipelineCommand
from oxymap.neural.engine import (
    GeneratorWeights,
    benchmark_inference,
    load_weights,
)
from oxymap.neural.manifest import build_generator_manifest


class Command(PipelineCommand):
    """Runs repeated forward passes on a random input at one and at
    several threads and reports the per-frame time, the speedup and
    whether both outputs are bit-identical. Without `--weights` a
    randomly initialized generator at the configured widths is timed.
    """

    help = "Benchmarks generator inference."
    name = "Bench"

    def add_arguments(self, parser: CommandParser) -> None:
        """Provides the input size, thread count, repeat count, an
        optional weight container and an optional report path.

        Args:
            parser (`CommandParser`)

        Returns:
            `None`
        """
        parser.add_argument("--weights")
        parser.add_argument("--size", type=int, default=256)
        parser.add_argument("--threads", type=int, default=4)
        parser.add_argument("--repeats", type=int, default=3)
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--out")

    def handle(self, *args, **options) -> None:
        """Executes the command.

        Args:
            `None`

        Returns:
            `None`
        """
        with self.stage("Loading weights"):
            if options["weights"]:
                weights = load_weights(options["weights"], self.store)
            else:
                weights = GeneratorWeights.random(
                    build_generator_manifest(),
                    options["seed"],
                    settings.TRAIN_INIT_STD,
                )

        with self.stage(
            f"Timing {options['size']}x{options['size']} inference"
        ):
            report = benchmark_inference(
                weights,
                options["size"],
                options["threads"],
                options["repeats"],
                options["seed"],
            )

        summary = {"stage": "bench", **report.model_dump()}
        if options["out"]:
            with self.stage("Writing benchmark report"):
                with self.store.open_file(options["out"], "w") as f:
                    json.dump(summary, f, indent=2, sort_keys=True)
        self.emit(summary)
