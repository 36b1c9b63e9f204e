"""Tracks region-of-interest saturation over an alternating-wavelength
frame sequence.
"""

# Standard library imports
from pathlib import Path

# Third-party imports
import pandas as pd
from django.core.management.base import CommandError, CommandParser

# Application imports
from common.geometry import PixelBox
from oxymap.analysis.timeseries import (
    METHODS,
    PAIRINGS,
    plot_timeseries,
    read_checkpoints,
    roi_timeseries,
    write_timeseries,
)
from oxymap.chromophore.basis import load_basis
from oxymap.management.base import PipelineCommand
from oxymap.neural.engine import load_weights
from oxymap.photon.lut import load_lut
from oxymap.sfdi.calibration import load_reference_bundle


class Command(PipelineCommand):
    """Pairs frames into two-wavelength snapshots, maps saturation with
    each requested method and writes the region's mean and standard
    deviation per snapshot as `timeseries.csv`, plus `timeseries.svg`
    with the checkpoints overlaid.
    """

    help = "Computes an ROI StO2 time series from a frame sequence."
    name = "Timeseries"

    def add_arguments(self, parser: CommandParser) -> None:
        """Requires the frame manifest `--frames`, the region `--roi`
        as `row,col,height,width` and the output directory `--out`. The
        references and checkpoints default to the files written next
        to the manifest by the phantom generator.

        Args:
            parser (`CommandParser`)

        Returns:
            `None`
        """
        parser.add_argument("--frames", required=True)
        parser.add_argument("--roi", required=True)
        parser.add_argument("--out", required=True)
        parser.add_argument(
            "--method", nargs="+", choices=METHODS, default=["ssop"]
        )
        parser.add_argument("--pairing", choices=PAIRINGS, default="adjacent")
        parser.add_argument("--refs")
        parser.add_argument("--checkpoints")
        parser.add_argument("--lut")
        parser.add_argument("--basis")
        parser.add_argument("--weights")
        parser.add_argument("--workers", type=int)

    def handle(self, *args, **options) -> None:
        """Executes the command.

        Args:
            `None`

        Returns:
            `None`
        """
        frames_dir = Path(options["frames"]).parent
        out_dir = Path(options["out"])
        methods = options["method"]
        if "ssop" in methods and not options["lut"]:
            raise CommandError("The ssop method requires --lut.")
        if "oxygan" in methods and not options["weights"]:
            raise CommandError("The oxygan method requires --weights.")

        # Load inputs
        with self.stage("Loading references and models"):
            roi = PixelBox.parse(options["roi"])
            refs = load_reference_bundle(
                options["refs"] or frames_dir / "reference.json", self.store
            )
            lut = basis = weights = None
            if "ssop" in methods:
                lut = load_lut(options["lut"], self.store)
                basis = load_basis(options["basis"], sorted(refs), self.store)
            if "oxygan" in methods:
                weights = load_weights(options["weights"], self.store)
            checkpoints_path = options["checkpoints"] or (
                frames_dir / "checkpoints.csv"
            )
            checkpoints = None
            if self.resolve(checkpoints_path).exists():
                checkpoints = read_checkpoints(checkpoints_path, self.store)

        # Measure each method
        series = []
        for method in methods:
            with self.stage(f"Measuring ROI saturation with {method}"):
                series.append(
                    roi_timeseries(
                        options["frames"],
                        roi,
                        method,
                        refs,
                        lut=lut,
                        basis=basis,
                        weights=weights,
                        pairing=options["pairing"],
                        workers=options["workers"],
                        store=self.store,
                    )
                )
        combined = pd.concat(series, ignore_index=True)

        # Write outputs
        with self.stage("Writing time series"):
            csv_path = write_timeseries(
                combined, out_dir / "timeseries.csv", self.store
            )
            svg_path = plot_timeseries(
                combined, out_dir / "timeseries.svg", checkpoints, self.store
            )

        self.emit(
            {
                "stage": "timeseries",
                "csv": str(csv_path),
                "svg": str(svg_path),
                "samples": {
                    m: int((combined["method"] == m).sum()) for m in methods
                },
                "checkpoints": 0 if checkpoints is None else len(checkpoints),
            }
        )
