"""Scores saturation maps against a ground truth by NMAE.
"""

# Standard library imports
import json

# Third-party imports
from django.core.management.base import CommandError, CommandParser

# Application imports
from oxymap.analysis.comparison import compare_methods, crop_to_common
from oxymap.core.io import read_mask, read_plane
from oxymap.core.raster import Mask, StO2Map, nmae
from oxymap.management.base import PipelineCommand


class Command(PipelineCommand):
    """With a single unnamed `--pred` the command prints its NMAE over
    the mask. With several `--pred METHOD=PATH` pairs the maps are
    cropped to their shared top-left extent, scored over the pixels
    valid in all of them and compared with the SSOP baseline.
    """

    help = "Computes NMAE of one or more StO2 maps against ground truth."
    name = "Eval"

    def add_arguments(self, parser: CommandParser) -> None:
        """Requires one or more `--pred` maps and the ground truth
        `--gt`. The mask defaults to every pixel.

        Args:
            parser (`CommandParser`)

        Returns:
            `None`
        """
        parser.add_argument("--pred", action="append", required=True)
        parser.add_argument("--gt", required=True)
        parser.add_argument("--mask")
        parser.add_argument("--baseline", default="ssop")
        parser.add_argument("--out")

    def handle(self, *args, **options) -> None:
        """Executes the command.

        Args:
            `None`

        Returns:
            `None`
        """
        # Name the predictions
        preds = {}
        for value in options["pred"]:
            method, sep, path = value.rpartition("=")
            method = method if sep else "pred"
            if method in preds:
                raise CommandError(f'--pred repeats the method "{method}".')
            preds[method] = path

        with self.stage("Loading maps"):
            maps = {
                m: StO2Map(plane=read_plane(p, self.store))
                for m, p in preds.items()
            }
            gt = StO2Map(plane=read_plane(options["gt"], self.store))
            mask = (
                read_mask(options["mask"], self.store)
                if options["mask"]
                else None
            )

        with self.stage("Scoring maps"):
            if len(maps) == 1 and "pred" in maps:
                mask = mask if mask is not None else Mask.full(*gt.shape)
                summary = {
                    "stage": "eval",
                    "nmae": nmae(maps["pred"], gt, mask),
                    "mask_pixels": mask.count,
                }
            else:
                maps, gt, mask = crop_to_common(maps, gt, mask)
                comparison = compare_methods(
                    maps, gt, mask, options["baseline"]
                )
                summary = {"stage": "eval", **comparison.model_dump()}

        if options["out"]:
            with self.stage("Writing evaluation report"):
                with self.store.open_file(options["out"], "w") as f:
                    json.dump(summary, f, indent=2, sort_keys=True)
        self.emit(summary)
