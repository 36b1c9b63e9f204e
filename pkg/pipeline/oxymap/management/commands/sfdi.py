"""Recovers optical properties from a conventional six-image-per-
wavelength acquisition.
"""

# Standard library imports
from pathlib import Path
from typing import Dict, Optional

# Third-party imports
import numpy as np
from django.conf import settings
from django.core.management.base import CommandError, CommandParser

# Application imports
from oxymap.chromophore.basis import load_basis
from oxymap.chromophore.fitting import sto2_from_mua
from oxymap.core.io import read_mask, read_plane, write_plane, write_stack
from oxymap.management.base import (
    SFDI_BANDS,
    PipelineCommand,
    sfdi_image_name,
)
from oxymap.photon.lut import load_lut
from oxymap.sfdi.calibration import load_reference_bundle, reference_at
from oxymap.sfdi.demodulation import PhaseTriplet
from oxymap.sfdi.pipeline import sfdi_optical_properties

IMAGE_FLAGS = [f"{band}{p}" for band in SFDI_BANDS for p in range(3)]


class Command(PipelineCommand):
    """Demodulates, calibrates and inverts DC and AC phase triplets.

    Given the six images of one wavelength as `--dc0` through `--ac2`,
    writes a two-channel `(mua, musp)` raster to `--out`. Given a
    phantom scene directory `--stack`, processes every wavelength and
    writes `mua_<nm>.f32` and `musp_<nm>.f32` into the `--out`
    directory; with `--sto2` the absorption stack is also reduced to
    saturation.
    """

    help = "Runs conventional SFDI on phase images."
    name = "Sfdi"

    def add_arguments(self, parser: CommandParser) -> None:
        """Requires the lookup table `--lut`, the output `--out` and
        either the six images or `--stack`. The references default to
        `reference.json` inside the scene directory.

        Args:
            parser (`CommandParser`)

        Returns:
            `None`
        """
        for flag in IMAGE_FLAGS:
            parser.add_argument(f"--{flag}", dest=flag)
        parser.add_argument("--wavelength", type=float)
        parser.add_argument("--stack")
        parser.add_argument("--lut", required=True)
        parser.add_argument("--out", required=True)
        parser.add_argument("--ref", "--refs", dest="refs")
        parser.add_argument("--mask")
        parser.add_argument("--wavelengths", nargs="+", type=float)
        parser.add_argument("--sto2", action="store_true")
        parser.add_argument("--basis")
        parser.add_argument("--workers", type=int)

    def handle(self, *args, **options) -> None:
        """Executes the command.

        Args:
            `None`

        Returns:
            `None`
        """
        images = {f: options[f] for f in IMAGE_FLAGS if options[f]}
        if images:
            self.handle_images(images, options)
        elif options["stack"]:
            self.handle_stack(options)
        else:
            raise CommandError("Pass --dc0 through --ac2, or --stack.")

    def _load_common(
        self, options: Dict, default_refs: Optional[str] = None
    ) -> tuple:
        """Reads the lookup table, references and optional mask."""
        refs_path = options["refs"] or default_refs
        if not refs_path:
            raise ValueError("Pass --ref with the reference bundle.")
        lut = load_lut(options["lut"], self.store)
        refs = load_reference_bundle(refs_path, self.store)
        mask = (
            read_mask(options["mask"], self.store)
            if options["mask"]
            else None
        )
        return lut, refs, mask

    def handle_images(self, images: Dict[str, str], options: Dict) -> None:
        """Processes the explicitly named images of one wavelength."""
        missing = [f"--{f}" for f in IMAGE_FLAGS if f not in images]
        if missing:
            raise CommandError(f"Missing image flag(s): {', '.join(missing)}.")

        with self.stage("Loading lookup table and references"):
            lut, refs, mask = self._load_common(options)
            wavelength = options["wavelength"]
            if wavelength is None:
                if len(refs) != 1:
                    raise ValueError(
                        "The reference bundle covers "
                        f"{sorted(refs)} nm; pass --wavelength."
                    )
                wavelength = next(iter(refs))
            ref = reference_at(refs, wavelength)

        stage = f"Recovering optical properties at {wavelength:g} nm"
        with self.stage(stage):
            triplets = []
            for band, fx in zip(SFDI_BANDS, (lut.fx_dc, lut.fx_ac)):
                planes = [
                    read_plane(images[f"{band}{p}"], self.store)
                    for p in range(3)
                ]
                triplets.append(PhaseTriplet(*planes, fx, wavelength))
            props = sfdi_optical_properties(
                *triplets, ref, lut, mask, options["workers"]
            )

        with self.stage("Writing optical property map"):
            fpath = write_stack(
                np.stack([props.mua.data, props.musp.data]),
                Path(options["out"]),
                pitch_mm=props.mua.pitch_mm,
                semantic="mua,musp",
                store=self.store,
            )

        self.emit(
            {
                "stage": "sfdi",
                "path": str(fpath),
                "wavelength": wavelength,
                "out_of_gamut_fraction": props.out_of_gamut_fraction,
                "valid_pixels": props.valid.count,
            }
        )

    def handle_stack(self, options: Dict) -> None:
        """Processes every wavelength of a phantom scene directory."""
        stack_dir = Path(options["stack"])
        out_dir = Path(options["out"])
        wavelengths = options["wavelengths"] or settings.SFDI_WAVELENGTHS_NM

        # Load inputs
        with self.stage("Loading lookup table and references"):
            lut, refs, mask = self._load_common(
                options, str(stack_dir / "reference.json")
            )

        # Recover optical properties per wavelength
        mua_stack, summary = {}, {}
        for wavelength in wavelengths:
            stage = f"Recovering optical properties at {wavelength:g} nm"
            with self.stage(stage):
                ref = reference_at(refs, wavelength)
                triplets = []
                for band, fx in zip(SFDI_BANDS, (lut.fx_dc, lut.fx_ac)):
                    planes = [
                        read_plane(
                            stack_dir / sfdi_image_name(wavelength, band, p),
                            self.store,
                        )
                        for p in range(3)
                    ]
                    triplets.append(PhaseTriplet(*planes, fx, wavelength))
                props = sfdi_optical_properties(
                    *triplets, ref, lut, mask, options["workers"]
                )
                write_plane(
                    props.mua, out_dir / f"mua_{wavelength:g}.f32", self.store
                )
                write_plane(
                    props.musp,
                    out_dir / f"musp_{wavelength:g}.f32",
                    self.store,
                )
                mua_stack[wavelength] = props.mua
                summary[f"{wavelength:g}"] = {
                    "out_of_gamut_fraction": props.out_of_gamut_fraction,
                    "valid_pixels": props.valid.count,
                }

        result = {"stage": "sfdi", "out": str(self.resolve(out_dir))}
        result["wavelengths"] = summary

        # Reduce to saturation
        if options["sto2"]:
            with self.stage("Fitting chromophores"):
                basis = load_basis(options["basis"], wavelengths, self.store)
                sto2 = sto2_from_mua(
                    mua_stack, basis, mask, options["workers"]
                )
                write_plane(sto2.plane, out_dir / "sto2.f32", self.store)
            result["sto2"] = str(self.resolve(out_dir / "sto2.f32"))

        self.emit(result)
