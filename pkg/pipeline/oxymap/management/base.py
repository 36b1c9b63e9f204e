"""Shared plumbing for the pipeline's management commands.
"""

# Standard library imports
import json
import re
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

# Third-party imports
from django.conf import settings
from django.core.management.base import (
    BaseCommand,
    CommandError,
    CommandParser,
)

# Application imports
from common.logger import LoggerFactory
from common.storage import IDataStore, IDataStoreFactory
from oxymap.core.io import read_plane
from oxymap.core.raster import ImagePlane
from oxymap.sfdi.calibration import ReferenceMeasurement, load_reference_bundle

SFDI_BANDS = ("dc", "ac")

KEYED_PATTERN = re.compile(r"^\s*(\d+(?:\.\d*)?)\s*[:=](.+)$")


def sfdi_image_name(wavelength_nm: float, band: str, phase: int) -> str:
    """The file name of one image of a conventional acquisition."""
    return f"sfdi_{wavelength_nm:g}_{band}_{phase}.f32"


def snapshot_image_name(wavelength_nm: float) -> str:
    """The file name of a single-phase structured image."""
    return f"snapshot_{wavelength_nm:g}.f32"


def parse_keyed(values: Optional[List[str]], flag: str) -> Dict[float, str]:
    """Parses repeated `WAVELENGTH:PATH` arguments. `WAVELENGTH=PATH`
    is accepted as well.

    Raises:
        `CommandError` if a value is malformed or repeated.
    """
    out = {}
    for value in values or []:
        match = KEYED_PATTERN.match(value)
        if match is None:
            raise CommandError(
                f'Expected {flag} as WAVELENGTH:PATH, received "{value}".'
            )
        key, path = match.groups()
        wavelength = float(key)
        if wavelength in out:
            raise CommandError(f"{flag} repeats the wavelength {key}.")
        out[wavelength] = path
    return out


class PipelineCommand(BaseCommand):
    """Base for commands that run one pipeline stage at a time. Each
    stage runs inside `stage()`, which logs it and turns domain and
    file failures into a `CommandError` naming the stage. On success
    the command prints a JSON summary to standard output.
    """

    name = "Oxymap"

    def __init__(self, *args, **kwargs) -> None:
        """Initializes a new instance of the command.

        Args:
            *The default positional arguments for the base class.

        Kwargs:
            **The default keyword arguments for the base class.

        Returns:
            `None`
        """
        self._logger = LoggerFactory.get(f"OXYMAP.{self.name.upper()}")
        self._store: Optional[IDataStore] = None
        super().__init__(*args, **kwargs)

    @property
    def store(self) -> IDataStore:
        """The data store for the current environment."""
        if self._store is None:
            self._store = IDataStoreFactory.get()
        return self._store

    def resolve(self, fpath: str) -> Path:
        """Resolves a path argument against the data directory."""
        return self.store.resolve(fpath)

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        """Runs one named stage.

        Raises:
            `CommandError` if the stage raises a domain, validation or
                file error.
        """
        self._logger.info(f"{name}.")
        try:
            yield
        except (ValueError, OSError, KeyError) as e:
            self._logger.error(f'Stage "{name}" failed. {e}')
            raise CommandError(f"{name} failed: {e}") from e

    def emit(self, summary: Dict) -> None:
        """Prints the machine-readable summary of the run."""
        self.stdout.write(json.dumps(summary, indent=2, sort_keys=True))
        self._logger.info("Process completed successfully.")

    def add_snapshot_arguments(self, parser: CommandParser) -> None:
        """Adds the flags that locate single-phase snapshots: one
        `--img<NM>` per snapshot wavelength (e.g., `--img659`), repeated
        `--image WAVELENGTH:PATH`, or a phantom scene directory
        `--stack`, plus the reference bundle `--ref`.
        """
        for wavelength in settings.SNAPSHOT_WAVELENGTHS_NM:
            parser.add_argument(
                f"--img{wavelength:g}", dest=f"img{wavelength:g}"
            )
        parser.add_argument("--image", action="append")
        parser.add_argument("--stack")
        parser.add_argument("--ref", "--refs", dest="refs")

    def load_snapshot(
        self, options: Dict
    ) -> Tuple[Dict[float, ImagePlane], Dict[float, ReferenceMeasurement]]:
        """Reads the snapshot images and references named by the
        snapshot flags.

        Raises:
            `CommandError` if neither images nor a scene directory is
                given, or no reference bundle can be located.
        """
        paths = parse_keyed(options["image"], "--image")
        for wavelength in settings.SNAPSHOT_WAVELENGTHS_NM:
            path = options.get(f"img{wavelength:g}")
            if path:
                paths[float(wavelength)] = path
        refs_path = options["refs"]
        if options["stack"]:
            stack_dir = Path(options["stack"])
            for wavelength in settings.SNAPSHOT_WAVELENGTHS_NM:
                paths.setdefault(
                    float(wavelength),
                    str(stack_dir / snapshot_image_name(wavelength)),
                )
            refs_path = refs_path or str(stack_dir / "reference.json")
        if not paths:
            raise CommandError(
                "Pass --img<NM> PATH, --image WAVELENGTH:PATH or --stack."
            )
        if not refs_path:
            raise CommandError("Pass --ref or --stack.")
        images = {w: read_plane(p, self.store) for w, p in paths.items()}
        return images, load_reference_bundle(refs_path, self.store)
