"""Synthetic tissue scenes with known hemoglobin concentrations and
scattering, used as ground truth throughout the pipeline.
"""

# Standard library imports
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Literal, Optional, Tuple, Union

# Third-party imports
import numpy as np
import yaml
from django.conf import settings
from pydantic import BaseModel, Field, model_validator
from scipy import ndimage

# Application imports
from common.storage import IDataStore, IDataStoreFactory
from oxymap.chromophore.basis import DEOXY, OXY, ChromophoreBasis, load_basis
from oxymap.core.raster import ImagePlane, StO2Map
from oxymap.errors import WavelengthMismatchError

PathLike = Union[Path, str]

Range = Tuple[float, float]


class PhantomConfig(BaseModel):
    """Describes how to draw a synthetic scene."""

    height: int = Field(
        default_factory=lambda: settings.PHANTOM_SHAPE[0], ge=2
    )
    width: int = Field(default_factory=lambda: settings.PHANTOM_SHAPE[1], ge=2)
    pitch_mm: float = Field(
        default_factory=lambda: settings.PHANTOM_PITCH_MM, gt=0
    )
    style: Literal["flat", "two-region", "smooth-blob"] = "flat"
    sto2_range: Range = Field(
        default_factory=lambda: tuple(settings.PHANTOM_STO2_RANGE)
    )
    thb_range: Range = Field(
        default_factory=lambda: tuple(settings.PHANTOM_THB_RANGE)
    )
    musp_range: Range = Field(
        default_factory=lambda: tuple(settings.PHANTOM_MUSP_RANGE)
    )
    sto2: Optional[float] = Field(default=None, ge=0, le=1)
    """A fixed saturation for flat scenes. Drawn from the range if unset.
    """

    thb: Optional[float] = Field(default=None, gt=0)
    """A fixed total hemoglobin (mM) for flat scenes.
    """

    musp: Optional[float] = Field(default=None, gt=0)
    """A fixed reduced scattering (mm^-1 at 800 nm) for flat scenes.
    """

    scatter_power: float = Field(default=1.0, ge=0)
    """The exponent `b` of `musp(lambda) = musp_800 (lambda / 800)^-b`.
    """

    wavelengths_nm: Tuple[float, ...] = Field(
        default_factory=lambda: tuple(settings.SFDI_WAVELENGTHS_NM)
    )
    blob_sigma_px: Optional[float] = Field(default=None, gt=0)
    """The smoothing scale of smooth-blob fields. Defaults to an
    eighth of the shorter side.
    """

    @model_validator(mode="after")
    def validate_ranges(self) -> "PhantomConfig":
        """Validates that every range is ordered and physical."""
        for name in ("sto2_range", "thb_range", "musp_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"Invalid {name} ({lo}, {hi}).")
        if not 0 <= self.sto2_range[0] <= self.sto2_range[1] <= 1:
            raise ValueError("The saturation range must lie within [0, 1].")
        if self.thb_range[0] <= 0 or self.musp_range[0] <= 0:
            raise ValueError(
                "Hemoglobin and scattering ranges must be positive."
            )
        return self


@dataclass(frozen=True)
class Scene:
    """Co-registered concentration and scattering planes."""

    conc_hbo2: ImagePlane
    conc_hhb: ImagePlane
    musp_planes: Dict[float, ImagePlane]
    basis: ChromophoreBasis
    seed: int

    def __post_init__(self) -> None:
        planes = [self.conc_hbo2, self.conc_hhb, *self.musp_planes.values()]
        if len({p.shape for p in planes}) != 1:
            raise ValueError("Scene planes must be co-registered.")
        if np.any(self.conc_hbo2.data < 0) or np.any(self.conc_hhb.data < 0):
            raise ValueError("Concentrations must be non-negative.")
        if any(np.any(p.data <= 0) for p in self.musp_planes.values()):
            raise ValueError("Scattering must be positive.")

    @property
    def shape(self) -> tuple:
        """The `(height, width)` pair."""
        return self.conc_hbo2.shape

    @property
    def pitch_mm(self) -> float:
        """The pixel pitch."""
        return self.conc_hbo2.pitch_mm

    @property
    def thb(self) -> np.ndarray:
        """Total hemoglobin."""
        return self.conc_hbo2.data + self.conc_hhb.data

    @property
    def sto2(self) -> StO2Map:
        """The exact per-pixel saturation."""
        return StO2Map.from_array(
            self.conc_hbo2.data / self.thb, pitch_mm=self.pitch_mm
        )

    def mua(self, wavelength_nm: float) -> np.ndarray:
        """Synthesizes absorption at a basis wavelength."""
        rows = np.flatnonzero(
            np.isclose(self.basis.wavelengths_nm, wavelength_nm)
        )
        if not rows.size:
            raise WavelengthMismatchError(
                f"The scene basis has no row at {wavelength_nm:g} nm."
            )
        row = self.basis.epsilon[rows[0]]
        return (
            row[self.basis.index(OXY)] * self.conc_hbo2.data
            + row[self.basis.index(DEOXY)] * self.conc_hhb.data
        )

    def musp(self, wavelength_nm: float) -> np.ndarray:
        """Fetches scattering at a scene wavelength."""
        for k, plane in self.musp_planes.items():
            if np.isclose(k, wavelength_nm):
                return plane.data
        raise WavelengthMismatchError(
            f"The scene has no scattering plane at {wavelength_nm:g} nm."
        )

    def with_sto2(self, sto2: np.ndarray) -> "Scene":
        """Creates a scene with the same hemoglobin total and scattering
        but a different saturation.
        """
        return Scene(
            conc_hbo2=self.conc_hbo2.with_data(sto2 * self.thb),
            conc_hhb=self.conc_hhb.with_data((1.0 - sto2) * self.thb),
            musp_planes=self.musp_planes,
            basis=self.basis,
            seed=self.seed,
        )


def _smooth_field(
    rng: np.random.Generator, shape: Tuple[int, int], sigma: float
) -> np.ndarray:
    """Draws a smooth random field scaled to exactly `[0, 1]`."""
    field = ndimage.gaussian_filter(
        rng.standard_normal(shape), sigma=sigma, mode="reflect"
    )
    lo, hi = field.min(), field.max()
    return (field - lo) / (hi - lo) if hi > lo else np.zeros(shape)


def _draw(
    rng: np.random.Generator,
    config: PhantomConfig,
    rng_range: Range,
    fixed: Optional[float],
) -> np.ndarray:
    """Draws one property plane according to the configured style."""
    shape = (config.height, config.width)
    lo, hi = rng_range
    if config.style == "flat":
        value = fixed if fixed is not None else rng.uniform(lo, hi)
        return np.full(shape, value)
    if config.style == "two-region":
        left, right = rng.uniform(lo, hi, size=2)
        plane = np.full(shape, left)
        plane[:, config.width // 2 :] = right
        return plane
    sigma = config.blob_sigma_px or min(shape) / 8.0
    return np.clip(lo + (hi - lo) * _smooth_field(rng, shape, sigma), lo, hi)


def generate_scene(
    config: PhantomConfig,
    seed: int,
    basis: Optional[ChromophoreBasis] = None,
) -> Scene:
    """Draws a reproducible scene. Flat scenes use the fixed values in
    the config when given; two-region scenes split the field into left
    and right halves; smooth-blob scenes draw smooth random fields that
    span each configured range.

    Args:
        config (`PhantomConfig`): The scene description.

        seed (`int`): The random seed.

        basis (`ChromophoreBasis`): The extinction basis. Defaults to
            the shipped hemoglobin table at the config's wavelengths.

    Returns:
        (`Scene`): The scene.
    """
    rng = np.random.default_rng(seed)
    basis = basis or load_basis(wavelengths_nm=config.wavelengths_nm)

    # Draw saturation, total hemoglobin and scattering
    sto2 = _draw(rng, config, config.sto2_range, config.sto2)
    thb = _draw(rng, config, config.thb_range, config.thb)
    musp_800 = _draw(rng, config, config.musp_range, config.musp)

    # Split hemoglobin and scale scattering per wavelength
    pitch = config.pitch_mm
    musp_planes = {
        float(w): ImagePlane(
            musp_800 * (w / 800.0) ** (-config.scatter_power),
            pitch,
            f"musp@{w:g}",
        )
        for w in basis.wavelengths_nm
    }
    return Scene(
        conc_hbo2=ImagePlane(sto2 * thb, pitch, "c_HbO2"),
        conc_hhb=ImagePlane((1.0 - sto2) * thb, pitch, "c_HHb"),
        musp_planes=musp_planes,
        basis=basis,
        seed=seed,
    )


def load_phantom_config(
    fpath: PathLike, store: Optional[IDataStore] = None
) -> PhantomConfig:
    """Reads a phantom config from a YAML or JSON document."""
    store = store or IDataStoreFactory.get()
    with store.open_file(fpath, "r") as f:
        if Path(fpath).suffix == ".json":
            doc = json.load(f)
        else:
            doc = yaml.safe_load(f)
    return PhantomConfig(**(doc or {}))
