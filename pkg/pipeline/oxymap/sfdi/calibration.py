"""Calibration of demodulated magnitudes against a reference phantom
of known optical properties, and persistence of reference bundles.
"""

# Standard library imports
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

# Third-party imports
import numpy as np
from pydantic import BaseModel, Field

# Application imports
from common.logger import LoggerFactory
from common.storage import IDataStore, IDataStoreFactory
from oxymap.core.io import read_plane, write_plane
from oxymap.core.raster import ImagePlane, Mask
from oxymap.errors import (
    DimensionMismatchError,
    FrequencyMismatchError,
    WavelengthMismatchError,
    ZeroDenominatorError,
)
from oxymap.photon.forward import IForwardModel
from oxymap.sfdi.demodulation import PhaseTriplet, demodulate

PathLike = Union[Path, str]

logger = LoggerFactory.get("OXYMAP.CALIBRATION")


@dataclass(frozen=True)
class ReferenceMeasurement:
    """Demodulated magnitudes of a reference phantom imaged at one
    wavelength, together with its known optical properties.
    """

    m_dc_ref: ImagePlane
    m_ac_ref: ImagePlane
    known_mua: float
    known_musp: float
    wavelength_nm: float
    fx_ac: float

    def __post_init__(self) -> None:
        if self.m_dc_ref.shape != self.m_ac_ref.shape:
            raise DimensionMismatchError(
                "Reference magnitudes must share dimensions. Received "
                f"{self.m_dc_ref.shape} and {self.m_ac_ref.shape}."
            )
        if not (self.known_mua > 0 and self.known_musp > 0):
            raise ValueError(
                "Reference optical properties must be positive. Received "
                f"mua={self.known_mua}, musp={self.known_musp}."
            )
        if not (self.wavelength_nm > 0 and self.fx_ac > 0):
            raise ValueError(
                "Expected a positive wavelength and AC frequency for the "
                "reference measurement."
            )

    @property
    def shape(self) -> tuple:
        """The `(height, width)` pair."""
        return self.m_dc_ref.shape

    @property
    def ratio(self) -> np.ndarray:
        """The per-pixel AC/DC magnitude ratio of the reference."""
        return self.m_ac_ref.data / self.m_dc_ref.data

    def magnitude(self, fx: float) -> ImagePlane:
        """Selects the reference magnitude for a spatial frequency.

        Raises:
            `FrequencyMismatchError` if the frequency is neither zero
                nor the reference's AC frequency.
        """
        if fx == 0:
            return self.m_dc_ref
        if np.isclose(fx, self.fx_ac):
            return self.m_ac_ref
        raise FrequencyMismatchError(
            f"The reference was measured at 0 and {self.fx_ac} mm^-1, "
            f"not {fx} mm^-1."
        )

    @classmethod
    def from_triplets(
        cls,
        triplet_dc: PhaseTriplet,
        triplet_ac: PhaseTriplet,
        known_mua: float,
        known_musp: float,
    ) -> "ReferenceMeasurement":
        """Demodulates raw reference triplets into a measurement."""
        m_dc, _ = demodulate(triplet_dc)
        _, m_ac = demodulate(triplet_ac)
        return ReferenceMeasurement(
            m_dc_ref=m_dc,
            m_ac_ref=m_ac,
            known_mua=known_mua,
            known_musp=known_musp,
            wavelength_nm=triplet_ac.wavelength_nm or triplet_dc.wavelength_nm,
            fx_ac=triplet_ac.fx,
        )


def calibrate(
    m_samp: ImagePlane,
    ref: ReferenceMeasurement,
    model: IForwardModel,
    fx: float,
    mask: Optional[Mask] = None,
) -> ImagePlane:
    """Converts a demodulated sample magnitude into diffuse reflectance:
    `rd = (m_samp / m_ref) * Rd_pred(ref)`, where `Rd_pred` is the
    forward model's reflectance for the reference's known properties
    at the same frequency. Values outside `(0, 1]` are flagged invalid
    instead of clamped.

    Raises:
        `DimensionMismatchError` if the sample and reference differ
            in shape.

        `ZeroDenominatorError` if the reference magnitude is zero or
            negative at a pixel the sample uses.

    Args:
        m_samp (`ImagePlane`): The sample magnitude.

        ref (`ReferenceMeasurement`): The reference measurement.

        model (`IForwardModel`): The forward model.

        fx (`float`): The spatial frequency of `m_samp`.

        mask (`Mask`): Pixels to calibrate. Defaults to every pixel.

    Returns:
        (`ImagePlane`): The calibrated reflectance.
    """
    # Validate inputs
    m_ref = ref.magnitude(fx)
    if m_samp.shape != m_ref.shape:
        raise DimensionMismatchError(
            f"The sample magnitude {m_samp.shape} and reference magnitude "
            f"{m_ref.shape} differ in shape."
        )
    used = m_samp.valid
    if mask is not None:
        if mask.shape != m_samp.shape:
            raise DimensionMismatchError(
                f"The mask {mask.shape} does not match the sample "
                f"{m_samp.shape}."
            )
        used &= mask.bits
    bad_ref = used & ~(m_ref.data > 0)
    if bad_ref.any():
        raise ZeroDenominatorError(
            f"The reference magnitude is zero, negative or invalid at "
            f"{int(bad_ref.sum())} pixel(s) used by the sample."
        )

    # Scale the magnitude ratio by the reference's predicted reflectance
    rd_pred = model.reflectance(ref.known_mua, ref.known_musp, fx)
    rd = np.full(m_samp.shape, np.nan)
    rd[used] = m_samp.data[used] / m_ref.data[used] * rd_pred

    # Flag values outside (0, 1]
    flagged = used & ~((rd > 0) & (rd <= 1))
    if flagged.any():
        logger.warning(
            f"{int(flagged.sum())} calibrated pixel(s) fell outside (0, 1] "
            f"at fx={fx} mm^-1 and were marked invalid."
        )
        rd[flagged] = np.nan
    return m_samp.with_data(rd, semantic=f"rd@{fx:g}")


class _ReferenceEntry(BaseModel):
    """One wavelength of a persisted reference bundle."""

    wavelength_nm: float = Field(gt=0)
    fx_ac: float = Field(gt=0)
    known_mua: float = Field(gt=0)
    known_musp: float = Field(gt=0)
    m_dc: str
    m_ac: str


class _ReferenceBundle(BaseModel):
    version: int = 1
    references: List[_ReferenceEntry]


def save_reference_bundle(
    refs: Dict[float, ReferenceMeasurement],
    fpath: PathLike,
    store: Optional[IDataStore] = None,
) -> Path:
    """Writes reference measurements as a JSON document with the
    demodulated planes stored next to it.

    Args:
        refs (`dict` of `float`, `ReferenceMeasurement`): The
            measurements keyed by wavelength.

        fpath (`pathlib.Path` | `str`): The JSON document path.

        store (`IDataStore`): The data store. Defaults to the store
            configured for the current environment.

    Returns:
        (`pathlib.Path`): The resolved document path.
    """
    store = store or IDataStoreFactory.get()
    fpath = Path(fpath)
    entries = []
    for wavelength, ref in sorted(refs.items()):
        stem = f"{fpath.stem}_{wavelength:g}"
        write_plane(ref.m_dc_ref, fpath.parent / f"{stem}_dc", store)
        write_plane(ref.m_ac_ref, fpath.parent / f"{stem}_ac", store)
        entries.append(
            _ReferenceEntry(
                wavelength_nm=ref.wavelength_nm,
                fx_ac=ref.fx_ac,
                known_mua=ref.known_mua,
                known_musp=ref.known_musp,
                m_dc=f"{stem}_dc.f32",
                m_ac=f"{stem}_ac.f32",
            )
        )
    with store.open_file(fpath, "w") as f:
        bundle = _ReferenceBundle(references=entries)
        json.dump(bundle.model_dump(), f, indent=2)
    return store.resolve(fpath)


def load_reference_bundle(
    fpath: PathLike, store: Optional[IDataStore] = None
) -> Dict[float, ReferenceMeasurement]:
    """Reads a bundle written by `save_reference_bundle`.

    Args:
        fpath (`pathlib.Path` | `str`): The JSON document path.

        store (`IDataStore`): The data store. Defaults to the store
            configured for the current environment.

    Returns:
        (`dict` of `float`, `ReferenceMeasurement`): The measurements
            keyed by wavelength.
    """
    store = store or IDataStoreFactory.get()
    fpath = Path(fpath)
    with store.open_file(fpath, "r") as f:
        bundle = _ReferenceBundle(**json.load(f))
    refs = {}
    for entry in bundle.references:
        refs[entry.wavelength_nm] = ReferenceMeasurement(
            m_dc_ref=read_plane(fpath.parent / entry.m_dc, store),
            m_ac_ref=read_plane(fpath.parent / entry.m_ac, store),
            known_mua=entry.known_mua,
            known_musp=entry.known_musp,
            wavelength_nm=entry.wavelength_nm,
            fx_ac=entry.fx_ac,
        )
    return refs


def reference_at(
    refs: Dict[float, ReferenceMeasurement], wavelength_nm: float
) -> ReferenceMeasurement:
    """Looks up the reference measured at a wavelength.

    Raises:
        `WavelengthMismatchError` if no reference matches.
    """
    for wavelength, ref in refs.items():
        if np.isclose(wavelength, wavelength_nm):
            return ref
    raise WavelengthMismatchError(
        f"No reference measurement at {wavelength_nm:g} nm. Available: "
        f"{sorted(refs)}."
    )
