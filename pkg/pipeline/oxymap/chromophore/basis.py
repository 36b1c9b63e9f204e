"""Chromophore extinction bases and their on-disk representation.
"""

# Standard library imports
import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

# Third-party imports
import numpy as np
from django.conf import settings
from pydantic import BaseModel, Field, model_validator

# Application imports
from common.storage import IDataStore, IDataStoreFactory
from oxymap.errors import (
    MissingChromophoreError,
    SingularBasisError,
    WavelengthMismatchError,
)

PathLike = Union[Path, str]

OXY = "HbO2"
DEOXY = "HHb"

UNIT_SCALES = {
    # mua[mm^-1] = ln(10) * eps[cm^-1 M^-1] * c[mM] * 1e-3 [M/mM] / 10 [mm/cm]
    "cm^-1 M^-1": np.log(10.0) * 1e-4,
    "mm^-1 mM^-1": 1.0,
}
"""Factors converting tabulated extinction units to absorption in
mm^-1 per millimolar concentration.
"""


@dataclass(frozen=True)
class ChromophoreBasis:
    """Extinction coefficients of `N` chromophores at `W` wavelengths,
    in mm^-1 per unit concentration (mM for the shipped table).
    """

    wavelengths_nm: np.ndarray
    names: tuple
    epsilon: np.ndarray
    """The `(W, N)` extinction matrix.
    """

    units: str = "mm^-1 mM^-1"

    def __post_init__(self) -> None:
        # Normalize fields
        wavelengths = np.array(self.wavelengths_nm, dtype=np.float64)
        epsilon = np.array(self.epsilon, dtype=np.float64)
        wavelengths.setflags(write=False)
        epsilon.setflags(write=False)
        object.__setattr__(self, "wavelengths_nm", wavelengths)
        object.__setattr__(self, "epsilon", epsilon)
        object.__setattr__(self, "names", tuple(self.names))

        # Validate dimensions
        n_wave, n_chrom = len(wavelengths), len(self.names)
        if epsilon.shape != (n_wave, n_chrom):
            raise ValueError(
                f"Expected an extinction matrix of shape ({n_wave}, "
                f"{n_chrom}), received {epsilon.shape}."
            )
        if n_chrom < 2 or n_wave < n_chrom:
            raise SingularBasisError(
                f"A basis needs at least two chromophores and as many "
                f"wavelengths as chromophores. Received {n_wave} "
                f"wavelength(s) for {n_chrom} chromophore(s)."
            )
        if len(set(wavelengths.tolist())) != n_wave:
            raise WavelengthMismatchError("Basis wavelengths must be unique.")

        # Validate coefficients
        if np.any(epsilon < 0) or not np.all(np.isfinite(epsilon)):
            raise ValueError("Extinction coefficients must be finite and >= 0.")
        if np.linalg.matrix_rank(epsilon) < n_chrom:
            raise SingularBasisError(
                "The extinction columns are linearly dependent at "
                f"{wavelengths.tolist()} nm."
            )

    def index(self, name: str) -> int:
        """Finds the column of a chromophore.

        Raises:
            `MissingChromophoreError` if the basis lacks the chromophore.
        """
        try:
            return self.names.index(name)
        except ValueError:
            raise MissingChromophoreError(
                f'The basis does not contain "{name}". Available '
                f"chromophores: {', '.join(self.names)}."
            ) from None

    def select(
        self, wavelengths_nm: Sequence[float], tolerance_nm: float = 5.0
    ) -> "ChromophoreBasis":
        """Creates a basis for the requested wavelengths, taking each row
        from the nearest tabulated wavelength.

        Raises:
            `WavelengthMismatchError` if a wavelength lies further than
                the tolerance from every tabulated wavelength.

        Args:
            wavelengths_nm (`list` of `float`): The wavelengths.

            tolerance_nm (`float`): The largest accepted distance to a
                tabulated wavelength. Defaults to 5 nm.

        Returns:
            (`ChromophoreBasis`): The sub-basis, labelled with the
                requested wavelengths.
        """
        rows = []
        for wavelength in wavelengths_nm:
            dist = np.abs(self.wavelengths_nm - wavelength)
            best = int(np.argmin(dist))
            if dist[best] > tolerance_nm:
                raise WavelengthMismatchError(
                    f"No tabulated extinction within {tolerance_nm} nm of "
                    f"{wavelength} nm."
                )
            rows.append(best)
        return ChromophoreBasis(
            wavelengths_nm=np.asarray(wavelengths_nm, dtype=np.float64),
            names=self.names,
            epsilon=self.epsilon[rows],
            units=self.units,
        )

    def absorption(self, concentrations: np.ndarray) -> np.ndarray:
        """Synthesizes absorption from concentrations (Beer-Lambert).

        Args:
            concentrations (`np.ndarray`): An array shaped `(N, ...)`.

        Returns:
            (`np.ndarray`): Absorption shaped `(W, ...)`.
        """
        conc = np.asarray(concentrations, dtype=np.float64)
        return np.tensordot(self.epsilon, conc, axes=(1, 0))


class _BasisDocument(BaseModel):
    """The JSON layout of a basis file."""

    wavelengths_nm: List[float] = Field(min_length=2)
    names: List[str] = Field(min_length=2)
    epsilon_rows: List[List[float]]
    units: str = "mm^-1 mM^-1"
    source: str = ""

    @model_validator(mode="after")
    def validate_units(self) -> "_BasisDocument":
        """Validates that the units can be converted."""
        if self.units not in UNIT_SCALES:
            raise ValueError(
                f'Unsupported extinction units "{self.units}". Expected '
                + " or ".join(f'"{k}"' for k in UNIT_SCALES)
                + "."
            )
        return self


def load_basis(
    fpath: Optional[PathLike] = None,
    wavelengths_nm: Optional[Sequence[float]] = None,
    store: Optional[IDataStore] = None,
) -> ChromophoreBasis:
    """Reads a basis file, converting its coefficients to mm^-1 per
    unit concentration and optionally selecting wavelengths.

    Args:
        fpath (`pathlib.Path` | `str`): The basis file. Defaults to
            `HEMOGLOBIN_BASIS_FPATH` from the settings.

        wavelengths_nm (`list` of `float`): Wavelengths to select.
            Defaults to every tabulated wavelength.

        store (`IDataStore`): The data store. Defaults to the store
            configured for the current environment.

    Returns:
        (`ChromophoreBasis`): The basis.
    """
    store = store or IDataStoreFactory.get()
    fpath = fpath or settings.HEMOGLOBIN_BASIS_FPATH
    with store.open_file(fpath, "r") as f:
        doc = _BasisDocument(**json.load(f))
    basis = ChromophoreBasis(
        wavelengths_nm=doc.wavelengths_nm,
        names=doc.names,
        epsilon=np.asarray(doc.epsilon_rows) * UNIT_SCALES[doc.units],
    )
    return basis.select(wavelengths_nm) if wavelengths_nm else basis
