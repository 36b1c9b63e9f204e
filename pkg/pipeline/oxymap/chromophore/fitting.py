"""Beer-Lambert chromophore fitting and tissue oxygen saturation.
"""

# Standard library imports
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Union

# Third-party imports
import numpy as np
from django.conf import settings
from scipy.optimize import nnls

# Application imports
from common.logger import LoggerFactory
from oxymap.chromophore.basis import DEOXY, OXY, ChromophoreBasis
from oxymap.core.raster import ImagePlane, Mask, StO2Map
from oxymap.errors import (
    DimensionMismatchError,
    MissingChromophoreError,
    WavelengthMismatchError,
)
from oxymap.photon.properties import OpticalPropertyMap

MuaStack = Union[Mapping[float, ImagePlane], Sequence[OpticalPropertyMap]]

logger = LoggerFactory.get("OXYMAP.CHROMOPHORE")


@dataclass(frozen=True)
class ConcentrationMap:
    """Per-pixel chromophore concentrations, in the units of the basis
    used to fit them. Unresolved pixels are NaN in every channel.
    """

    names: tuple
    data: np.ndarray
    """The concentrations shaped `(N, H, W)`.
    """

    pitch_mm: float = 1.0

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 3 or data.shape[0] != len(self.names):
            raise DimensionMismatchError(
                f"Expected {len(self.names)} concentration channel(s), "
                f"received an array of shape {data.shape}."
            )
        if np.any(data[~np.isnan(data)] < 0):
            raise ValueError("Concentrations must be non-negative.")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def shape(self) -> tuple:
        """The `(height, width)` pair."""
        return self.data.shape[1:]

    def channel(self, name: str) -> ImagePlane:
        """Fetches one chromophore's concentration plane.

        Raises:
            `MissingChromophoreError` if the map lacks the chromophore.
        """
        if name not in self.names:
            raise MissingChromophoreError(
                f'The concentration map has no "{name}" channel. '
                f"Available channels: {', '.join(self.names)}."
            )
        return ImagePlane(
            self.data[self.names.index(name)], self.pitch_mm, f"c_{name}"
        )


def _as_mua_stack(mua_stack: MuaStack) -> Dict[float, ImagePlane]:
    """Normalizes the accepted stack forms to a wavelength-keyed dict."""
    if isinstance(mua_stack, Mapping):
        return {float(k): v for k, v in mua_stack.items()}
    stack = {}
    for op_map in mua_stack:
        if op_map.wavelength_nm is None:
            raise WavelengthMismatchError(
                "Every optical property map in a stack needs a wavelength."
            )
        stack[float(op_map.wavelength_nm)] = op_map.mua
    return stack


def _nnls_columns(
    epsilon: np.ndarray, mua: np.ndarray, workers: Optional[int] = None
) -> np.ndarray:
    """Solves `min ||epsilon c - mua||` subject to `c >= 0` once per
    column of absorption samples. Columns are split into bands of
    `FIT_BAND_PIXELS` solved on a thread pool; each column is solved
    independently, so results do not depend on `workers`.

    Args:
        epsilon (`np.ndarray`): The `(W, N)` basis.

        mua (`np.ndarray`): The `(W, P)` absorption samples.

        workers (`int`): Worker threads. Defaults to `WORKERS` from the
            settings.

    Returns:
        (`np.ndarray`): The `(N, P)` concentrations.
    """
    conc = np.zeros((epsilon.shape[1], mua.shape[1]))
    band = settings.FIT_BAND_PIXELS

    def solve_band(start: int) -> None:
        for j in range(start, min(start + band, mua.shape[1])):
            conc[:, j], _ = nnls(epsilon, mua[:, j])

    workers = workers or settings.WORKERS
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(solve_band, range(0, mua.shape[1], band)))
    return conc


def fit_chromophores(
    mua_stack: MuaStack,
    basis: ChromophoreBasis,
    mask: Optional[Mask] = None,
    workers: Optional[int] = None,
) -> ConcentrationMap:
    """Solves `mua(lambda_i) = sum_n eps_n(lambda_i) c_n` per pixel by
    non-negative least squares.

    Raises:
        `WavelengthMismatchError` if the stack's wavelengths differ from
            the basis wavelengths.

        `DimensionMismatchError` if the planes are not co-registered.

    Args:
        mua_stack (`dict` of `float`, `ImagePlane` | `list` of
            `OpticalPropertyMap`): One absorption plane per basis
            wavelength.

        basis (`ChromophoreBasis`): The extinction basis.

        mask (`Mask`): Pixels to fit. Defaults to every valid pixel.

        workers (`int`): Worker threads. Defaults to `WORKERS`.

    Returns:
        (`ConcentrationMap`): The concentrations.
    """
    # Match planes to basis rows
    stack = _as_mua_stack(mua_stack)
    planes = []
    for wavelength in basis.wavelengths_nm:
        matches = [k for k in stack if np.isclose(k, wavelength)]
        if not matches:
            raise WavelengthMismatchError(
                f"No absorption plane at {wavelength:g} nm. The basis "
                f"expects {basis.wavelengths_nm.tolist()} nm; the stack "
                f"holds {sorted(stack)} nm."
            )
        planes.append(stack[matches[0]])
    if len(stack) != len(planes):
        raise WavelengthMismatchError(
            f"The stack holds {sorted(stack)} nm but the basis covers "
            f"{basis.wavelengths_nm.tolist()} nm."
        )
    shapes = {p.shape for p in planes}
    if len(shapes) != 1:
        raise DimensionMismatchError(
            f"Absorption planes are not co-registered: {sorted(shapes)}."
        )

    # Gather pixels valid at every wavelength
    mua = np.stack([p.data for p in planes])
    selected = np.all(~np.isnan(mua), axis=0)
    if mask is not None:
        if mask.shape != selected.shape:
            raise DimensionMismatchError(
                f"The mask {mask.shape} does not match the planes "
                f"{selected.shape}."
            )
        selected &= mask.bits

    # Fit
    conc = np.full((len(basis.names),) + selected.shape, np.nan)
    if selected.any():
        conc[:, selected] = _nnls_columns(
            basis.epsilon, mua[:, selected], workers
        )
    return ConcentrationMap(
        names=basis.names, data=conc, pitch_mm=planes[0].pitch_mm
    )


def sto2(conc: ConcentrationMap) -> StO2Map:
    """Computes oxygen saturation `c_HbO2 / (c_HbO2 + c_HHb)` per pixel.
    Pixels without hemoglobin are marked invalid.

    Raises:
        `MissingChromophoreError` if either hemoglobin channel is absent.

    Args:
        conc (`ConcentrationMap`): The concentrations.

    Returns:
        (`StO2Map`): The saturation.
    """
    oxy = conc.channel(OXY).data
    deoxy = conc.channel(DEOXY).data
    total = oxy + deoxy
    out = np.full(total.shape, np.nan)
    ok = total > 0
    out[ok] = oxy[ok] / total[ok]
    n_empty = int(np.sum(total == 0))
    if n_empty:
        logger.warning(
            f"{n_empty} pixel(s) hold no hemoglobin and were marked invalid."
        )
    return StO2Map.from_array(out, pitch_mm=conc.pitch_mm)


def sto2_from_mua(
    mua_stack: MuaStack,
    basis: ChromophoreBasis,
    mask: Optional[Mask] = None,
    workers: Optional[int] = None,
) -> StO2Map:
    """Fits chromophores to an absorption stack and reduces them to
    oxygen saturation.
    """
    return sto2(fit_chromophores(mua_stack, basis, mask, workers))
