"""Raster types shared by every stage of the pipeline, plus masking
and the normalized mean absolute error used to score oxygenation maps.
"""

# Standard library imports
from dataclasses import dataclass, field
from typing import Optional

# Third-party imports
import numpy as np

# Application imports
from oxymap.errors import (
    DimensionMismatchError,
    EmptyMaskError,
    ZeroDenominatorError,
)


@dataclass(frozen=True)
class ImagePlane:
    """A two-dimensional, row-major grid of real-valued samples with a
    physical pixel pitch. Invalid pixels hold NaN, which is distinct
    from every physical value (including zero) and is skipped by all
    statistics.
    """

    data: np.ndarray
    """The samples, shaped `(height, width)`, stored as float64.
    """

    pitch_mm: float = 1.0
    """The pixel pitch in millimetres.
    """

    semantic: str = ""
    """A free-text tag describing the quantity (e.g., "rd_dc@659").
    """

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise DimensionMismatchError(
                "An image plane must be two-dimensional with at least one "
                f"pixel. Received an array of shape {data.shape}."
            )
        if not self.pitch_mm > 0:
            raise ValueError(
                f"Expected a positive pixel pitch, received {self.pitch_mm}."
            )
        if np.isinf(data).any():
            raise ValueError("Image planes may not contain infinite values.")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        """The number of rows."""
        return self.data.shape[0]

    @property
    def width(self) -> int:
        """The number of columns."""
        return self.data.shape[1]

    @property
    def shape(self) -> tuple:
        """The `(height, width)` pair."""
        return self.data.shape

    @property
    def valid(self) -> np.ndarray:
        """A boolean array marking pixels that hold a value."""
        return ~np.isnan(self.data)

    def with_data(
        self, data: np.ndarray, semantic: Optional[str] = None
    ) -> "ImagePlane":
        """Creates a plane with the same pitch holding new samples."""
        return ImagePlane(
            data=data,
            pitch_mm=self.pitch_mm,
            semantic=self.semantic if semantic is None else semantic,
        )

    @classmethod
    def constant(
        cls,
        value: float,
        height: int,
        width: int,
        pitch_mm: float = 1.0,
        semantic: str = "",
    ) -> "ImagePlane":
        """Creates a plane filled with a single value."""
        return ImagePlane(
            data=np.full((height, width), value, dtype=np.float64),
            pitch_mm=pitch_mm,
            semantic=semantic,
        )


@dataclass(frozen=True)
class Mask:
    """A boolean selection of pixels; `True` marks pixels that take
    part in statistics and metrics.
    """

    bits: np.ndarray
    """The selection, shaped `(height, width)`.
    """

    def __post_init__(self) -> None:
        bits = np.array(self.bits, dtype=bool, copy=True)
        if bits.ndim != 2:
            raise DimensionMismatchError(
                f"A mask must be two-dimensional, received {bits.shape}."
            )
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def shape(self) -> tuple:
        """The `(height, width)` pair."""
        return self.bits.shape

    @property
    def count(self) -> int:
        """The number of selected pixels."""
        return int(self.bits.sum())

    @classmethod
    def full(cls, height: int, width: int) -> "Mask":
        """Creates a mask selecting every pixel."""
        return Mask(bits=np.ones((height, width), dtype=bool))

    @classmethod
    def from_plane(cls, plane: ImagePlane) -> "Mask":
        """Creates a mask selecting the valid pixels of a plane."""
        return Mask(bits=plane.valid)

    @classmethod
    def interior(cls, height: int, width: int, margin: int) -> "Mask":
        """Creates a mask excluding a border of the given width."""
        bits = np.zeros((height, width), dtype=bool)
        bits[margin : height - margin, margin : width - margin] = True
        return Mask(bits=bits)

    def __and__(self, other: "Mask") -> "Mask":
        _require_same_shape(self.shape, other.shape, "mask", "mask")
        return Mask(bits=self.bits & other.bits)


@dataclass(frozen=True)
class StO2Map:
    """A fractional tissue oxygen saturation map. Every valid value
    lies in `[0, 1]`.
    """

    plane: ImagePlane

    def __post_init__(self) -> None:
        values = self.plane.data[self.plane.valid]
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError(
                "Oxygen saturation values must lie in [0, 1]. Received a "
                f"range of [{values.min()}, {values.max()}]."
            )

    @property
    def data(self) -> np.ndarray:
        """The saturation samples."""
        return self.plane.data

    @property
    def shape(self) -> tuple:
        """The `(height, width)` pair."""
        return self.plane.shape

    @classmethod
    def from_array(
        cls, data: np.ndarray, pitch_mm: float = 1.0, semantic: str = "sto2"
    ) -> "StO2Map":
        """Wraps an array of saturation values in a new map."""
        return StO2Map(
            plane=ImagePlane(data=data, pitch_mm=pitch_mm, semantic=semantic)
        )


@dataclass(frozen=True)
class PlaneStatistics:
    """Summary statistics over the valid pixels of a plane."""

    count: int
    mean: float
    std: float
    minimum: float
    maximum: float
    extra: dict = field(default_factory=dict)


def _require_same_shape(a: tuple, b: tuple, name_a: str, name_b: str) -> None:
    """Raises a `DimensionMismatchError` when two shapes differ."""
    if tuple(a) != tuple(b):
        raise DimensionMismatchError(
            f"Expected the {name_a} and {name_b} to share dimensions. "
            f"Received {tuple(a)} and {tuple(b)}."
        )


def apply_mask(plane: ImagePlane, mask: Mask) -> ImagePlane:
    """Marks the pixels a mask excludes as invalid. Selected pixels are
    returned unchanged.

    Raises:
        `DimensionMismatchError` if the mask and plane differ in shape.

    Args:
        plane (`ImagePlane`): The plane to mask.

        mask (`Mask`): The selection of pixels to keep.

    Returns:
        (`ImagePlane`): The masked plane.
    """
    _require_same_shape(plane.shape, mask.shape, "plane", "mask")
    data = np.where(mask.bits, plane.data, np.nan)
    return plane.with_data(data)


def plane_statistics(plane: ImagePlane) -> PlaneStatistics:
    """Computes the count, mean, standard deviation and range of the
    valid pixels of a plane.

    Raises:
        `EmptyMaskError` if the plane holds no valid pixels.

    Args:
        plane (`ImagePlane`): The plane.

    Returns:
        (`PlaneStatistics`): The statistics.
    """
    values = plane.data[plane.valid]
    if values.size == 0:
        raise EmptyMaskError("The plane holds no valid pixels (empty mask).")
    return PlaneStatistics(
        count=int(values.size),
        mean=float(values.mean()),
        std=float(values.std()),
        minimum=float(values.min()),
        maximum=float(values.max()),
    )


def nmae(pred: StO2Map, gt: StO2Map, mask: Mask) -> float:
    """Computes the normalized mean absolute error between a predicted
    and a ground-truth saturation map over the masked pixels:
    `sum(|pred - gt|) / sum(gt)`. Pixels that are invalid in either
    map are excluded along with the pixels the mask drops.

    Raises:
        `DimensionMismatchError` if the maps and mask differ in shape.

        `EmptyMaskError` if no pixel remains after masking.

        `ZeroDenominatorError` if the ground truth sums to zero.

    Args:
        pred (`StO2Map`): The predicted saturation.

        gt (`StO2Map`): The reference saturation.

        mask (`Mask`): The pixels to score.

    Returns:
        (`float`): The error, equivalent to an absolute percentage error.
    """
    # Validate shapes
    _require_same_shape(pred.shape, gt.shape, "prediction", "ground truth")
    _require_same_shape(gt.shape, mask.shape, "ground truth", "mask")

    # Select scored pixels
    selected = mask.bits & pred.plane.valid & gt.plane.valid
    if not selected.any():
        raise EmptyMaskError("The mask selects no valid pixels (empty mask).")

    # Accumulate numerator and denominator
    p = pred.data[selected]
    g = gt.data[selected]
    denominator = float(np.sum(g))
    if denominator == 0.0:
        raise ZeroDenominatorError(
            "The ground truth sums to zero over the masked pixels."
        )
    return float(np.sum(np.abs(p - g))) / denominator
