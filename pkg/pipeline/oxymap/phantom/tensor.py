"""The three-channel network input: two flat-field-corrected
single-phase images and a checkerboard of reference AC/DC ratios.
"""

# Standard library imports
from dataclasses import dataclass
from typing import Optional, Tuple

# Third-party imports
import numpy as np
from django.conf import settings

# Application imports
from common.geometry import PixelBox
from oxymap.core.raster import ImagePlane
from oxymap.errors import DimensionMismatchError, ZeroDenominatorError
from oxymap.sfdi.calibration import ReferenceMeasurement


def checkerboard_parity(
    shape: Tuple[int, int], origin: Tuple[int, int] = (0, 0)
) -> np.ndarray:
    """Selects the pixels that carry the first wavelength's ratio. Parity
    is absolute: pixel `(r, c)` of the full frame is selected when
    `r + c` is even, and `origin` locates the array inside that frame.
    """
    rows = np.arange(shape[0])[:, np.newaxis] + origin[0]
    cols = np.arange(shape[1])[np.newaxis, :] + origin[1]
    return (rows + cols) % 2 == 0


def in_phase_crop(
    frame: Tuple[int, int],
    size: int,
    row: int,
    col: int,
    flip_h: bool,
    flip_v: bool,
) -> Tuple[int, int, bool, bool]:
    """Adjusts a square crop of an in-phase frame, and the mirrors to
    apply to it, so that pixel `(0, 0)` of the mirrored crop still
    carries the first wavelength. An out-of-phase crop moves by one
    pixel; when no moved crop fits inside the frame the mirrors are
    dropped instead.

    Args:
        frame (`tuple` of `int`): The frame's `(height, width)`.

        size (`int`): The crop side.

        row (`int`): The proposed first row.

        col (`int`): The proposed first column.

        flip_h (`bool`): Whether the crop will be mirrored left-right.

        flip_v (`bool`): Whether the crop will be mirrored top-bottom.

    Returns:
        (`tuple`): The `(row, col, flip_h, flip_v)` to use.
    """
    if (row + col + (int(flip_h) + int(flip_v)) * (size - 1)) % 2 == 0:
        return row, col, flip_h, flip_v
    for dr, dc in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        r, c = row + dr, col + dc
        if 0 <= r <= frame[0] - size and 0 <= c <= frame[1] - size:
            return r, c, flip_h, flip_v
    return row, col, False, False


@dataclass(frozen=True)
class InputTensor:
    """A network input shaped `(3, H, W)`."""

    data: np.ndarray
    origin: Tuple[int, int] = (0, 0)
    """The absolute position of pixel `(0, 0)` in the full frame.
    """

    pitch_mm: float = 1.0

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 3 or data.shape[0] != 3:
            raise DimensionMismatchError(
                f"Expected an input tensor shaped (3, H, W), received "
                f"{data.shape}."
            )
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "origin", tuple(int(v) for v in self.origin))

    @property
    def shape(self) -> tuple:
        """The `(height, width)` pair."""
        return self.data.shape[1:]

    @property
    def ch1(self) -> np.ndarray:
        """The corrected image at the shorter wavelength."""
        return self.data[0]

    @property
    def ch2(self) -> np.ndarray:
        """The corrected image at the longer wavelength."""
        return self.data[1]

    @property
    def ch3(self) -> np.ndarray:
        """The reference-ratio checkerboard."""
        return self.data[2]

    def crop(self, box: PixelBox) -> "InputTensor":
        """Crops to a box given in this tensor's coordinates, carrying
        the absolute origin along so that checkerboard parity survives.
        """
        return InputTensor(
            data=box.crop(self.data),
            origin=(self.origin[0] + box.row, self.origin[1] + box.col),
            pitch_mm=self.pitch_mm,
        )

    def flip(self, horizontal: bool, vertical: bool) -> "InputTensor":
        """Mirrors the tensor. Mirroring an axis of length `n` moves the
        pixel at `n - 1` to the front, so the origin shifts by
        `(n - 1) % 2` along that axis. The origin of a mirrored tensor
        therefore tracks checkerboard parity rather than position.
        """
        data = self.data
        row, col = self.origin
        if horizontal:
            data = data[:, :, ::-1]
            col += (data.shape[2] - 1) % 2
        if vertical:
            data = data[:, ::-1, :]
            row += (data.shape[1] - 1) % 2
        return InputTensor(data, (row, col), self.pitch_mm)


def _corrected(img: ImagePlane, ref: ReferenceMeasurement) -> np.ndarray:
    dc = ref.m_dc_ref.data
    if np.any(~(dc > 0)):
        raise ZeroDenominatorError(
            f"The {ref.wavelength_nm:g} nm reference holds "
            f"{int(np.sum(~(dc > 0)))} non-positive DC pixel(s)."
        )
    return img.data / dc


def build_input_tensor(
    img659: ImagePlane,
    img851: ImagePlane,
    ref659: ReferenceMeasurement,
    ref851: ReferenceMeasurement,
    multiple: Optional[int] = None,
) -> InputTensor:
    """Encodes two single-phase structured images as a network input.
    The first two channels are the images divided by their reference
    DC magnitude. The third alternates, pixel by pixel, between the two
    references' AC/DC ratios, with the first wavelength at even
    `r + c`. The result is cropped from the top-left corner to the
    largest size that is a multiple of `multiple`, so parity is kept.

    Raises:
        `DimensionMismatchError` if the planes are not co-registered or
            smaller than one multiple.

        `ZeroDenominatorError` if a reference magnitude is not positive.

    Args:
        img659 (`ImagePlane`): The image at the shorter wavelength.

        img851 (`ImagePlane`): The image at the longer wavelength.

        ref659 (`ReferenceMeasurement`): The matching reference.

        ref851 (`ReferenceMeasurement`): The matching reference.

        multiple (`int`): The size granularity. Defaults to
            `INPUT_SIZE_MULTIPLE` from the settings.

    Returns:
        (`InputTensor`): The input.
    """
    # Validate dimensions
    shapes = {img659.shape, img851.shape, ref659.shape, ref851.shape}
    if len(shapes) != 1:
        raise DimensionMismatchError(
            f"Input planes are not co-registered: {sorted(shapes)}."
        )
    height, width = img659.shape
    multiple = multiple or settings.INPUT_SIZE_MULTIPLE
    out_h, out_w = height - height % multiple, width - width % multiple
    if out_h == 0 or out_w == 0:
        raise DimensionMismatchError(
            f"A {height}x{width} plane is smaller than the input size "
            f"multiple of {multiple}."
        )

    # Flat-field correct both images
    ch1 = _corrected(img659, ref659)
    ch2 = _corrected(img851, ref851)

    # Interleave the reference ratios
    ratio659, ratio851 = ref659.ratio, ref851.ratio
    if not (np.all(np.isfinite(ratio659)) and np.all(np.isfinite(ratio851))):
        raise ZeroDenominatorError("Reference ratios must be finite.")
    ch3 = np.where(checkerboard_parity((height, width)), ratio659, ratio851)

    box = PixelBox(row=0, col=0, height=out_h, width=out_w)
    return InputTensor(
        data=box.crop(np.stack([ch1, ch2, ch3])),
        origin=(0, 0),
        pitch_mm=img659.pitch_mm,
    )
