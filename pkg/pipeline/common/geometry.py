"""Provides helper classes related to pixel-space geometries
(regions of interest, patch windows and interior margins).
"""

# Standard library imports
from typing import List, Tuple

# Third-party imports
import numpy as np
from pydantic import BaseModel, Field, model_validator


class PixelBox(BaseModel):
    """Simple data structure for an axis-aligned rectangle of pixels
    anchored at its top-left corner in absolute raster coordinates.
    """

    row: int = Field(ge=0)
    """The index of the first row.
    """

    col: int = Field(ge=0)
    """The index of the first column.
    """

    height: int = Field(gt=0)
    """The number of rows.
    """

    width: int = Field(gt=0)
    """The number of columns.
    """

    @property
    def bottom(self) -> int:
        """The exclusive end row."""
        return self.row + self.height

    @property
    def right(self) -> int:
        """The exclusive end column."""
        return self.col + self.width

    @property
    def slices(self) -> Tuple[slice, slice]:
        """The row and column slices selecting the box."""
        return slice(self.row, self.bottom), slice(self.col, self.right)

    @classmethod
    def parse(cls, text: str) -> "PixelBox":
        """Creates a new `PixelBox` from a "row,col,height,width" string,
        the form used on the command line.

        Raises:
            `ValueError` if the string does not hold four integers.

        Args:
            text (`str`): The comma-delimited box.

        Returns:
            (`PixelBox`): The box.
        """
        try:
            row, col, height, width = (int(v) for v in text.split(","))
        except ValueError:
            raise ValueError(
                f'Unable to parse pixel box "{text}". Expected four '
                "comma-separated integers: row,col,height,width."
            ) from None
        return PixelBox(row=row, col=col, height=height, width=width)

    @classmethod
    def full(cls, height: int, width: int) -> "PixelBox":
        """Creates a box covering an entire raster."""
        return PixelBox(row=0, col=0, height=height, width=width)

    def fits_within(self, height: int, width: int) -> bool:
        """Determines whether the box lies entirely inside a raster
        of the given size.

        Args:
            height (`int`): The raster height.

            width (`int`): The raster width.

        Returns:
            (`bool`): `True` if the box is contained and `False` otherwise.
        """
        return self.bottom <= height and self.right <= width

    def crop(self, array: np.ndarray) -> np.ndarray:
        """Crops the trailing two axes of an array to the box.

        Raises:
            `ValueError` if the box does not fit inside the array.

        Args:
            array (`np.ndarray`): An array shaped `(..., H, W)`.

        Returns:
            (`np.ndarray`): A view of the cropped region.
        """
        if not self.fits_within(*array.shape[-2:]):
            raise ValueError(
                f"The box {self.model_dump()} lies outside an array of "
                f"shape {array.shape[-2:]}."
            )
        rows, cols = self.slices
        return array[..., rows, cols]

    def shrink(self, margin: int) -> "PixelBox":
        """Shrinks the box by a margin on every side.

        Raises:
            `ValueError` if the margin consumes the whole box.

        Args:
            margin (`int`): The number of pixels to remove per side.

        Returns:
            (`PixelBox`): The interior box.
        """
        if 2 * margin >= min(self.height, self.width):
            raise ValueError(
                f"A margin of {margin} pixel(s) leaves no interior in a "
                f"{self.height}x{self.width} box."
            )
        return PixelBox(
            row=self.row + margin,
            col=self.col + margin,
            height=self.height - 2 * margin,
            width=self.width - 2 * margin,
        )

    def tile(
        self, size: int, row_stride: int, col_stride: int
    ) -> List["PixelBox"]:
        """Splits the box into square windows of the given size placed
        at the given strides, starting from the top-left corner. Windows
        that would extend past the box are skipped.

        Raises:
            `ValueError` if the size or strides are not positive.

        Args:
            size (`int`): The window side length.

            row_stride (`int`): The step between window rows.

            col_stride (`int`): The step between window columns.

        Returns:
            (`list` of `PixelBox`): The windows in row-major order.
        """
        # Validate arguments
        if size <= 0 or row_stride <= 0 or col_stride <= 0:
            raise ValueError(
                "Unable to tile box. Expected a positive window size "
                "and positive strides."
            )

        # Place windows
        windows = []
        for r in range(self.row, self.bottom - size + 1, row_stride):
            for c in range(self.col, self.right - size + 1, col_stride):
                windows.append(PixelBox(row=r, col=c, height=size, width=size))
        return windows

    @model_validator(mode="after")
    def validate_extent(self) -> "PixelBox":
        """Validates that the box has a two-dimensional extent."""
        if self.height < 1 or self.width < 1:
            raise ValueError("The pixel box must be two-dimensional.")
        return self
