"""Single-snapshot demodulation of a structured-illumination image by
Fourier-domain filtering.

The DC magnitude is the image low-passed with a sine-profile window
along the modulation axis (all-pass across it). The AC magnitude is
twice the modulus of the single-sideband reconstruction obtained by
keeping only the positive carrier lobe under a Blackman window.
"""

# Standard library imports
from typing import Literal, Optional, Tuple

# Third-party imports
import numpy as np
from django.conf import settings
from pydantic import BaseModel, Field
from scipy import fft

# Application imports
from oxymap.core.raster import ImagePlane, Mask
from oxymap.errors import DimensionMismatchError, FrequencyMismatchError


class SsopFilterSpec(BaseModel):
    """Filter settings for single-snapshot demodulation."""

    fx: float = Field(gt=0)
    """The carrier spatial frequency in mm^-1.
    """

    lowpass_cutoff: float = Field(default=0.5, gt=0, lt=1)
    """The low-pass cutoff as a fraction of the carrier.
    """

    highpass_halfwidth: float = Field(default=0.5, gt=0)
    """The band-pass half-width as a fraction of the carrier.
    """

    modulation_axis: Literal["x", "y"] = "x"
    """The image axis along which the illumination varies.
    """

    border_px: int = Field(default=16, ge=0)
    """The width of the low-confidence border.
    """

    @property
    def highpass_center(self) -> float:
        """The band-pass centre, equal to the carrier."""
        return self.fx

    @classmethod
    def from_settings(cls, fx: float, **overrides) -> "SsopFilterSpec":
        """Creates a spec from the configured window defaults."""
        params = {
            "lowpass_cutoff": settings.SSOP_LOWPASS_CUTOFF,
            "highpass_halfwidth": settings.SSOP_HIGHPASS_HALFWIDTH,
            "border_px": settings.SSOP_BORDER_PX,
        }
        params.update({k: v for k, v in overrides.items() if v is not None})
        return SsopFilterSpec(fx=fx, **params)

    def interior_mask(self, shape: Tuple[int, int]) -> Mask:
        """Selects the pixels outside the low-confidence border."""
        return Mask.interior(shape[0], shape[1], self.border_px)

    def windows(
        self, shape: Tuple[int, int], pitch_mm: float
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Evaluates both frequency-domain windows on an unshifted FFT
        grid whose second axis is the modulation axis.

        Args:
            shape (`tuple` of `int`): The transform size `(rows, cols)`.

            pitch_mm (`float`): The pixel pitch.

        Returns:
            ((`np.ndarray`, `np.ndarray`)): The low-pass and band-pass
                windows, each shaped like the transform.
        """
        carrier = self.fx * pitch_mm
        f = fft.fftfreq(shape[1])

        # Sine-profile low-pass along the modulation axis
        cutoff = self.lowpass_cutoff * carrier
        lowpass = np.where(
            np.abs(f) <= cutoff, np.cos(np.pi * f / (2.0 * cutoff)), 0.0
        )

        # Blackman band over the positive carrier lobe only
        u = (f - carrier) / (self.highpass_halfwidth * carrier)
        bandpass = np.where(
            np.abs(u) <= 1.0,
            0.42 + 0.5 * np.cos(np.pi * u) + 0.08 * np.cos(2.0 * np.pi * u),
            0.0,
        )

        rows = np.ones((shape[0], 1))
        return rows * lowpass[np.newaxis], rows * bandpass[np.newaxis]


def _next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def ssop_demodulate(
    img: ImagePlane,
    spec: SsopFilterSpec,
    workers: Optional[int] = None,
) -> Tuple[ImagePlane, ImagePlane]:
    """Extracts DC and AC magnitudes from a single structured image.
    The image is mirror-padded to the next power of two along each axis
    before transforming; pixels within `spec.border_px` of the edge are
    computed but low-confidence (see `SsopFilterSpec.interior_mask`).
    Invalid input pixels are filled with the mean for the transform and
    stay invalid in both outputs.

    Raises:
        `FrequencyMismatchError` if the carrier is at or above Nyquist.

        `DimensionMismatchError` if the image spans fewer than the
            minimum number of carrier periods.

    Args:
        img (`ImagePlane`): The structured image.

        spec (`SsopFilterSpec`): The filter settings.

        workers (`int`): FFT worker threads. Defaults to `WORKERS`
            from the settings.

    Returns:
        ((`ImagePlane`, `ImagePlane`)): The DC and AC magnitudes.
    """
    # Orient the modulation axis along columns
    data = img.data if spec.modulation_axis == "x" else img.data.T
    height, width = data.shape

    # Validate carrier and extent
    carrier = spec.fx * img.pitch_mm
    if carrier >= 0.5:
        raise FrequencyMismatchError(
            f"The carrier {spec.fx} mm^-1 is at or above Nyquist for a "
            f"{img.pitch_mm} mm pitch."
        )
    if height < 2 or width * carrier < settings.SSOP_MIN_PERIODS:
        raise DimensionMismatchError(
            f"The image spans {width * carrier:.2f} carrier period(s) "
            f"along its modulation axis; at least "
            f"{settings.SSOP_MIN_PERIODS} are required."
        )

    # Fill invalid pixels
    valid = ~np.isnan(data)
    if not valid.any():
        raise DimensionMismatchError("The image holds no valid pixels.")
    filled = np.where(valid, data, data[valid].mean())

    # Mirror-pad to powers of two
    pad_rows = _next_pow2(height) - height
    pad_cols = _next_pow2(width) - width
    top, left = pad_rows // 2, pad_cols // 2
    padded = np.pad(
        filled,
        ((top, pad_rows - top), (left, pad_cols - left)),
        mode="symmetric",
    )

    # Filter in the frequency domain
    workers = workers or settings.WORKERS
    spectrum = fft.fft2(padded, workers=workers)
    lowpass, bandpass = spec.windows(padded.shape, img.pitch_mm)
    dc = fft.ifft2(spectrum * lowpass, workers=workers).real
    ac = 2.0 * np.abs(fft.ifft2(spectrum * bandpass, workers=workers))

    # Crop, clip and restore invalid pixels
    crop = (slice(top, top + height), slice(left, left + width))
    m_dc = np.where(valid, np.maximum(dc[crop], 0.0), np.nan)
    m_ac = np.where(valid, ac[crop], np.nan)
    if spec.modulation_axis == "y":
        m_dc, m_ac = m_dc.T, m_ac.T
    return (
        img.with_data(m_dc, semantic="m_dc_ssop"),
        img.with_data(m_ac, semantic="m_ac_ssop"),
    )
