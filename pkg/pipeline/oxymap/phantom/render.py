"""Renders what a camera sees when a scene is illuminated with planar
or sinusoidal light, including the reference phantom and the full
conventional SFDI acquisition.
"""

# Standard library imports
from typing import Dict, Optional, Sequence, Tuple

# Third-party imports
import numpy as np
from django.conf import settings

# Application imports
from oxymap.core.raster import ImagePlane
from oxymap.errors import FrequencyMismatchError
from oxymap.photon.forward import ForwardModelFactory, IForwardModel
from oxymap.phantom.scene import Scene
from oxymap.sfdi.calibration import ReferenceMeasurement
from oxymap.sfdi.demodulation import PHASES_RAD, PhaseTriplet


def _default_model() -> IForwardModel:
    return ForwardModelFactory.create(
        settings.FORWARD_MODEL, settings.REFRACTIVE_INDEX
    )


def render_optical(
    mua: np.ndarray,
    musp: np.ndarray,
    fx: float,
    phase_rad: float,
    pitch_mm: float,
    noise_sigma: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    model: Optional[IForwardModel] = None,
    semantic: str = "",
) -> ImagePlane:
    """Renders a structured image from optical property planes:
    `Rd(0) + Rd(fx) sin(2 pi fx x + phase)`, with `x` the column
    position in mm. Planar illumination (`fx = 0`) renders `Rd(0)`.
    Noise is Gaussian with a standard deviation proportional to the
    noise-free signal.

    Raises:
        `FrequencyMismatchError` if `fx` is at or above Nyquist.

    Args:
        mua (`np.ndarray`): Absorption in mm^-1.

        musp (`np.ndarray`): Reduced scattering in mm^-1.

        fx (`float`): The spatial frequency in mm^-1.

        phase_rad (`float`): The illumination phase.

        pitch_mm (`float`): The pixel pitch.

        noise_sigma (`float`): The relative noise level. Defaults to 0.

        rng (`np.random.Generator`): The noise source. Defaults to a
            generator seeded with zero.

        model (`IForwardModel`): The forward model. Defaults to the
            configured model.

        semantic (`str`): A tag for the rendered plane.

    Returns:
        (`ImagePlane`): The image.
    """
    if fx * pitch_mm >= 0.5:
        raise FrequencyMismatchError(
            f"A frequency of {fx} mm^-1 is at or above Nyquist for a "
            f"{pitch_mm} mm pitch."
        )
    model = model or _default_model()

    # Evaluate the noise-free signal
    signal = model.reflectance(mua, musp, 0.0)
    if fx > 0:
        x_mm = np.arange(mua.shape[1]) * pitch_mm
        carrier = np.sin(2.0 * np.pi * fx * x_mm + phase_rad)[np.newaxis]
        signal = signal + model.reflectance(mua, musp, fx) * carrier

    # Add signal-proportional noise
    if noise_sigma > 0:
        rng = rng or np.random.default_rng(0)
        signal = signal + rng.normal(0.0, 1.0, signal.shape) * (
            noise_sigma * np.abs(signal)
        )
    return ImagePlane(signal, pitch_mm, semantic)


def render_structured(
    scene: Scene,
    wavelength_nm: float,
    fx: float,
    phase_rad: float,
    noise_sigma: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    model: Optional[IForwardModel] = None,
) -> ImagePlane:
    """Renders a scene at one wavelength. Absorption is synthesized from
    the scene's hemoglobin through its basis.

    Raises:
        `WavelengthMismatchError` if the wavelength is not in the basis.

        `FrequencyMismatchError` if `fx` is at or above Nyquist.

    Args:
        scene (`Scene`): The scene.

        wavelength_nm (`float`): The wavelength.

        fx (`float`): The spatial frequency in mm^-1.

        phase_rad (`float`): The illumination phase.

        noise_sigma (`float`): The relative noise level. Defaults to 0.

        rng (`np.random.Generator`): The noise source. Defaults to a
            generator seeded with the scene seed.

        model (`IForwardModel`): The forward model.

    Returns:
        (`ImagePlane`): The image.
    """
    rng = rng or np.random.default_rng(scene.seed)
    return render_optical(
        scene.mua(wavelength_nm),
        scene.musp(wavelength_nm),
        fx,
        phase_rad,
        scene.pitch_mm,
        noise_sigma,
        rng,
        model,
        semantic=f"img@{wavelength_nm:g}",
    )


def render_triplet(
    scene: Scene,
    wavelength_nm: float,
    fx: float,
    noise_sigma: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    model: Optional[IForwardModel] = None,
) -> PhaseTriplet:
    """Renders the three phase-shifted images of one frequency."""
    rng = rng or np.random.default_rng(scene.seed)
    images = [
        render_structured(
            scene, wavelength_nm, fx, phase, noise_sigma, rng, model
        )
        for phase in PHASES_RAD
    ]
    return PhaseTriplet(*images, fx=fx, wavelength_nm=wavelength_nm)


def render_sfdi_stack(
    scene: Scene,
    wavelengths_nm: Optional[Sequence[float]] = None,
    fx_ac: Optional[float] = None,
    noise_sigma: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    model: Optional[IForwardModel] = None,
) -> Dict[float, Tuple[PhaseTriplet, PhaseTriplet]]:
    """Renders the conventional acquisition: two frequencies and three
    phases at every wavelength (24 images for four wavelengths).

    Returns:
        (`dict` of `float`, (`PhaseTriplet`, `PhaseTriplet`)): The DC
            and AC triplets keyed by wavelength.
    """
    wavelengths_nm = wavelengths_nm or settings.SFDI_WAVELENGTHS_NM
    fx_ac = settings.FX_AC if fx_ac is None else fx_ac
    rng = rng or np.random.default_rng(scene.seed)
    return {
        float(w): (
            render_triplet(scene, w, 0.0, noise_sigma, rng, model),
            render_triplet(scene, w, fx_ac, noise_sigma, rng, model),
        )
        for w in wavelengths_nm
    }


def make_reference(
    shape: Tuple[int, int],
    pitch_mm: float,
    wavelength_nm: float,
    fx_ac: Optional[float] = None,
    mua: Optional[float] = None,
    musp: Optional[float] = None,
    model: Optional[IForwardModel] = None,
) -> ReferenceMeasurement:
    """Renders and demodulates a noise-free homogeneous reference
    phantom of known optical properties.

    Args:
        shape (`tuple` of `int`): The image size.

        pitch_mm (`float`): The pixel pitch.

        wavelength_nm (`float`): The wavelength.

        fx_ac (`float`): The AC frequency. Defaults to `FX_AC`.

        mua (`float`): Known absorption. Defaults to `REFERENCE_MUA`.

        musp (`float`): Known scattering. Defaults to `REFERENCE_MUSP`.

        model (`IForwardModel`): The forward model.

    Returns:
        (`ReferenceMeasurement`): The reference.
    """
    fx_ac = settings.FX_AC if fx_ac is None else fx_ac
    mua = settings.REFERENCE_MUA if mua is None else mua
    musp = settings.REFERENCE_MUSP if musp is None else musp
    mua_plane = np.full(shape, mua)
    musp_plane = np.full(shape, musp)

    def triplet(fx: float) -> PhaseTriplet:
        images = [
            render_optical(mua_plane, musp_plane, fx, p, pitch_mm, model=model)
            for p in PHASES_RAD
        ]
        return PhaseTriplet(*images, fx=fx, wavelength_nm=wavelength_nm)

    return ReferenceMeasurement.from_triplets(
        triplet(0.0), triplet(fx_ac), mua, musp
    )
