"""Forward models predicting spatially-modulated diffuse reflectance
from tissue optical properties.
"""

# Standard library imports
from abc import ABC, abstractmethod
from typing import Union

# Third-party imports
import numpy as np

ArrayLike = Union[float, np.ndarray]


def effective_reflection(n: float) -> float:
    """Computes the effective reflection coefficient of a boundary
    between a medium of refractive index `n` and air, using the
    polynomial fit `-1.440/n^2 + 0.710/n + 0.668 + 0.0636n`.

    Args:
        n (`float`): The refractive index of the medium.

    Returns:
        (`float`): The coefficient.
    """
    return -1.440 / n**2 + 0.710 / n + 0.668 + 0.0636 * n


def boundary_parameter(n: float) -> float:
    """Computes the proportionality constant `A = (1 - Reff) / (2(1 + Reff))`
    relating fluence to its normal derivative at the boundary.
    """
    r_eff = effective_reflection(n)
    return (1.0 - r_eff) / (2.0 * (1.0 + r_eff))


def diffuse_reflectance(
    mua: ArrayLike, musp: ArrayLike, fx: ArrayLike, n: float = 1.4
) -> ArrayLike:
    """Evaluates the diffusion-approximation closed form for diffuse
    reflectance under planar sinusoidal illumination of spatial
    frequency `fx`:

        Rd = 3A a' / ((mueff'/mutr + 1)(mueff'/mutr + 3A))

    with `mutr = mua + musp`, `a' = musp / mutr` and
    `mueff' = sqrt(3 mua mutr + (2 pi fx)^2)`. Inputs broadcast.

    Raises:
        `ValueError` if an absorption or frequency is negative, a
            scattering coefficient is not positive or `n <= 1`.

    Args:
        mua (`float` | `np.ndarray`): Absorption coefficient(s) in mm^-1.

        musp (`float` | `np.ndarray`): Reduced scattering coefficient(s)
            in mm^-1.

        fx (`float` | `np.ndarray`): Spatial frequency in mm^-1.

        n (`float`): The refractive index. Defaults to 1.4.

    Returns:
        (`float` | `np.ndarray`): The dimensionless reflectance.
    """
    # Validate inputs
    mua_a = np.asarray(mua, dtype=np.float64)
    musp_a = np.asarray(musp, dtype=np.float64)
    fx_a = np.asarray(fx, dtype=np.float64)
    if np.any(mua_a < 0):
        raise ValueError("Absorption coefficients may not be negative.")
    if np.any(musp_a <= 0):
        raise ValueError("Reduced scattering coefficients must be positive.")
    if np.any(fx_a < 0):
        raise ValueError("Spatial frequencies may not be negative.")
    if not n > 1:
        raise ValueError(f"Expected a refractive index above 1, received {n}.")

    # Evaluate closed form
    a = boundary_parameter(n)
    mutr = mua_a + musp_a
    albedo = musp_a / mutr
    mueff = np.sqrt(3.0 * mua_a * mutr + (2.0 * np.pi * fx_a) ** 2)
    ratio = mueff / mutr
    rd = 3.0 * a * albedo / ((ratio + 1.0) * (ratio + 3.0 * a))

    return float(rd) if np.ndim(rd) == 0 else rd


class IForwardModel(ABC):
    """Abstract class for models mapping optical properties and a
    spatial frequency to diffuse reflectance.
    """

    model_id: str = ""
    """A short identifier recorded in lookup-table provenance.
    """

    def __init__(self, n: float) -> None:
        """Initializes a new instance of an `IForwardModel`.

        Args:
            n (`float`): The refractive index of the medium.

        Returns:
            `None`
        """
        if not n > 1:
            raise ValueError(
                f"Expected a refractive index above 1, received {n}."
            )
        self.n = n

    @abstractmethod
    def reflectance(
        self, mua: ArrayLike, musp: ArrayLike, fx: ArrayLike
    ) -> ArrayLike:
        """Predicts diffuse reflectance.

        Args:
            mua (`float` | `np.ndarray`): Absorption in mm^-1.

            musp (`float` | `np.ndarray`): Reduced scattering in mm^-1.

            fx (`float` | `np.ndarray`): Spatial frequency in mm^-1.

        Returns:
            (`float` | `np.ndarray`): The reflectance.
        """
        raise NotImplementedError


class DiffusionForwardModel(IForwardModel):
    """The standard diffusion-approximation closed form."""

    model_id = "diffusion"

    def reflectance(
        self, mua: ArrayLike, musp: ArrayLike, fx: ArrayLike
    ) -> ArrayLike:
        return diffuse_reflectance(mua, musp, fx, self.n)


class ForwardModelFactory:
    """A simple factory for instantiating an `IForwardModel`."""

    _REGISTRY = {
        "diffusion": DiffusionForwardModel,
    }

    @staticmethod
    def create(name: str, n: float) -> IForwardModel:
        """Instantiates an `IForwardModel` by name.

        Args:
            name (`str`): The model identifier.

            n (`float`): The refractive index.

        Returns:
            (`IForwardModel`): The model.
        """
        try:
            model = ForwardModelFactory._REGISTRY[name]
            return model(n)
        except KeyError as e:
            raise RuntimeError(
                "Requested a forward model that has not been "
                f"registered, {e}. Expected one of "
                + ", ".join(
                    f'"{k}"' for k in ForwardModelFactory._REGISTRY.keys()
                )
                + "."
            ) from None
