"""Fixtures shared across the test modules.
"""

# Third-party imports
import pytest
from django.conf import settings

# Application imports
from oxymap.chromophore.basis import load_basis
from oxymap.neural.engine import load_oracle, load_weights
from oxymap.phantom.scene import PhantomConfig, generate_scene
from oxymap.photon.lut import build_lut


@pytest.fixture(scope="session")
def lut():
    """The default lookup table."""
    return build_lut()


@pytest.fixture(scope="session")
def basis():
    """The shipped hemoglobin basis at every tabulated wavelength."""
    return load_basis()


@pytest.fixture(scope="session")
def flat_scene():
    """A small homogeneous scene with a known saturation."""
    config = PhantomConfig(
        height=96, width=256, sto2=0.7, thb=0.05, musp=1.2
    )
    return generate_scene(config, seed=1)


@pytest.fixture(scope="session")
def blob_scene():
    """A small heterogeneous scene."""
    config = PhantomConfig(height=64, width=96, style="smooth-blob")
    return generate_scene(config, seed=5)


@pytest.fixture(scope="session")
def reference_generator():
    """The committed two-channel generator and its recorded activations."""
    root = settings.REFERENCE_GENERATOR_DIR
    return (
        load_weights(root / "generator.oxw"),
        load_oracle(root / "oracle.oxw"),
    )
