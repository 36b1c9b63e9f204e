"""Single-snapshot (Fourier-domain) demodulation.
"""

from .filtering import SsopFilterSpec, ssop_demodulate  # noqa: F401
from .pipeline import ssop_sto2  # noqa: F401
