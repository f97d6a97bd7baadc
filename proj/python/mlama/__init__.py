"""Mismatched-prior AMP detection for massive MIMO.

Thin bindings over the C++ library: constellations, denoisers, state
evolution, AMP and Monte-Carlo SER sweeps.
"""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401

__version__ = "0.1.0"
