"""Python bindings for the lightcone library."""

from ._lightcone import *  # noqa: F401,F403
from ._lightcone import __version__  # noqa: F401
