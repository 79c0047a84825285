"""Data pipeline and reference checks for code language model training."""

from ._core import *  # noqa: F401,F403
from ._core import Error, __version__  # noqa: F401
