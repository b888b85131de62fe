"""Transferability scorers, rank correlation and HPO planning."""

from ._core import *  # noqa: F401,F403
from ._core import __version__, ArrayFormatError, DataError  # noqa: F401
