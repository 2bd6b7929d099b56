"""Shipped expression fixtures, the identity corpus and derived constants."""
from .loader import *  # noqa: F401,F403
from .loader import __all__  # noqa: F401
