"""Monte Carlo simulation of coalescing walks and the exact small-system oracle."""

from .core import *  # noqa: F401,F403
from .oracle import *  # noqa: F401,F403
from .stats import *  # noqa: F401,F403
from . import core, oracle, stats

__all__ = core.__all__ + oracle.__all__ + stats.__all__
