"""Simulation of SDEs driven by Brownian motion run on an inverse-subordinator clock."""

from .errors import *  # noqa: F401,F403
from .noise import *  # noqa: F401,F403
from .time_change import *  # noqa: F401,F403
from .coefficients import *  # noqa: F401,F403
from .schemes import *  # noqa: F401,F403
from .diagnostics import *  # noqa: F401,F403
from .harness import *  # noqa: F401,F403
from .cli import cli_main

__version__ = "0.1.0"
