"""agentloom: composable building blocks for FM-driven agents.

Each subsystem stands alone — goal capture, memory, planning, execution,
responsible-AI plugins, model backends — and the harness assembles them
into a runnable agent from a declarative config. A deterministic scripted
backend makes every pattern testable offline.
"""

from . import execution, interaction, memory, models, planning, rai
from .errors import LoomError

__version__ = "0.1.0"

__all__ = ["interaction", "memory", "planning", "execution", "rai", "models",
           "LoomError", "__version__"]
