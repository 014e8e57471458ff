from .broadcast import BroadcastEnv, ReplayLog, synth_competitors
from .memory import MemoryConfig, MemoryEnv, synthetic_items
from .toy import PoissonToyEnv

__all__ = [
    "BroadcastEnv", "ReplayLog", "synth_competitors",
    "MemoryConfig", "MemoryEnv", "synthetic_items",
    "PoissonToyEnv",
]
