"""nors: operator learning for stochastic PDEs on regularity-structure features."""

__version__ = "0.1.0"
