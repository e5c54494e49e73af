"""In-hand re-orientation via finger gaiting: simulation, training, evaluation."""

__version__ = "0.1.0"
