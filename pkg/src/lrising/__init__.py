"""Long-range Ising model: exact enumeration, contours, Monte Carlo and bound checks."""

__version__ = "0.1.0"
