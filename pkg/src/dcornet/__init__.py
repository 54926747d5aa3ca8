"""Distance correlation and partial distance correlation for comparing and training networks."""

__version__ = "0.1.0"
