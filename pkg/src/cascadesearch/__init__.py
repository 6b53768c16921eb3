"""Cost-based cascade search for cheap binary video labelling."""

__version__ = "0.1.0"
