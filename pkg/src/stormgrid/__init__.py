"""Hurricane and storm-surge vulnerability of power grids and the communities they serve."""

__version__ = "0.1.0"
