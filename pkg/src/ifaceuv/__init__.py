"""Face reenactment with 3DMM motion control and UV texture refinement."""

__version__ = "0.1.0"
