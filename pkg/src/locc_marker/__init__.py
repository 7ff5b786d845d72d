"""LOCC Marker - conclusive local discrimination and state-marking analysis."""

__version__ = "1.0.0"
