"""Neural trajectory prediction for cut-in maneuvers over lossy V2V links."""

__version__ = "0.1.0"
