"""AV-exclusive lane design on freeways under endogenous AV/LV mode split."""

__version__ = "0.1.0"
