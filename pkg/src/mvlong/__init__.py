"""Multi-view longitudinal classification with deep integrative discriminant analysis."""

__version__ = "0.1.0"
