"""Robot development cycle: component graphs, capability exploration,
feature-space clustering, cognitive cores and task matching."""

__version__ = "0.1.0"
