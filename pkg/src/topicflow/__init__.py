"""topicflow: topic discovery and temporal evolution tracking for
timestamped document corpora.

The pipeline discretizes time into (possibly overlapping) epochs, fits a
hierarchical Dirichlet process mixture to each epoch by collapsed Gibbs
sampling, links consecutive epochs in a similarity graph pruned at an
empirical-CDF operating point, and classifies topic births, deaths,
evolutions, splits, and merges from the pruned graph's structure.
"""

from .errors import InputError, PipelineError, ValidationError

__version__ = "0.1.0"

__all__ = ["InputError", "PipelineError", "ValidationError", "__version__"]
