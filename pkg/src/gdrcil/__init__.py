"""Group-reweighted minimax training for class-imbalanced traffic classification."""

__version__ = "0.1.0"
