"""earlywarn: cost-aware alarm policies over prefix-wise prediction streams."""

__version__ = "0.1.0"
