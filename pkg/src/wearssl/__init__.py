"""Self-supervised representation learning for multichannel wearable time series."""

__version__ = "0.1.0"
