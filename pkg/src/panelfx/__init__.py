"""Fixed-effects panel regression for weather-response estimation."""

__version__ = "0.1.0"
