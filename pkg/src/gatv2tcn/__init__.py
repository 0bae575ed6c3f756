"""GATv2-TCN player performance forecasting on dynamic player-interaction graphs."""

__version__ = "0.1.0"
