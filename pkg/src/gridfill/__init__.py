"""Statistical enrichment of hourly transformer load data into 1-second series."""

__version__ = "0.1.0"
