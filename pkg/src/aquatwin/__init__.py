"""Water-network digital-twin toolkit: consumption forecasting and maintenance scheduling."""

__version__ = "0.1.0"
