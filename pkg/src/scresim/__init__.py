"""scresim: epidemic-coupled supply-and-demand strategy simulator."""

__version__ = "0.1.0"
