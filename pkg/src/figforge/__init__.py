"""figforge: mine aligned subfigure/subcaption pairs from article package archives."""

__version__ = "0.1.0"
