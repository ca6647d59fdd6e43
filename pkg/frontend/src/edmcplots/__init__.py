"""Figure rendering for experiment CSVs written by the edmc CLI."""

__version__ = "0.1.0"

from edmcplots.render import FigureSpec, SchemaError, render  # noqa: F401
