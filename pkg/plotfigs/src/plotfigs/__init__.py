"""plotfigs: deterministic multi-panel figures from cotrain result CSVs."""

__version__ = "0.1.0"

from .render import FigureSpec, NoRowsError, SchemaError, load_rows, render

__all__ = ["FigureSpec", "NoRowsError", "SchemaError", "load_rows", "render"]
