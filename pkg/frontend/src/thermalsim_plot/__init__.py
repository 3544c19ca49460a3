"""Figure rendering for the thermalsim CSV output.

This package talks to the simulator only through its documented CSV
schemas; it never imports the simulator itself.
"""

from .io import SchemaError, find_csv, find_csv_group, load_table
from .figures import ALL_FIGURES, fit_loglog, render_figure

__all__ = [
    "ALL_FIGURES",
    "SchemaError",
    "find_csv",
    "find_csv_group",
    "fit_loglog",
    "load_table",
    "render_figure",
]
