"""Figure rendering for petquant agreement reports."""

__version__ = "0.1.0"

from .schema import ReportBundle, SchemaError, load_report
from .render import METRIC_ORDER, radar_values, render_report
