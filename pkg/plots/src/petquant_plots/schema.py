"""Agreement-report loading and schema validation.

The plotting layer trusts the producing pipeline for every number; this
module only checks that the fields it is about to draw actually exist and
have the right shape, and reports the offending field by name when not.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


class SchemaError(Exception):
    """A report file does not match the agreement JSON schema."""


_METRIC_KEYS = {"metric", "n", "ccc", "ccc_band", "tost", "ba", "cp", "tdi"}
_TOST_KEYS = {"delta", "d_bar", "sd", "p_lower", "p_upper", "ci90", "equivalent"}
_BA_KEYS = {"bias", "limit", "points"}


def _require(mapping, keys, where):
    missing = keys - set(mapping)
    if missing:
        raise SchemaError(f"{where}: missing field(s) {sorted(missing)}")


def _check_number(value, where, optional=False):
    if value is None and optional:
        return
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise SchemaError(f"{where}: expected a number, got {value!r}")


def validate_report(report: dict, where: str = "report") -> None:
    _require(report, {"metrics", "n_patients", "config"}, where)
    _require(report["config"], {"delta", "alpha", "tau"}, f"{where}.config")
    if not isinstance(report["metrics"], list) or not report["metrics"]:
        raise SchemaError(f"{where}.metrics: expected a nonempty list")
    for idx, m in enumerate(report["metrics"]):
        loc = f"{where}.metrics[{idx}]"
        _require(m, _METRIC_KEYS, loc)
        _check_number(m["ccc"], f"{loc}.ccc", optional=True)
        _require(m["tost"], _TOST_KEYS, f"{loc}.tost")
        for key in ("delta", "d_bar", "sd", "p_lower", "p_upper"):
            _check_number(m["tost"][key], f"{loc}.tost.{key}")
        ci = m["tost"]["ci90"]
        if not isinstance(ci, (list, tuple)) or len(ci) != 2:
            raise SchemaError(f"{loc}.tost.ci90: expected [lo, hi]")
        if not isinstance(m["tost"]["equivalent"], bool):
            raise SchemaError(f"{loc}.tost.equivalent: expected a boolean")
        _require(m["ba"], _BA_KEYS, f"{loc}.ba")
        _check_number(m["ba"]["bias"], f"{loc}.ba.bias")
        _check_number(m["ba"]["limit"], f"{loc}.ba.limit")
        if not isinstance(m["ba"]["points"], list):
            raise SchemaError(f"{loc}.ba.points: expected a list of [y, diff] pairs")
        _require(m["cp"], {"value", "ci95"}, f"{loc}.cp")
        _check_number(m["cp"]["value"], f"{loc}.cp.value")
        _require(m["tdi"], {"tau", "value"}, f"{loc}.tdi")
        _check_number(m["tdi"]["value"], f"{loc}.tdi.value")


def load_report(path: str | Path) -> dict:
    path = Path(path)
    try:
        report = json.loads(path.read_text())
    except OSError as exc:
        raise SchemaError(f"cannot read report {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
    validate_report(report, where=path.name)
    return report


@dataclass(frozen=True)
class ReportBundle:
    """One or more agreement reports plus display labels and output target."""

    report_paths: tuple[Path, ...]
    labels: tuple[str, ...]
    out_dir: Path
    image_format: str = "svg"
    reports: tuple[dict, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if len(self.report_paths) == 0:
            raise SchemaError("bundle needs at least one report")
        if len(self.labels) != len(self.report_paths):
            raise SchemaError(
                f"got {len(self.labels)} labels for {len(self.report_paths)} reports"
            )
        if self.image_format not in ("svg", "png"):
            raise SchemaError(f"image format must be svg or png, got {self.image_format!r}")
        if not self.reports:
            object.__setattr__(
                self, "reports", tuple(load_report(p) for p in self.report_paths)
            )
