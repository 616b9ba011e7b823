import json

import pytest

from petquant_plots.schema import ReportBundle, SchemaError, load_report, validate_report


def test_fixture_reports_validate(self_report_path, mixed_report_path):
    for path in (self_report_path, mixed_report_path):
        report = load_report(path)
        assert report["n_patients"] == 12
        assert len(report["metrics"]) == 6


def test_missing_field_named_in_error(self_report, tmp_path):
    broken = json.loads(json.dumps(self_report))
    del broken["metrics"][2]["tost"]["ci90"]
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(broken))
    with pytest.raises(SchemaError, match="ci90"):
        load_report(path)


def test_wrong_type_named_in_error(self_report):
    broken = json.loads(json.dumps(self_report))
    broken["metrics"][0]["cp"]["value"] = "high"
    with pytest.raises(SchemaError, match=r"metrics\[0\].cp.value"):
        validate_report(broken)


def test_null_ccc_is_allowed(self_report):
    nulled = json.loads(json.dumps(self_report))
    nulled["metrics"][1]["ccc"] = None
    validate_report(nulled)


def test_unreadable_report(tmp_path):
    with pytest.raises(SchemaError, match="cannot read"):
        load_report(tmp_path / "nope.json")


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(SchemaError, match="invalid JSON"):
        load_report(path)


def test_bundle_label_count_must_match(self_report_path, tmp_path):
    with pytest.raises(SchemaError, match="labels"):
        ReportBundle(report_paths=(self_report_path,), labels=("a", "b"),
                     out_dir=tmp_path)


def test_bundle_rejects_unknown_format(self_report_path, tmp_path):
    with pytest.raises(SchemaError, match="format"):
        ReportBundle(report_paths=(self_report_path,), labels=("a",),
                     out_dir=tmp_path, image_format="bmp")


def test_bundle_needs_reports(tmp_path):
    with pytest.raises(SchemaError, match="at least one"):
        ReportBundle(report_paths=(), labels=(), out_dir=tmp_path)
