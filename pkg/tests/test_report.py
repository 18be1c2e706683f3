import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from dentalfusion.evaluation import evaluate_predictions
from dentalfusion.explain import ShapAttribution, summarize
from dentalfusion.learn import ConfigError
from dentalfusion.pipeline import RunConfig
from dentalfusion.report import RunManifest, TableRow, config_hash, importance_svg, pct, write_detail, write_table


def read(path):
    return list(csv.reader(open(path, newline="")))


def test_pct():
    assert pct(0.9876) == "98.76" and pct(1.0) == "100.00" and pct(0.0) == "0.00"


def test_table_without_rule(tmp_path):
    write_table(tmp_path / "t.csv", [TableRow("random_forest", "cv", 0.9, 0.95, 0.01, 0.02),
                                     TableRow("random_forest", "holdout", 0.8, 0.85)])
    rows = read(tmp_path / "t.csv")
    assert rows[0] == ["model", "evaluation", "f1", "f1_sd", "auc", "auc_sd"]
    assert rows[1] == ["random_forest", "cv", "90.00", "1.00", "95.00", "2.00"]
    assert rows[2] == ["random_forest", "holdout", "80.00", "", "85.00", ""]


def test_table_rule_column(tmp_path):
    write_table(tmp_path / "t.csv", [TableRow("a", "cv", 0.5, 0.5, rule="mean"), TableRow("b", "cv", 0.5, 0.5)])
    rows = read(tmp_path / "t.csv")
    assert rows[0][:2] == ["model", "rule"] and rows[1][1] == "mean" and rows[2][1] == ""


def test_detail_full_precision(tmp_path):
    m = evaluate_predictions(np.array([0, 1, 1]), np.array([0, 1, 0]), np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]]), 2)
    write_detail(tmp_path / "d.csv", [("models", "tree", "holdout", m)])
    rows = read(tmp_path / "d.csv")
    assert rows[1][:4] == ["models", "tree", "holdout", "holdout"]
    assert float(rows[1][4]) == m.macro_f1


def _summary(values, names):
    v = np.asarray(values, dtype=float)
    return summarize([ShapAttribution("0", v, np.zeros(len(v)))], names)


def test_svg_well_formed():
    s = _summary([[0.3, 0.1, 0.0], [0.2, 0.0, 0.5]], ["a<b", "c&d", "e"])
    root = ET.fromstring(importance_svg(s, "Top & bottom", ["young", "senior"], k=2))
    assert root.tag.endswith("svg")
    texts = [t.text for t in root.iter() if t.tag.endswith("text")]
    assert "a<b" in texts and "Top & bottom" in texts and "senior" in texts
    bars = [r for r in root.iter() if r.tag.endswith("rect") and r.find("{*}title") is not None]
    assert len(bars) == 2 * 2


def test_svg_all_zero():
    s = _summary(np.zeros((2, 4)), list("abcd"))
    ET.fromstring(importance_svg(s))


def test_manifest(tmp_path):
    (tmp_path / "sub").mkdir()
    out = tmp_path / "sub" / "x.csv"
    out.write_text("a\n")
    data = tmp_path / "data.csv"
    data.write_text("h\n1\n")
    m = RunManifest("ingest", ["x"], {"seed": 1}, 1)
    m.set_dataset(data, 1)
    m.add_output(out, tmp_path)
    m.write(tmp_path / "manifest.json")
    d = json.loads((tmp_path / "manifest.json").read_text())
    assert d["outputs"][0]["path"] == "sub/x.csv" and len(d["outputs"][0]["sha256"]) == 64
    assert d["config_hash"] == config_hash({"seed": 1}) and d["finished"] is not None
    assert d["dataset_rows"] == 1 and d["tool_version"]
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})


# --- run config ---------------------------------------------------------------------


def test_config_precedence(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 3, "task": "gender", "fusion": "mean"}))
    cfg = RunConfig.load(p, seed=9, fusion=None)
    assert cfg.seed == 9 and cfg.task == "gender" and cfg.fusion == "mean"
    assert RunConfig.load(None).mode == "per-tooth"


@pytest.mark.parametrize("d", [
    {"seed": -1}, {"task": "height"}, {"mode": "both"}, {"fusion": "product"}, {"families": []},
    {"families": ["svm"]}, {"families": ["tree", "tree"]}, {"folds": 1}, {"colour": 1},
    {"hyperparameters": {"tree": {"max_depth": 0}}},
])
def test_config_rejects(d):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(d)


def test_derived_seeds_stable():
    a, b = RunConfig(seed=5).derived_seeds()
    assert (a, b) == RunConfig(seed=5).derived_seeds() and a != b
    assert RunConfig(seed=6).derived_seeds() != (a, b)
