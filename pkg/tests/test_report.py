import csv
import json

import numpy as np
import pytest

from psyeval.errors import CsvError, HeaderError, RangeError
from psyeval.report import (
    CompareOptions,
    canonical_json,
    cmd_compare,
    emit_report,
    load_criterion,
    load_responses,
    undefined,
)
from psyeval.criterion import ocb_spec
from psyeval.scale import Coding, ResponseMatrix, parse_scale_spec
from synth import bfi_like_responses, write_matrix

TWO = parse_scale_spec(
    {
        "name": "two",
        "likert": {"min": 1, "max": 5},
        "items": [{"id": 1, "text": "a", "reverse": False}, {"id": 2, "text": "b", "reverse": True}],
        "facets": [{"name": "F", "items": [1, 2]}],
        "domains": [{"name": "D", "facets": ["F"]}],
    }
)


def test_smallest_ingest(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("Item1,Item2\n1,5\n3,2\n")
    m = load_responses(p, TWO)
    assert m.values.tolist() == [[1, 5], [3, 2]]
    assert m.subject_ids == ("1", "2")


def test_range_error_coordinates(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("Item1,Item2\n1,7\n")
    with pytest.raises(RangeError) as exc:
        load_responses(p, TWO)
    assert (exc.value.row, exc.value.column) == (1, "Item2")


def test_ingest_errors(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("Item1\n1\n")
    with pytest.raises(HeaderError):
        load_responses(p, TWO)
    p.write_text("Item1,Item2\n1,x\n")
    with pytest.raises(CsvError):
        load_responses(p, TWO)
    p.write_text("Item1,Item2\n1\n")
    with pytest.raises(CsvError):
        load_responses(p, TWO)
    with pytest.raises(CsvError):
        load_responses(tmp_path / "absent.csv", TWO)


def test_dataset_shaped_file(tmp_path, spec):
    m = bfi_like_responses(spec, 5, seed=1, coding=Coding.REVERSE_APPLIED)
    p = tmp_path / "psi.csv"
    extra = {f"Q{k}": ["text"] * 5 for k in range(1, 33)}
    extra.update({f"OCB{k}": [3] * 5 for k in range(1, 11)})
    write_matrix(p, m, extra)
    got = load_responses(p, spec, Coding.REVERSE_APPLIED)
    assert got.coding is Coding.REVERSE_APPLIED
    assert np.array_equal(got.values, m.values)
    assert load_criterion(p, ocb_spec()).values.shape == (5, 10)


def test_missing_cells_become_nan(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("Item1,Item2\n1,\nNA,2\n")
    m = load_responses(p, TWO)
    assert np.isnan(m.values[0, 1]) and np.isnan(m.values[1, 0])


@pytest.fixture(scope="module")
def human(spec):
    return bfi_like_responses(spec, 250, seed=10)


@pytest.fixture(scope="module")
def self_report(spec, human):
    return cmd_compare(human, human, spec)


def test_self_comparison_fixed_point(self_report):
    for level, block in self_report["descriptives"].items():
        assert block["mu_mae"] == 0 and block["sigma_mae"] == 0
        assert block["hai"] == pytest.approx(1.0, abs=1e-12)
    for model, entry in self_report["structural"].items():
        for factor, c in entry["congruence"].items():
            assert c["tcc"] == pytest.approx(1.0, abs=1e-12)
            assert c["loading_mae"] == 0
    sim = self_report["similarity"]
    assert sim["status"] == "paired"
    assert all(c["mae"] == 0 and c["r"] == pytest.approx(1.0) for c in sim["domains"].values())


def test_report_layout(self_report, spec):
    assert set(self_report["descriptives"]) == {"item", "facet", "domain"}
    assert len(self_report["descriptives"]["item"]["units"]) == 60
    assert len(self_report["descriptives"]["facet"]["units"]) == 15
    assert len(self_report["descriptives"]["domain"]["units"]) == 5
    assert set(self_report["structural"]) == {f"TFM:{d}" for d in spec.domain_names} | {"FFM"}
    assert "decisions" in self_report["metadata"]
    assert set(self_report["reliability"]["human"]) == set(spec.facet_names) | set(spec.domain_names)


def test_shuffled_domain_breaks_pairing(spec, human):
    rng = np.random.default_rng(0)
    vals = human.values.copy()
    cols = [spec.item_ids.index(i) for i in spec.domain("Openness").item_ids]
    vals[:, cols] = vals[rng.permutation(len(vals))][:, cols]
    sim = ResponseMatrix(human.subject_ids, human.item_ids, vals, human.coding, human.likert)
    rep = cmd_compare(human, sim, spec)
    doms = rep["similarity"]["domains"]
    assert abs(doms["Openness"]["r"]) < 0.2
    assert doms["Extraversion"]["r"] == pytest.approx(1.0)
    i = rep["descriptives"]["domain"]["units"].index("Openness")
    assert rep["descriptives"]["domain"]["human"][i]["mu"] == pytest.approx(rep["descriptives"]["domain"]["simulated"][i]["mu"])


def test_unpaired_when_ids_differ(spec, human):
    other = bfi_like_responses(spec, 100, seed=11, ids=[f"x{k}" for k in range(100)])
    rep = cmd_compare(human, other, spec, CompareOptions(label="persona"))
    assert rep["similarity"] == {"status": "unpaired"}
    assert "persona" in rep["pca"]["domain"]["centroid"]


def test_undefined_cells(spec, human):
    flat = ResponseMatrix(human.subject_ids, human.item_ids, np.full(human.values.shape, 3.0), human.coding, human.likert)
    rep = cmd_compare(human, flat, spec)
    data = json.loads(rep.to_json())
    assert data["descriptives"]["domain"]["hai"] == {"undefined": "zero-variance"}
    assert data["descriptives"]["domain"]["simulated"][0]["skewness"] == {"undefined": "zero-variance"}
    assert data["discriminant"]["simulated"] == {"undefined": "zero-variance"}
    assert data["structural"]["FFM"]["congruence"] == {"undefined": "fit-failed"}


def test_canonical_json():
    assert canonical_json({"b": 1.23456789, "a": [float("nan")], "c": undefined("x")}) == (
        '{\n  "a": [\n    {\n      "undefined": "non-finite"\n    }\n  ],\n  "b": 1.23457,\n  "c": {\n    "undefined": "x"\n  }\n}\n'
    )


def test_emission_is_byte_identical(tmp_path, self_report, spec, human):
    a = emit_report(self_report, ("json", "csv"), tmp_path / "a")
    b = emit_report(cmd_compare(human, human, spec), ("json", "csv"), tmp_path / "b")
    assert [p.name for p in a] == [p.name for p in b]
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
    with open(tmp_path / "a" / "pca_domain.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["source", "dim1", "dim2"]
    assert {r[0] for r in rows[1:]} == {"human", "simulated"}
    names = {p.name for p in a}
    assert {"report.json", "hai_radar.csv", "similarity.csv", "structural_fit.csv", "congruence.csv"} <= names


def test_json_only(tmp_path, self_report):
    assert [p.name for p in emit_report(self_report, ("json",), tmp_path)] == ["report.json"]


def test_criterion_block(spec, human):
    rng = np.random.default_rng(5)
    totals = {sid: float(v) for sid, v in zip(human.subject_ids, rng.uniform(1, 5, len(human.subject_ids)))}
    rep = cmd_compare(human, human, spec, criterion_totals={"OCB": (totals, totals)})
    block = rep["criterion"]["OCB"]
    assert list(block["human"]) == ["Extraversion", "Agreeableness", "Neuroticism", "Conscientiousness", "Openness"]
    assert all(v == 0 for v in block["delta"].values())
