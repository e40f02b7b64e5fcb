import json
import subprocess
import sys

import pytest

from psyeval.cli import main
from synth import bfi_like_responses, write_matrix

LEATHER = "I wear a lot of leather.,I have boots I always wear.,I sleep in late during the day.,I listen to metal music.,I have black spiky hair."


@pytest.fixture()
def files(tmp_path, spec):
    h = tmp_path / "h.csv"
    s = tmp_path / "s.csv"
    write_matrix(h, bfi_like_responses(spec, 120, seed=1), {f"OCB{k}": [1 + (j * k) % 5 for j in range(120)] for k in range(1, 11)})
    write_matrix(s, bfi_like_responses(spec, 120, seed=2), {f"OCB{k}": [1 + (j + k) % 5 for j in range(120)] for k in range(1, 11)})
    return tmp_path, h, s


def test_compare_smoke(files):
    tmp, h, s = files
    assert main(["compare", "--human", str(h), "--sim", str(s), "--out", str(tmp / "r")]) == 0
    report = json.loads((tmp / "r" / "report.json").read_text())
    assert "OCB" in report["criterion"]
    manifest = json.loads((tmp / "r" / "manifest.json").read_text())
    assert len(manifest["config_hash"]) == 64 and manifest["seeds"] == {"seed": 0}
    assert (tmp / "r" / "pca_item.csv").exists()


def test_score_describe_cfa_pca(files):
    tmp, h, s = files
    assert main(["score", "--human", str(h), "--out", str(tmp / "a")]) == 0
    assert (tmp / "a" / "scores_domain.csv").read_text().startswith("id,Extraversion")
    assert main(["describe", "--human", str(h), "--out", str(tmp / "b")]) == 0
    assert main(["cfa", "--human", str(h), "--out", str(tmp / "c")]) == 0
    assert "FFM" in json.loads((tmp / "c" / "cfa.json").read_text())
    assert main(["pca", "--human", str(h), "--sim", str(s), "--out", str(tmp / "d")]) == 0
    assert (tmp / "d" / "pca_facet.csv").read_text().startswith("source,dim1,dim2")


def test_simulate_is_deterministic(tmp_path):
    shapes = tmp_path / "shapes.csv"
    cols = ",".join(f"Low{k},High{k}" for k in range(1, 6))
    row = "unfriendly,friendly,lethargic,energetic,unassertive,assertive,timid,bold,inactive,active"
    shapes.write_text(f"id,{cols},Level\na,{row},9\nb,{row},2\n")
    for out in ("x", "y"):
        args = ["simulate", "--method", "shape", "--profiles", str(shapes), "--responder", "mock", "--seed", "7", "--out", str(tmp_path / out)]
        assert main(args) == 0
    assert (tmp_path / "x" / "simulated.csv").read_bytes() == (tmp_path / "y" / "simulated.csv").read_bytes()


def test_simulate_persona(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("id,Sentence1,Sentence2,Sentence3,Sentence4,Sentence5\nz," + LEATHER + "\n")
    assert main(["simulate", "--method", "persona", "--profiles", str(p), "--out", str(tmp_path / "o")]) == 0
    assert len((tmp_path / "o" / "simulated.csv").read_text().splitlines()) == 2


def test_ablate_without_transcripts_is_usage_error(files, capsys):
    tmp, h, _ = files
    with pytest.raises(SystemExit) as exc:
        main(["ablate", "--human", str(h), "--out", str(tmp / "o")])
    assert exc.value.code == 2


def test_http_without_endpoint_is_usage_error(tmp_path, capsys):
    p = tmp_path / "p.csv"
    p.write_text("id,Sentence1,Sentence2,Sentence3,Sentence4,Sentence5\nz," + LEATHER + "\n")
    code = main(["simulate", "--method", "persona", "--profiles", str(p), "--responder", "http", "--out", str(tmp_path / "o")])
    assert code == 2
    assert "UsageError" in capsys.readouterr().err


def test_domain_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("Item1\n9\n")
    assert main(["score", "--human", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert capsys.readouterr().err.startswith("HeaderError:")


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "psyeval", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "0.1.0"


def test_ablate_runs(tmp_path, spec):
    ids = [f"s{k}" for k in range(5)]
    h = tmp_path / "h.csv"
    write_matrix(h, bfi_like_responses(spec, 5, seed=3, ids=ids))
    t = tmp_path / "t.csv"
    t.write_text(
        "id," + ",".join(f"Q{k}" for k in range(1, 33)) + "\n"
        + "\n".join(sid + "," + ",".join(f"{sid} says {q}" for q in range(32)) for sid in ids) + "\n"
    )
    assert main(["ablate", "--human", str(h), "--transcripts", str(t), "--out", str(tmp_path / "o")]) == 0
    runs = json.loads((tmp_path / "o" / "ablation.json").read_text())["runs"]
    assert [r["removed_question"] for r in runs] == list(range(33))
