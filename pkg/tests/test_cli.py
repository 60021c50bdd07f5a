import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from convex_smooth.cli import EXIT_FAILED, EXIT_IO, EXIT_OK, EXIT_PIPELINE, EXIT_SPEC, main

SPECS = Path(__file__).resolve().parents[1] / "demos" / "specs"

GLUE = {"dim": 1, "pipeline": "glue", "epsilon": 0.1,
        "function": {"op": "poly", "terms": [[1, 2]], "of": {"op": "var", "index": 0}},
        "grid": {"box": [[-2, 2]], "resolution": 201}, "options": {"m_max": 3}, "seed": 0}


def write(tmp_path, doc, name="spec.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return str(path)


def test_run_writes_report_and_samples(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", write(tmp_path, GLUE), "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] is True and report["seed"] == 0
    with open(out / "samples.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x1", "f", "g", "df1", "dg1"]
    assert len(rows) == 202
    assert "glue: passed" in capsys.readouterr().out


def test_report_is_bit_identical_across_runs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    spec = write(tmp_path, GLUE)
    assert main(["run", spec, "--out", str(a)]) == EXIT_OK
    assert main(["run", spec, "--out", str(b)]) == EXIT_OK
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert (a / "samples.csv").read_bytes() == (b / "samples.csv").read_bytes()


def test_grid_scale_and_seed_flags(tmp_path):
    out = tmp_path / "out"
    assert main(["run", write(tmp_path, GLUE), "--out", str(out), "--grid-scale", "0.5",
                 "--seed", "7"]) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["seed"] == 7
    assert report["grid"]["resolution"] == [101]


def test_malformed_function_reports_location(tmp_path, capsys):
    code = main(["run", str(SPECS / "malformed.json"), "--out", str(tmp_path)])
    err = capsys.readouterr().err
    assert code == EXIT_SPEC
    assert "SpecParse" in err and "$.function" in err and "power 3" in err
    assert not (tmp_path / "report.json").exists()


def test_invalid_json_reports_line_and_column(tmp_path, capsys):
    code = main(["run", write(tmp_path, '{"dim": 1,\n "pipeline": }')])
    assert code == EXIT_SPEC
    assert "line 2" in capsys.readouterr().err


@pytest.mark.parametrize("doc, where", [
    ({**GLUE, "pipeline": "nope"}, "$.pipeline"),
    ({**GLUE, "epsilon": -1}, "$.epsilon"),
    ({**GLUE, "dim": 0}, "$.dim"),
])
def test_bad_fields_are_located(tmp_path, capsys, doc, where):
    assert main(["run", write(tmp_path, doc)]) == EXIT_SPEC
    assert where in capsys.readouterr().err


def test_missing_file_is_an_io_error(tmp_path):
    assert main(["run", str(tmp_path / "absent.json")]) == EXIT_IO


def test_pipeline_error_exit_code(tmp_path, capsys):
    doc = {"dim": 2, "pipeline": "fine_c0", "efun": 0.1,
           "function": {"op": "abs", "of": {"op": "var", "index": 0}},
           "grid": {"box": [[-1, 1], [-1, 1]], "resolution": 11}}
    assert main(["run", write(tmp_path, doc), "--out", str(tmp_path)]) == EXIT_PIPELINE
    assert "NotProperlyConvex" in capsys.readouterr().err


def test_failed_certificate_exit_code(tmp_path, monkeypatch, capsys):
    from convex_smooth import cli, runner
    real = runner.run_spec

    def failing(spec, strict=False):
        result = real(spec, strict)
        result.report.add("forced", 0.0, 1.0)
        return result

    monkeypatch.setattr(cli, "run_spec", failing)
    code = main(["run", write(tmp_path, GLUE), "--out", str(tmp_path)])
    assert code == EXIT_FAILED
    assert "failed: forced" in capsys.readouterr().out
    assert json.loads((tmp_path / "report.json").read_text())["passed"] is False


def test_thread_variable_is_validated(tmp_path):
    env = {**os.environ, "CONVEX_SMOOTH_THREADS": "zero"}
    proc = subprocess.run([sys.executable, "-m", "convex_smooth", "run", write(tmp_path, GLUE),
                           "--out", str(tmp_path)], env=env, capture_output=True, text=True)
    assert proc.returncode == EXIT_SPEC
    assert "CONVEX_SMOOTH_THREADS" in proc.stderr
    env["CONVEX_SMOOTH_THREADS"] = "2"
    proc = subprocess.run([sys.executable, "-m", "convex_smooth", "run", write(tmp_path, GLUE),
                           "--out", str(tmp_path)], env=env, capture_output=True, text=True)
    assert proc.returncode == EXIT_OK


@pytest.mark.parametrize("name", sorted(p.stem for p in SPECS.glob("*.json") if p.stem != "malformed"))
def test_demo_specs_pass(tmp_path, name):
    assert main(["run", str(SPECS / f"{name}.json"), "--out", str(tmp_path),
                 "--grid-scale", "0.25"]) == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["passed"] is True


def test_strict_turns_warnings_into_failures(tmp_path, monkeypatch):
    import warnings

    from convex_smooth import runner
    real = runner.glue_global

    def noisy(*args, **kwargs):
        warnings.warn("tolerance nearly exhausted", RuntimeWarning)
        return real(*args, **kwargs)

    monkeypatch.setattr(runner, "glue_global", noisy)
    spec = write(tmp_path, GLUE)
    assert main(["run", spec, "--out", str(tmp_path / "lax")]) == EXIT_OK
    lax = json.loads((tmp_path / "lax" / "report.json").read_text())
    assert any("tolerance nearly exhausted" in w for w in lax["extra"]["warnings"])
    assert main(["run", spec, "--out", str(tmp_path / "strict"), "--strict"]) == EXIT_FAILED
