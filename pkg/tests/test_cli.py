import csv
import json

import pytest

from lightsb_ou.cli import main

TINY = ["--n-steps", "30", "--K", "4", "--batch-size", "32", "--checkpoint-every", "10"]


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def data(tmp_path):
    assert main(["gen-data", "--out", str(tmp_path / "data"), "--n", "500", "--seed", "4"]) == 0
    return tmp_path / "data"


def test_gen_data(tmp_path, data):
    assert len(rows(data / "target.csv")) == 501
    spec = json.loads((data / "spec.json").read_text())
    assert len(spec["means"]) == 25
    main(["gen-data", "--out", str(tmp_path / "again"), "--n", "500", "--seed", "4"])
    for name in ("target.csv", "source.csv", "spec.json"):
        assert (data / name).read_bytes() == (tmp_path / "again" / name).read_bytes()
    man = json.loads((data / "manifest.json").read_text())
    assert man["command"] == "gen-data" and man["seed"] == 4
    assert set(man["outputs"]) == {"target", "source", "spec"}


def test_train_outputs_and_precedence(tmp_path, data):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("lr: 0.01\nK: 7\neps: 0.2\nb: -0.099\nm: -0.225\n")
    out = tmp_path / "run"
    code = main(["train", "--out", str(out), "--target", str(data / "target.csv"), "--header",
                 "--config", str(cfg), *TINY])
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    # flags beat the file (K), the file beats defaults (lr, eps, b, m)
    assert man["config"]["K"] == 4 and man["config"]["lr"] == 0.01
    assert man["config"]["eps"] == 0.2 and man["config"]["b"] == -0.099
    assert man["config"]["m_scale"] == -0.225
    assert len(rows(out / "loss.csv")) == 31
    ck = json.loads((out / "checkpoint.json").read_text())
    assert ck["K"] == 4 and ck["train_meta"]["steps"] == 30


def test_train_missing_inputs(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path / "r"), "--target", str(tmp_path / "no.csv")]) == 1
    assert "no such file" in capsys.readouterr().err
    assert main(["train", "--out", str(tmp_path / "r"), "--target", "x.csv",
                 "--config", str(tmp_path / "no.yaml")]) == 1


def test_resume_reproduces_trace(tmp_path, data):
    tgt = ["--target", str(data / "target.csv"), "--header"]
    main(["train", "--out", str(tmp_path / "full"), *tgt, *TINY])
    main(["train", "--out", str(tmp_path / "half"), *tgt,
          "--n-steps", "20", "--K", "4", "--batch-size", "32", "--checkpoint-every", "10"])
    main(["train", "--out", str(tmp_path / "rest"), *tgt, "--resume",
          str(tmp_path / "half" / "checkpoint.json"), "--n-steps", "30"])
    full = (tmp_path / "full" / "checkpoint.json").read_bytes()
    assert (tmp_path / "rest" / "checkpoint.json").read_bytes() == full
    loss_full = rows(tmp_path / "full" / "loss.csv")
    assert loss_full[21:] == rows(tmp_path / "rest" / "loss.csv")[1:]


def test_sample_eval_trajectory(tmp_path, data):
    main(["train", "--out", str(tmp_path / "run"), "--target", str(data / "target.csv"),
          "--header", *TINY])
    ck = str(tmp_path / "run" / "checkpoint.json")
    assert main(["sample", "--out", str(tmp_path / "s"), "--checkpoint", ck, "--n", "100"]) == 0
    s = rows(tmp_path / "s" / "samples.csv")
    assert s[0] == ["x_1", "x_2", "y_1", "y_2"] and len(s) == 101
    assert main(["trajectory", "--out", str(tmp_path / "t"), "--checkpoint", ck, "--n", "5",
                 "--knots", "3"]) == 0
    assert len(rows(tmp_path / "t" / "trajectories.csv")) == 16
    assert main(["sample", "--out", str(tmp_path / "s2"), "--checkpoint", ck, "--n", "100"]) == 0
    assert (tmp_path / "s" / "samples.csv").read_bytes() == \
        (tmp_path / "s2" / "samples.csv").read_bytes()


def test_eval_self_is_zero(tmp_path, data):
    t = str(data / "target.csv")
    assert main(["eval", "--out", str(tmp_path / "e"), "--samples", t, "--reference", t,
                 "--header", "--spec", str(data / "spec.json")]) == 0
    report = {r[0]: float(r[1]) for r in rows(tmp_path / "e" / "report.csv")[1:]}
    assert report["sliced_w1"] == 0.0 and report["mmd2"] == 0.0 and report["energy"] == 0.0
    assert report["covered_modes"] == 25.0


def test_eval_bad_csv(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,x\n")
    assert main(["eval", "--out", str(tmp_path / "e"), "--samples", str(bad),
                 "--reference", str(bad)]) == 1
    assert "row 1" in capsys.readouterr().err
    man = json.loads((tmp_path / "e" / "manifest.json").read_text())
    assert man["status"].startswith("error")


def test_benchmark_shape_and_determinism(tmp_path):
    args = ["--n-steps", "20", "--K", "3", "--eval-n", "200", "--repeats", "2",
            "--b-values", "0,0.1", "--m-scales", "0", "--seed", "1"]
    assert main(["benchmark", "--out", str(tmp_path / "a"), *args]) == 0
    assert main(["benchmark", "--out", str(tmp_path / "b"), *args]) == 0
    table = rows(tmp_path / "a" / "table.csv")
    assert table[0] == ["variant", "method", "b", "m_scale", "metric", "mean", "std"]
    body = table[1:]
    assert len(body) == 3 * 2 * 4
    assert {r[0] for r in body} == {"standard", "irregular", "anisotropic"}
    assert {r[1] for r in body} == {"LightSB", "LightSB-OU"}
    for name in ("table.csv", "sweep.csv", "summary.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_command(tmp_path, data):
    code = main(["sweep", "--out", str(tmp_path / "w"), "--target", str(data / "target.csv"),
                 "--header", "--spec", str(data / "spec.json"), "--b-values", "0,0.1",
                 "--m-scales", "0", "--eval-n", "200", *TINY])
    assert code == 0
    body = rows(tmp_path / "w" / "sweep.csv")[1:]
    assert len(body) == 2
    assert float(body[0][3]) <= float(body[1][3])
