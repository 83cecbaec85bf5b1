import csv
import io
import json

import numpy as np
import pytest

from fdivkit.cli import dumps, main


@pytest.fixture
def exp_file(tmp_path):
    path = tmp_path / "e.json"
    path.write_text(json.dumps({"prior": [0.5, 0.5],
                                "conditionals": [[0.6, 0.3, 0.1], [0.1, 0.3, 0.6]]}))
    return str(path)


@pytest.fixture
def same_file(tmp_path):
    path = tmp_path / "same.json"
    path.write_text(json.dumps({"prior": [0.5, 0.5],
                                "conditionals": [[0.2, 0.8], [0.2, 0.8]]}))
    return str(path)


def _run(capsys, argv):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestSerialization:
    def test_round_trip(self):
        x = 0.1 + 0.2
        assert json.loads(dumps({"x": x}))["x"] == x

    def test_integral_floats_keep_point(self):
        assert dumps(0.0) == "0.0" and dumps(np.float64(3)) == "3.0"

    def test_non_finite(self):
        assert dumps([np.inf, np.nan]) == '["inf", "nan"]'


class TestCommands:
    def test_div_identical(self, capsys, same_file):
        code, out, _ = _run(capsys, ["div", "--experiment", same_file, "--generator", '{"name":"tv"}'])
        assert code == 0
        assert '"value": 0.0' in out
        assert json.loads(out)["value"] == 0.0

    def test_div_quantized(self, capsys, exp_file):
        code, out, _ = _run(capsys, ["div", "--experiment", exp_file, "--generator", "tv",
                                     "--quantizer", "[0, 0, 1]"])
        assert code == 0 and json.loads(out)["value"] <= 0.5 + 1e-12

    def test_equiv_hinge(self, capsys):
        code, out, _ = _run(capsys, ["equiv", "--mode", "U", "--loss-a", "zero-one",
                                     "--loss-b", "hinge", "--k", "3"])
        res = json.loads(out)["result"]
        assert code == 0 and res["equivalent"]
        assert abs(res["a"] - 1 / 3) < 1e-10

    def test_equiv_search(self, capsys):
        code, out, _ = _run(capsys, ["equiv", "--mode", "search", "--loss-a", "zero-one",
                                     "--loss-b", "logistic", "--k", "3", "--seed", "7"])
        assert code == 0 and json.loads(out)["result"]["found"]

    def test_info(self, capsys, exp_file):
        code, out, _ = _run(capsys, ["info", "--experiment", exp_file, "--loss-a", "zero-one"])
        assert code == 0 and abs(json.loads(out)["information"] - 0.25) < 1e-12

    def test_quantize(self, capsys, exp_file):
        code, out, _ = _run(capsys, ["quantize", "--experiment", exp_file, "--loss-a", "zero-one",
                                     "--max-codes", "2"])
        data = json.loads(out)
        assert code == 0 and abs(data["value"] - 0.25) < 1e-15 and len(data["candidates"]) == 4

    def test_loss_build_csv(self, capsys):
        code, out, _ = _run(capsys, ["loss-build", "--generator", "kl", "--k", "2",
                                     "--resolution", "4"])
        rows = list(csv.reader(io.StringIO(out)))
        assert code == 0 and rows[0] == ["alpha1", "alpha2", "loss1", "loss2"]
        assert len(rows) == 1 + 25

    def test_calibrate_csv(self, capsys):
        code, out, _ = _run(capsys, ["calibrate", "--loss-a", "hinge", "--k", "3", "--reps", "5"])
        rows = list(csv.reader(io.StringIO(out)))
        assert code == 0 and rows[0] == ["trial", "pi", "i_star", "margin", "verdict"]
        assert all(r[-1] == "1" for r in rows[1:])

    def test_erm_curve(self, capsys, exp_file, tmp_path):
        out_path = tmp_path / "r.json"
        code, _, _ = _run(capsys, ["erm", "--experiment", exp_file, "--loss-a", "hinge",
                                   "--schedule", "20,200", "--reps", "3", "--out", str(out_path)])
        assert code == 0
        rows = list(csv.reader(open(tmp_path / "r.csv")))
        assert rows[0] == ["n", "mean_gap", "std_gap"] and len(rows) == 3

    def test_erm_refuses_logistic(self, capsys, exp_file):
        code, _, err = _run(capsys, ["erm", "--experiment", exp_file, "--loss-a", "logistic",
                                     "--schedule", "20", "--reps", "1"])
        assert code == 2 and err.count("\n") == 1

    def test_selftest(self, capsys):
        code, out, _ = _run(capsys, ["selftest"])
        assert code == 0 and json.loads(out)["passed"]


class TestContract:
    def test_meta_block(self, capsys, exp_file):
        _, out, _ = _run(capsys, ["info", "--experiment", exp_file, "--loss-a", "hinge", "--seed", "4"])
        meta = json.loads(out)["meta"]
        assert meta["seed"] == 4 and "version" in meta and "tolerances" in meta

    def test_byte_identical(self, capsys, exp_file):
        argv = ["erm", "--experiment", exp_file, "--loss-a", "hinge", "--schedule", "30", "--reps", "4"]
        assert _run(capsys, argv)[1] == _run(capsys, argv)[1]

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = _run(capsys, ["div", "--experiment", str(tmp_path / "nope.json"),
                                     "--generator", "kl"])
        assert code == 2 and err.startswith("fdivkit: error:")

    def test_bad_experiment(self, capsys, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"prior": [0.7, 0.7], "conditionals": [[1.0], [1.0]]}))
        code, _, _ = _run(capsys, ["div", "--experiment", str(path), "--generator", "kl"])
        assert code == 2

    def test_unknown_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["selftest", "--bogus"])
        assert exc.value.code == 2

    @pytest.mark.parametrize("value", ["0", "many"])
    def test_bad_threads(self, capsys, monkeypatch, value):
        monkeypatch.setenv("FDIVKIT_THREADS", value)
        assert _run(capsys, ["selftest"])[0] == 2

    def test_threads_recorded(self, capsys, monkeypatch, exp_file):
        monkeypatch.setenv("FDIVKIT_THREADS", "3")
        _, out, _ = _run(capsys, ["info", "--experiment", exp_file, "--loss-a", "zero-one"])
        assert json.loads(out)["meta"]["threads"] == 3
