import csv
import io
import json
import os
import tempfile
import unittest
from unittest.mock import patch

import numpy as np

import app
from src.agents.bound_graph import BoundGraph
from src.engine.bound_result import LOWER_SDP, UPPER_HEURISTIC, BoundResult
from src.errors import ArgumentError
from src.quantum.qstate import werner
from src.utils.sdpa_format import read_sdpa_header
from src.utils.state_io import load_state, save_state


def run_cli(*argv):
    out = io.StringIO()
    with patch("sys.stdout", out), patch("sys.stderr", io.StringIO()):
        code = app.main(list(argv))
    return code, out.getvalue()


class TestParseGrid(unittest.TestCase):
    def test_range_and_list(self):
        self.assertEqual(app.parse_grid("0:0.1:0.5"), [0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
        self.assertEqual(app.parse_grid("0.1, 0.3"), [0.1, 0.3])

    def test_bad_grids(self):
        for text in ("", "0:0:1", "a,b", "1:0.1:0"):
            with self.assertRaises(ArgumentError):
                app.parse_grid(text)


class TestCommands(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def path(self, name):
        return os.path.join(self.dir, name)

    def test_werner_round_trip(self):
        code, out = run_cli("--no-records", "werner", "--d", "2", "--p", "0.3", "--out", self.path("w.json"))
        self.assertEqual(code, 0)
        self.assertIn("written", out)
        np.testing.assert_allclose(load_state(self.path("w.json")).data, werner(2, 0.3).data, atol=1e-15)

    def test_quad(self):
        code, out = run_cli("quad", "--m", "2")
        self.assertEqual(code, 0)
        rows = [[float(v) for v in line.split(",")] for line in out.strip().splitlines()]
        np.testing.assert_allclose(rows, [[1 / 3, 0.75], [1.0, 0.25]], atol=1e-12)

    def test_input_errors(self):
        self.assertEqual(run_cli("quad", "--m", "0")[0], 2)
        self.assertEqual(run_cli("quad", "--m", "two")[0], 2)
        self.assertEqual(run_cli()[0], 2)
        self.assertEqual(run_cli("--no-records", "lower", self.path("missing.json"))[0], 2)

    def test_malformed_state(self):
        bad = self.path("bad.json")
        with open(bad, "w") as f:
            json.dump({"dims": [2, 2], "matrix": {"re": np.diag([0.7, 0.7, -0.2, -0.2]).tolist(),
                                                  "im": np.zeros((4, 4)).tolist()}}, f)
        self.assertEqual(run_cli("--no-records", "lower", bad, "--m", "1")[0], 2)
        with open(bad, "w") as f:
            f.write("not json")
        self.assertEqual(run_cli("--no-records", "export", bad, "--m", "1", "--out", self.path("x.dat-s"))[0], 2)

    def test_export_is_deterministic(self):
        state = self.path("w.json")
        save_state(werner(2, 0.1), state)
        for name in ("a.dat-s", "b.dat-s"):
            code, _ = run_cli("--no-records", "export", state, "--m", "1", "--k", "1", "--out", self.path(name))
            self.assertEqual(code, 0)
        with open(self.path("a.dat-s"), "rb") as a, open(self.path("b.dat-s"), "rb") as b:
            self.assertEqual(a.read(), b.read())
        self.assertEqual(read_sdpa_header(self.path("a.dat-s"))["basis_size"], 17)

    def test_resource_cap_exit_code(self):
        state = self.path("w.json")
        save_state(werner(2, 0.1), state)
        self.assertEqual(run_cli("--no-records", "export", state, "--m", "8", "--k", "2", "--out", self.path("x"))[0], 4)

    def test_missing_external_solver(self):
        state = self.path("w.json")
        save_state(werner(2, 0.1), state)
        code, _ = run_cli("--no-records", "lower", state, "--m", "1", "--backend", "external",
                          "--solver-path", self.path("no-such-solver"))
        self.assertEqual(code, 3)

    def test_closed_form_and_records(self):
        state = self.path("singlet.json")
        records = self.path("records.json")
        save_state(werner(2, 0.0), state)
        code, out = run_cli("--records", records, "lower", state, "--m", "2", "--closed-form",
                            "--out", self.path("lower.json"))
        self.assertEqual(code, 0)
        self.assertIn("upper_value:", out)
        with open(records) as f:
            stored = json.load(f)
        self.assertEqual(len(stored), 1)
        self.assertEqual(stored[0]["command"], "lower")
        with open(self.path("lower.json")) as f:
            self.assertAlmostEqual(json.load(f)["result"]["value"], 11 / (16 * np.log(2)), places=10)

        save_state(werner(2, 0.4), state)
        self.assertEqual(run_cli("--records", records, "lower", state, "--closed-form")[0], 2)

    def test_upper(self):
        state = self.path("singlet.json")
        save_state(werner(2, 0.0), state)
        code, out = run_cli("--no-records", "upper", state, "--dD", "1", "--dE", "1", "--restarts", "1",
                            "--max-iters", "3", "--out", self.path("upper.json"))
        self.assertEqual(code, 0)
        self.assertIn("value: 1.0000000000", out)
        with open(self.path("upper.json")) as f:
            self.assertEqual(json.load(f)["parameters"]["d_D"], 1)


class TestFigure(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = os.path.join(self.tmp.name, "figure.csv")

    def tearDown(self):
        self.tmp.cleanup()

    @staticmethod
    def fake_graph():
        def lower(rho, m, k=1, opts=None):
            p = float(np.real(rho.data[0, 0])) * 3
            return BoundResult(0.3 - p, LOWER_SDP, m=m, k=k)

        def upper(rho, d_D, d_E, **kwargs):
            p = float(np.real(rho.data[0, 0])) * 3
            return BoundResult(1.0 - p, UPPER_HEURISTIC, d_D=d_D, d_E=d_E)

        return BoundGraph(lower_fn=lower, upper_fn=upper)

    def test_csv(self):
        with patch("app.BoundGraph", side_effect=self.fake_graph):
            code, _ = run_cli("--no-records", "figure1", "--out", self.out)
        self.assertEqual(code, 0)
        with open(self.out, newline="") as f:
            rows = list(csv.DictReader(f))
        self.assertEqual(len(rows), 6)
        self.assertEqual(list(rows[0].keys()), app.FIGURE_COLUMNS)
        self.assertEqual([r["p"] for r in rows], ["0", "0.1", "0.2", "0.3", "0.4", "0.5"])
        self.assertEqual((rows[0]["d_D"], rows[0]["d_E"], rows[0]["m"]), ("4", "4", "8"))
        last = rows[-1]
        self.assertLess(float(last["lower_raw"]), 0.0)
        self.assertEqual(float(last["lower_clamped"]), 0.0)
        for row in rows:
            self.assertLessEqual(float(row["lower_clamped"]), float(row["upper"]))

    def test_empty_grid(self):
        with patch("app.BoundGraph", side_effect=self.fake_graph):
            self.assertEqual(run_cli("--no-records", "figure1", "--grid", "", "--out", self.out)[0], 2)
        self.assertFalse(os.path.exists(self.out))


if __name__ == '__main__':
    unittest.main()
