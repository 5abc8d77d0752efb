#!/usr/bin/env python3
import csv
import json
import os
import subprocess
import sys
import tempfile
import unittest
from pathlib import Path

BIN = None
TOOLS = Path(__file__).resolve().parent.parent / "tools"


def run(*args, env=None):
    full_env = dict(os.environ)
    full_env.update(env or {})
    return subprocess.run([BIN, *map(str, args)], capture_output=True, text=True, env=full_env)


class Cli(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.dir = Path(cls.tmp.name)
        cls.data = cls.dir / "data"
        r = run("generate", "--J", 25, "--T", 20, "--N", 200, "--seed", 4, "--out-dir", cls.data)
        assert r.returncode == 0, r.stderr

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def out(self, name):
        return self.dir / name

    def estimate(self, *extra, out="est", env=None):
        return run("estimate", "--data", self.data / "products.csv", "--draws", self.data / "draws.csv",
                   "--out-dir", self.out(out), *extra, env=env)

    def test_generate_writes_truth(self):
        truth = json.loads((self.data / "truth.json").read_text())
        self.assertEqual(len(truth["theta"]), 10)
        self.assertEqual(truth["theta"][4], -3.0)
        with open(self.data / "products.csv") as f:
            header = next(csv.reader(f))
        self.assertEqual(header[:3], ["market_id", "product_id", "share"])

    def test_estimate_five_starts(self):
        r = self.estimate("--method", "npgmm", "--starts", 5, "--seed", 7, "--threads", 4, out="five")
        self.assertEqual(r.returncode, 0, r.stderr)
        rep = json.loads((self.out("five") / "estimate_report.json").read_text())
        run0 = rep["runs"][0]
        self.assertEqual(len(run0["starts"]), 5)
        self.assertIn(run0["selected"], run0["starts"])
        self.assertTrue((self.out("five") / "estimate_report.txt").read_text().startswith("== npgmm =="))

    def test_all_methods(self):
        r = self.estimate("--method", "all", "--starts", 2, "--seed", 7, out="all")
        self.assertEqual(r.returncode, 0, r.stderr)
        rep = json.loads((self.out("all") / "estimate_report.json").read_text())
        self.assertEqual([x["method"] for x in rep["runs"]], ["npgmm", "ablp", "nfxp"])
        names = json.loads((self.data / "truth.json").read_text())["names"]
        thetas = [x["selected"]["theta"] for x in rep["runs"]]
        gap = 0.0
        for th in thetas:
            for i, name in enumerate(names):
                a, b = th[i], thetas[0][i]
                if name.startswith("sigma_"):
                    a, b = abs(a), abs(b)
                gap = max(gap, abs(a - b))
                # weakly identified intercept dispersion left out of the agreement check
                if name != "sigma_0":
                    self.assertLess(abs(a - b), 0.1, name)
        self.assertAlmostEqual(rep["max_cross_method_gap"], gap, places=12)

    def test_env_override(self):
        r = self.estimate("--method", "nfxp", out="env", env={"BLPNP_STARTS": "2", "BLPNP_SEED": "3"})
        self.assertEqual(r.returncode, 0, r.stderr)
        rep = json.loads((self.out("env") / "estimate_report.json").read_text())
        self.assertEqual(len(rep["runs"][0]["starts"]), 2)

    def test_missing_share_column(self):
        bad = self.dir / "bad.csv"
        with open(self.data / "products.csv") as f, open(bad, "w", newline="") as g:
            rows = list(csv.reader(f))
            col = rows[0].index("share")
            csv.writer(g).writerows([r[:col] + r[col + 1:] for r in rows])
        r = run("estimate", "--data", bad, "--draws", self.data / "draws.csv", "--out-dir", self.out("bad"))
        self.assertEqual(r.returncode, 2)
        self.assertIn("'share'", r.stderr)

    def test_non_convergence_exit_code(self):
        r = self.estimate("--method", "npgmm", "--starts", 1, "--max-outer", 1, out="nc")
        self.assertEqual(r.returncode, 3, r.stderr)

    def test_unknown_method(self):
        r = self.estimate("--method", "mpec", out="mpec")
        self.assertEqual(r.returncode, 2)

    def test_montecarlo_cells(self):
        r = run("montecarlo", "--replications", 2, "--J", 5, "--T", 10, "--N", 20, "--starts", 1,
                "--out-dir", self.out("mc5"))
        self.assertEqual(r.returncode, 0, r.stderr)
        rep = json.loads((self.out("mc5") / "montecarlo_report.json").read_text())
        self.assertEqual(len(rep["per_replication"]), 2)
        for rec in rep["per_replication"]:
            self.assertIn("npgmm", rec)
            self.assertIn("ablp", rec)
        with open(self.out("mc5") / "montecarlo_replications.csv") as f:
            self.assertEqual(len(list(csv.DictReader(f))), 4)
        for m in ("npgmm", "ablp"):
            s = rep["summary"][m]
            self.assertIn("convergence_rate_dataset", s)
            self.assertIn("convergence_rate_dataset_start", s)

    def test_montecarlo_rmse_recomputed(self):
        out = self.out("mc25")
        r = run("montecarlo", "--replications", 2, "--J", 25, "--T", 10, "--N", 100, "--starts", 2, "--seed", 3,
                "--out-dir", out)
        self.assertEqual(r.returncode, 0, r.stderr)
        rep = json.loads((out / "montecarlo_report.json").read_text())
        self.assertEqual(rep["summary"]["npgmm"]["convergence_rate_dataset"], 100.0)
        chk = subprocess.run([sys.executable, TOOLS / "recompute_rmse.py", out], capture_output=True, text=True)
        self.assertEqual(chk.returncode, 0, chk.stdout + chk.stderr)
        self.assertIn("0 mismatches", chk.stdout)

    def test_thread_sweep_single_thread(self):
        r = run("thread-sweep", "--method", "all", "--thread-list", 1, "--evaluations", 3, "--J", 25, "--T", 10,
                "--N", 100, "--out-dir", self.out("sweep1"))
        self.assertEqual(r.returncode, 0, r.stderr)
        rep = json.loads((self.out("sweep1") / "thread_sweep.json").read_text())
        for m in ("npgmm", "ablp", "nfxp"):
            self.assertEqual(len(rep["methods"][m]["rows"]), 1)
            self.assertEqual(rep["methods"][m]["optimal_threads"], 1)

    def test_thread_sweep_bit_identical(self):
        r = run("thread-sweep", "--method", "npgmm", "--thread-list", "1,2,4", "--evaluations", 2, "--J", 25,
                "--T", 10, "--N", 100, "--out-dir", self.out("sweep3"))
        self.assertEqual(r.returncode, 0, r.stderr)
        rep = json.loads((self.out("sweep3") / "thread_sweep.json").read_text())
        self.assertTrue(rep["bit_identical"])
        rows = rep["methods"]["npgmm"]["rows"]
        self.assertEqual([row["threads"] for row in rows], [1, 2, 4])
        self.assertTrue(all(row["value"] == rows[0]["value"] for row in rows))

    def test_scaling(self):
        r = run("scaling", "--J-list", "25,30", "--T", 5, "--N", 50, "--out-dir", self.out("sc2"))
        self.assertEqual(r.returncode, 2)
        self.assertIn("at least 3", r.stderr)
        r = run("scaling", "--J-list", "25,30,40", "--T", 5, "--N", 50, "--starts", 1, "--out-dir", self.out("sc3"))
        self.assertEqual(r.returncode, 0, r.stderr)
        rep = json.loads((self.out("sc3") / "scaling_report.json").read_text())
        self.assertEqual(len(rep["per_J"]), 3)
        for m in ("npgmm", "ablp"):
            self.assertEqual(len(rep["slopes"][m]["residuals"]), 3)


if __name__ == "__main__":
    BIN = sys.argv.pop(1)
    unittest.main(verbosity=2)
