"""
The command-line pipeline
=========================

The ``nestknn`` command chains the whole workflow through files:
synthetic data, database build, calibration, retrieval, evaluation and
gridding. Each step reads a flat ``key = value`` configuration.
"""

import csv
import subprocess
import sys
import tempfile
from pathlib import Path

CONFIG = """\
seed = 7
database_size = 3000
scenario_n_per_class = 2000
scenario_n_holdout = 1000
candidate_k_stage1 = 25,50,100,200
candidate_k_stage2 = 5,10,25,50
candidate_k_stage3 = 5,10,25,50
calibration_max_per_class = 750
workers = 4
"""


def fmt(value):
    return value if value == "undefined" else f"{float(value):.3f}"


def nestknn(*args):
    cmd = [sys.executable, "-m", "nestknn.cli", *map(str, args)]
    print("$ nestknn", " ".join(map(str, args)))
    done = subprocess.run(cmd, capture_output=True, text=True)
    print(done.stdout.rstrip())
    if done.returncode:
        print(done.stderr.rstrip())
        raise SystemExit(done.returncode)


with tempfile.TemporaryDirectory() as tmp:
    d = Path(tmp)
    cfg = d / "run.cfg"
    cfg.write_text(CONFIG)

    nestknn("synth", "--config", cfg, "--out", d / "data")
    nestknn("build-db", "--config", cfg, "--out", d / "db.apdb", d / "data" / "build.csv")
    nestknn("calibrate", "--config", cfg, "--db", d / "db.apdb", "--calibration", d / "data" / "build.csv",
            "--params", d / "params.txt", "--report-dir", d / "roc")
    nestknn("retrieve", "--config", cfg, "--db", d / "db.apdb", "--params", d / "params.txt",
            "--queries", d / "data" / "holdout.csv", "--out", d / "detections.csv")
    nestknn("evaluate", "--config", cfg, "--detections", d / "detections.csv",
            "--truth", d / "data" / "holdout.csv", "--out", d / "report.csv")
    nestknn("grid", "--config", cfg, "--detections", d / "detections.csv", "--out-prefix", d / "phase")

    print("\ncalibrated parameters:")
    print((d / "params.txt").read_text().rstrip())

    print("\nscores by surface group:")
    with open(d / "report.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            if row["detection_class"] == "occurrence":
                print(f"  {row['surface']:<20} n={row['n']:<6} POD {fmt(row['pod'])}  "
                      f"POFA {fmt(row['pofa'])}  HSS {fmt(row['hss'])}")
