#!/usr/bin/env python3
"""Exit codes, error documents, schemas and determinism of the command-line tool.

  cli_contract.py CLI SCHEMA
"""
import json
import math
import os
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema

FAILURES = []


def check(cond, what):
    print(("ok    " if cond else "FAIL  ") + what)
    if not cond:
        FAILURES.append(what)


def run(cli, *args, env=None):
    return subprocess.run([cli, *map(str, args)], capture_output=True, text=True, env=env)


def write(path, obj):
    path.write_text(json.dumps(obj))
    return path


def main():
    if len(sys.argv) != 3:
        print(__doc__)
        return 2
    cli, schema_path = sys.argv[1], sys.argv[2]
    schema = json.loads(Path(schema_path).read_text())
    tmp = Path(tempfile.mkdtemp(prefix="lf_cli_"))

    # verify: clean run and injected flux defect
    r = run(cli, "verify", "--seed", 3, "--out", tmp / "verify")
    check(r.returncode == 0, f"verify exits 0 (got {r.returncode})")
    report = json.loads((tmp / "verify" / "verify_report.json").read_text())
    jsonschema.validate(report, schema)
    check(True, "verify report validates against schema")
    check(all(c["status"] == "pass" for c in report["checks"]), "all invariant checks pass")
    check(json.loads(r.stdout) == report, "stdout report equals written report")

    cfg = write(tmp / "defect.json", {"seed": 3, "flux_defect": 0.1})
    r = run(cli, "verify", "--config", cfg)
    check(r.returncode == 1, f"flux defect exits 1 (got {r.returncode})")
    bad = json.loads(r.stdout)
    jsonschema.validate(bad, schema)
    status = {c["name"]: c["status"] for c in bad["checks"]}
    check(status.get("beckmann_continuity") == "fail", "defect fixture fails the continuity check")

    # train: input errors
    cfg = write(tmp / "missing.json", {"seed": 1, "dataset": str(tmp / "nope.csv")})
    r = run(cli, "train", "--config", cfg)
    err = json.loads(r.stdout) if r.stdout.strip().startswith("{") else {}
    check(r.returncode == 2, f"missing dataset exits 2 (got {r.returncode})")
    check(err.get("error", {}).get("kind") == "dataset_not_found", "error kind dataset_not_found")

    cfg = write(tmp / "unknown.json", {"seed": 1, "problem": {"beta": 0.5}, "learning_rat": 0.1})
    r = run(cli, "train", "--config", cfg)
    check(r.returncode == 2, "unknown config key exits 2")

    cfg = write(tmp / "noseed.json", {"problem": {"beta": 0.5}})
    r = run(cli, "train", "--config", cfg)
    check(r.returncode == 2, "train without seed exits 2")

    r = run(cli, "train", "--no-such-flag")
    check(r.returncode == 2, "unknown flag exits 2")

    # train: determinism across runs and thread counts
    train_cfg = {
        "seed": 11,
        "problem": {"d": 2, "family": "bump", "beta": 0.5},
        "n": 200,
        "network": {"d": 2, "L": 2, "W": 4, "init": "zero_readout"},
        "steps": 8,
        "learning_rate": 0.2,
        "iterations": 5,
    }
    cfg = write(tmp / "train.json", train_cfg)
    logs = []
    for i, threads in enumerate([1, 1, 4]):
        out = tmp / f"train{i}"
        r = run(cli, "train", "--config", cfg, "--out", out, "--threads", threads)
        check(r.returncode == 0, f"train run {i} exits 0 ({r.stdout[-200:]})")
        logs.append((out / "training_log.csv").read_bytes())
    check(logs[0] == logs[1], "training log byte-identical across runs")
    check(logs[0] == logs[2], "training log byte-identical across thread counts")
    check(logs[0].startswith(b"# schema=training_log/1 seed=11\niter,nll,guard_lipschitz,h\n"), "training log header")
    for f in ("checkpoint.json", "ledger.json"):
        check((tmp / "train0" / f).exists(), f"train writes {f}")

    env = dict(os.environ, LIOUVILLE_FLOW_THREADS="3")
    r = run(cli, "train", "--config", cfg, "--out", tmp / "train_env", env=env)
    check((tmp / "train_env" / "training_log.csv").read_bytes() == logs[0], "LIOUVILLE_FLOW_THREADS run identical")

    zero = dict(train_cfg, iterations=0, network={"d": 2, "L": 2, "W": 4})
    cfg0 = write(tmp / "train_zero.json", zero)
    r = run(cli, "train", "--config", cfg0, "--out", tmp / "train_zero")
    summary = json.loads(r.stdout)
    check(summary["initial_nll"] == summary["final_nll"], "iterations=0 leaves the model unchanged")
    ck = json.loads((tmp / "train_zero" / "checkpoint.json").read_text())
    weights = [w for layer in ck["weights"] for w in layer] + [b for layer in ck["biases"] for b in layer]
    check(all(abs(w) <= 0.5 / 4 for w in weights), "iterations=0 checkpoint is the initialization")

    # sample / evaluate on the trained checkpoint
    model = tmp / "train0" / "checkpoint.json"
    scfg = write(tmp / "sample.json", {"seed": 5, "model": str(model), "n": 300})
    outs = []
    for i in range(2):
        r = run(cli, "sample", "--config", scfg, "--out", tmp / f"sample{i}")
        check(r.returncode == 0, f"sample run {i} exits 0")
        outs.append((tmp / f"sample{i}" / "samples.csv").read_bytes())
    check(outs[0] == outs[1], "sample files byte-identical across runs")
    check(outs[0].startswith(b"# schema=samples/1 seed=5\n"), "sample header records the seed")

    ecfg = write(tmp / "eval.json", {"model": str(model), "problem": {"beta": 0.5}, "grid": 64})
    r = run(cli, "evaluate", "--config", ecfg)
    ev = json.loads(r.stdout)
    check(r.returncode == 0 and abs(ev["mass"] - 1) < 1e-2 and ev["kl"]["clipped"] >= 0, "evaluate reports mass and KL")

    # bounds
    bcfg = write(tmp / "bounds.json", {"d": 1, "L": 1, "W": 2, "h": 0.02})
    r1, r2 = run(cli, "bounds", "--config", bcfg), run(cli, "bounds", "--config", bcfg)
    b = json.loads(r1.stdout)
    check(r1.returncode == 0 and abs(b["ledger"]["Lambda"]["log"] - math.log(8 * math.sqrt(5))) < 1e-12,
          "bounds logLambda = log(8 sqrt 5)")
    check("pac_sample_size" not in b and "pac_schedule" not in b, "omitting eps, delta skips the PAC section")
    check(r1.stdout == r2.stdout, "bounds output stable across runs")
    pcfg = write(tmp / "pac.json", {"d": 2, "L": 1, "W": 2, "h": 0.02, "pac": {"p": 0.5, "n": 1e6}})
    r = run(cli, "bounds", "--config", pcfg)
    pb = json.loads(r.stdout)
    check(r.returncode == 0 and not pb["pac_schedule"]["feasible"] and "warning" in pb, "infeasible schedule flagged")

    # beckmann
    kcfg = write(tmp / "beck.json", {"problem": {"beta": 0.5}, "steps": 32, "grid": 64})
    r = run(cli, "beckmann", "--config", kcfg, "--out", tmp / "beck")
    bk = json.loads(r.stdout)
    check(r.returncode == 0 and abs(bk["boundary_flux"]) < 1e-10 and bk["continuity_residual"] < 1e-6,
          "beckmann oracle report")
    check((tmp / "beck" / "field_grid.csv").exists(), "beckmann writes the field grid")

    print(f"{len(FAILURES)} failure(s)")
    return 1 if FAILURES else 0


if __name__ == "__main__":
    sys.exit(main())
