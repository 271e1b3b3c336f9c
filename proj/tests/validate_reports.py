"""Runs the CLI and checks exit codes, outputs and report schemas."""
import json
import os
import pathlib
import subprocess
import sys
import tempfile

import jsonschema

cli, schema_dir = sys.argv[1], pathlib.Path(sys.argv[2])
failures = []


def check(cond, what):
    print(("ok   " if cond else "FAIL ") + what)
    if not cond:
        failures.append(what)


def run(*args, cwd=None, env=None):
    return subprocess.run([cli, *args], capture_output=True, text=True, cwd=cwd, env=env)


level_schema = json.loads((schema_dir / "level-report.schema.json").read_text())
conv_schema = json.loads((schema_dir / "convergence.schema.json").read_text())
jsonschema.Draft202012Validator.check_schema(level_schema)
jsonschema.Draft202012Validator.check_schema(conv_schema)

with tempfile.TemporaryDirectory() as tmp:
    tmp = pathlib.Path(tmp)
    for problem in ("heat", "sign-drift", "coupled-lip"):
        out = tmp / problem
        r = run("pipeline", "--problem", problem, "--levels", "4,8", "--checks", "all", "--paths", "400",
                "--grid", "6,121,100", "--out", str(out))
        check(r.returncode == 0, f"pipeline {problem} exits 0 ({r.stderr.strip()[:200]})")
        for n in (4, 8):
            rep = json.loads((out / f"report_{n}.json").read_text())
            try:
                jsonschema.validate(rep, level_schema)
                check(True, f"{problem} report_{n}.json matches schema")
            except jsonschema.ValidationError as e:
                check(False, f"{problem} report_{n}.json: {e.message}")
        try:
            jsonschema.validate(json.loads((out / "convergence.json").read_text()), conv_schema)
            check(True, f"{problem} convergence.json matches schema")
        except jsonschema.ValidationError as e:
            check(False, f"{problem} convergence.json: {e.message}")

    out = tmp / "cauchy"
    r = run("pipeline", "--problem", "sign-drift", "--levels", "4,8,16,32", "--checks", "cauchy", "--jobs", "4",
            "--out", str(out))
    check(r.returncode == 0, "sign-drift cauchy pipeline exits 0")
    gaps = json.loads((out / "convergence.json").read_text())["cauchy"]["gaps"]
    first, last = gaps[0], gaps[-1]
    for key in ("v_sup", "w_sup", "y_h2", "z_h2", "stoch_int"):
        check(last[key] < first[key], f"cauchy gap {key}: {last[key]:.3g} < {first[key]:.3g}")
    for i, (a, b) in enumerate(zip(last["x_l2"], first["x_l2"])):
        check(a < b, f"cauchy gap x_l2[{i}]: {a:.3g} < {b:.3g}")

    cfg = tmp / "bad.yaml"
    cfg.write_text("levels: [4]\n")
    r = run("pipeline", "--config", str(cfg))
    check(r.returncode == 2, "missing problem key exits 2")
    check("missing required key 'problem'" in r.stderr + r.stdout, "missing key is named")

    r = run("solve", "--problem", "nope")
    check(r.returncode == 2, "unknown problem exits 2")

    r = run("solve", "--bogus-flag")
    check(r.returncode == 2, "unknown flag exits 2")

    blocker = tmp / "file"
    blocker.write_text("x")
    r = run("solve", "--problem", "heat", "--levels", "4", "--grid", "6,31,10", "--out", str(blocker / "sub"))
    check(r.returncode == 3, "unwritable output exits 3")

    env = dict(os.environ, FBSDE_OUTPUT_ROOT=str(tmp / "root"))
    r = run("solve", "--problem", "heat", "--levels", "4", "--grid", "6,31,10", "--out", "rel", env=env)
    check(r.returncode == 0 and (tmp / "root" / "rel" / "field_4.csv").exists(), "output root override")

    r = run("verify", "--problem", "linear-ode", "--levels", "4", "--grid", "6,31,20", "--paths", "200",
            "--check", "residual", "--out", str(tmp / "verify"), "--json")
    check(r.returncode == 0 and not (tmp / "verify").exists(), "verify writes no files")
    check(r.stdout.lstrip().startswith("{") or r.stdout.lstrip().startswith("["), "verify --json prints JSON")

    r = run("describe", "--list")
    check(r.returncode == 0 and all(p in r.stdout for p in ("heat", "linear-ode", "sign-drift", "coupled-lip")),
          "describe --list")
    r = run("describe", "sign-drift")
    check(r.returncode == 0 and "sign-drift" in r.stdout, "describe sign-drift")

    examples = schema_dir.parent / "examples_config"
    env = dict(os.environ, FBSDE_OUTPUT_ROOT=str(tmp / "examples"))
    for name in ("heat-smoke", "custom-inline"):
        r = run("pipeline", "--config", str(examples / f"{name}.yaml"), "--paths", "500", env=env)
        check(r.returncode == 0, f"example config {name} runs")
    r = run("describe", "--custom", str(examples / "custom-problem.yaml"))
    check(r.returncode == 0 and "bounded-feedback" in r.stdout, "example custom problem parses")

print(f"{len(failures)} failure(s)")
sys.exit(1 if failures else 0)
