#!/usr/bin/env python3
"""Smoke test for the attackforge_py extension module.

Builds the cdylib with cargo, loads it, and runs a miniature version of the
pipeline: generate a trace, mine rules, validate them, synthesize attacks,
simulate a few, and compare against the built-in expert list.
"""

import json
import pathlib
import shutil
import subprocess
import sys
import sysconfig
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def build_module() -> pathlib.Path:
    subprocess.run(
        ["cargo", "build", "-p", "attackforge-py"], cwd=ROOT, check=True
    )
    lib = ROOT / "target" / "debug" / "libattackforge_py.so"
    if not lib.exists():  # macOS
        lib = ROOT / "target" / "debug" / "libattackforge_py.dylib"
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    staging = pathlib.Path(tempfile.mkdtemp(prefix="attackforge_py_"))
    target = staging / f"attackforge_py{suffix}"
    shutil.copyfile(lib, target)
    return staging


def main() -> None:
    sys.path.insert(0, str(build_module()))
    import attackforge_py as af

    # Rule canonicalization round-trips through the parser.
    canon = af.canonicalize_rule("if LIT101 < 250 mm then MV101 = OPEN & ALARM")
    assert canon == "IF LIT101 < 250mm THEN MV101 = 2 & ALARM", canon
    assert af.canonicalize_rule(canon) == canon

    # Trace generation -> mining -> validation.
    csv = af.gen_normal_csv(21600, seed=42)
    header = csv.splitlines()[0]
    assert header.startswith("Timestamp,") and header.endswith(",label")
    rules = af.mine_rules(csv)
    assert any(line.startswith("IF ") for line in rules.splitlines()), rules
    report = json.loads(af.validate_rules(rules, csv, k=5))
    verdicts = [r["verdict"] for r in report["records"]]
    assert "Passed" in verdicts, verdicts

    # Synthesis -> simulation -> comparison.
    catalog = json.loads(af.synth_catalog(rules))
    assert catalog["schema"] == "attackforge/catalog-v1"
    assert len(catalog["patterns"]) >= 10, len(catalog["patterns"])

    direct = [p for p in catalog["patterns"] if p["class"] == "Direct"]
    small = json.dumps({"schema": catalog["schema"], "patterns": direct[:3]})
    results = json.loads(af.simulate_catalog(small, budget_s=7200))
    assert len(results) == 3
    assert all("Validated" in verdict for _, verdict in results), results

    comparison = json.loads(af.compare_catalog(af.synth_catalog(rules)))
    assert len(comparison["replicated"]) >= 5, comparison["replicated"]

    print("smoke test passed:", len(catalog["patterns"]), "patterns,",
          len(comparison["replicated"]), "expert entries replicated")


if __name__ == "__main__":
    main()
