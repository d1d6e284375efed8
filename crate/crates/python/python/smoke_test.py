"""Builds the extension, then trains, evaluates and queries the demo model."""

import json
import os
import shutil
import subprocess
import sys
import sysconfig
import tempfile

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "..", ".."))


def build():
    subprocess.run(["cargo", "build", "--release", "-p", "cota-python"], cwd=ROOT, check=True)
    lib = os.path.join(ROOT, "target", "release", "libcota.so")
    dest = tempfile.mkdtemp()
    shutil.copy(lib, os.path.join(dest, "cota" + sysconfig.get_config_var("EXT_SUFFIX")))
    sys.path.insert(0, dest)


def main():
    build()
    import cota

    out = tempfile.mkdtemp()
    config = os.path.join(ROOT, "configs", "demo.toml")
    print("\n".join(cota.run("train", config, out=out)))
    report = cota.run("evaluate", config, out=out)
    print("\n".join(report))
    assert any(line.startswith("combined accuracy") for line in report)

    model = cota.Model.load(out)
    with open(os.path.join(out, "data", "tickets.jsonl")) as f:
        row = json.loads(f.readline())
    ticket = {k: row[k] for k in ("id", "message", "created_at", "product_type", "user_type",
                                  "country", "city", "eta_minutes", "trip_status", "has_trip")}
    suggestions = json.loads(model.suggest(json.dumps(ticket)))
    assert len(suggestions["contact_type"]) == 3, suggestions
    print("suggestions for", ticket["id"], [s["label"] for s in suggestions["contact_type"]])

    summary = json.loads(cota.evaluate_dump(os.path.join(out, "predictions.jsonl")))
    assert 0.0 <= summary["outputs"]["contact_type"]["accuracy"] <= 1.0
    assert len(cota.feature_hash(json.dumps(ticket), model.version)) == 64

    try:
        cota.run("train", "/nonexistent.toml")
    except ValueError as e:
        print("expected error:", e)
    else:
        raise AssertionError("missing config accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
