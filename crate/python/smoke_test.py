#!/usr/bin/env python3
"""Smoke test for the courantlab_py extension module.

Build the extension first, then run this script with the same interpreter
the build linked against:

    cargo build -p courantlab-py
    python3 python/smoke_test.py
"""

import json
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def locate_cdylib() -> pathlib.Path:
    candidates = [
        ROOT / "target" / profile / f"libcourantlab_py{suffix}"
        for profile in ("debug", "release")
        for suffix in (".so", ".dylib")
    ]
    found = [p for p in candidates if p.exists()]
    if not found:
        sys.exit("extension not built; run: cargo build -p courantlab-py")
    return max(found, key=lambda p: p.stat().st_mtime)


def import_module():
    src = locate_cdylib()
    tmp = pathlib.Path(tempfile.mkdtemp(prefix="courantlab-py-"))
    dest = tmp / "courantlab_py.so"
    shutil.copy2(src, dest)
    sys.path.insert(0, str(tmp))
    import courantlab_py

    return courantlab_py


def main() -> None:
    lab = import_module()

    names = lab.list_scenarios()
    assert len(names) == 8, f"expected 8 scenarios, got {len(names)}"
    assert any(name == "circle-symplectic" for name, _ in names)

    report = json.loads(lab.run_scenario("twisted-translation", samples=2, seed=3))
    assert report["schema_version"] == lab.SCHEMA_VERSION
    failed = [c["id"] for c in report["checks"] if not c["pass"]]
    assert report["pass"] is True, f"failed checks: {failed}"
    assert len(report["points"]) == 2

    point = json.loads(lab.reduce_at_point("circle-symplectic", [1.0, 0.2, 0.3, -0.4]))
    assert point["k_dim"] == 2 and point["kg_dim"] == 4
    assert point["level_residual"] < 1e-10
    assert point["oracle_errors"]["oracle_symplectic"] < lab.ORACLE_TOL

    axioms = json.loads(lab.axioms_survey(samples=5, seed=11))
    assert axioms["pass"] is True
    assert axioms["control_jacobi"] > 1e-3

    pairing = lab.split_pairing(2)
    assert pairing[0][2] == 1.0 and pairing[0][0] == 0.0
    rotation = lab.complex_structure_matrix(2)
    assert rotation[0][1] == -1.0 and rotation[1][0] == 1.0

    try:
        lab.run_scenario("not-a-scenario")
    except ValueError as err:
        assert "not-a-scenario" in str(err)
    else:
        sys.exit("unknown scenario should raise ValueError")

    print(f"smoke test passed: {len(names)} scenarios, schema v{report['schema_version']}")


if __name__ == "__main__":
    main()
