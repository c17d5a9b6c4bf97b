#!/usr/bin/env python3
"""Smoke test for the hesslab_py extension module.

Build the module first:

    cargo build --release -p hesslab-py

The script copies the cdylib next to itself under the importable name and
exercises the kernels, the cone machinery and a small manufactured solve.
"""

import json
import math
import pathlib
import shutil
import sys

HERE = pathlib.Path(__file__).resolve().parent
ROOT = HERE.parent


def ensure_module():
    target = HERE / "hesslab_py.so"
    built = ROOT / "target" / "release" / "libhesslab_py.so"
    if not built.exists():
        sys.exit("build the bindings first: cargo build --release -p hesslab-py")
    if not target.exists() or built.stat().st_mtime > target.stat().st_mtime:
        shutil.copyfile(built, target)
    sys.path.insert(0, str(HERE))


def approx(a, b, tol=1e-12):
    assert abs(a - b) <= tol * (1.0 + abs(a) + abs(b)), f"{a} != {b}"


def main():
    ensure_module()
    import hesslab_py as hl

    # elementary symmetric functions and the rho identities
    assert hl.sigma_all([3.0, 2.0, 1.0]) == [1.0, 6.0, 11.0, 6.0]
    approx(hl.rho_k([3.0, 2.0, 1.0], 1), 6.0)   # rho_1 = sigma_n
    approx(hl.rho_k([3.0, 2.0, 1.0], 3), 6.0)   # rho_n = sigma_1
    approx(hl.rho_k([3.0, 2.0, 1.0], 2), 60.0)

    # cone membership
    assert hl.cone_membership("gamma_n", [1.0, 1.0]) == "inside"
    assert hl.cone_membership("gamma_k", [3.0, 1.0, -1.0], k=2) == "outside"
    assert hl.cone_membership("p_k", [5.0, -1.0, -1.0], k=2) == "outside"

    # jets: sigma_2^{1/2} at (1,2,3)
    jet = hl.operator_jet("sigmak", [1.0, 2.0, 3.0], k=2)
    approx(jet["value"], math.sqrt(11.0))
    expected = [x / (2.0 * math.sqrt(11.0)) for x in (3.0, 4.0, 5.0)]
    for g, e in zip(jet["grad"], expected):
        approx(g, e)

    # structure conditions hold on samples
    rep = hl.structure_report("logrho", 3, k=2, samples=300)
    assert rep["min_grad_entry"] > 0.0
    assert rep["midpoint_violations"] == 0

    # tangent cone ranks match the analytic values
    assert hl.tangent_cone_rank("logrho", 3, 0.0, k=2) == 2
    assert hl.tangent_cone_rank("sigmak", 3, 1.0, k=2) == 2

    # membership and dichotomy for the sigma = 0 hyperbola
    mem = hl.cone_at_infinity_membership("logrho", 2, 0.0, [2.0, 2.0], k=1)
    assert mem["cplus"] == "in" and mem["ctilde"] == "in"
    mem = hl.cone_at_infinity_membership("logrho", 2, 0.0, [1.0, -1.0], k=1)
    assert mem["ctilde"] == "out"
    w = hl.dichotomy("logrho", 2, 0.0, [2.0, 2.0], k=1)
    assert w["violations"] == 0 and w["epsilon"] > 0.0

    # h_mu(r) tabulates without assertion
    rows = hl.h_profile("logrho", 2, 0.0, [2.0, 2.0], [5.0, 10.0, 20.0, 40.0], k=1)
    assert len(rows) == 4 and all(h > 0.0 for _, h, _ in rows)

    # concavity inequality: the hand-checked equality case
    b = [[(0.0, 0.0), (1.0, 0.0)], [(1.0, 0.0), (0.0, 0.0)]]
    m = hl.concavity_margin("logrho", [2.0, 1.0], b, 1, None)
    approx(m["left"], 1.0, 1e-9)
    approx(m["right"], 1.0, 1e-9)
    violations, _ = hl.concavity_trials("sigmak", 3, 200, k=2)
    assert violations == 0

    # a small manufactured Monge-Ampere solve round-trips
    config = {
        "dimension": 2,
        "resolution": 8,
        "operator": {"family": "log_rho_k", "k": 1},
        "chi": {"kind": "constant", "matrix": [[1.0, 0.0], [0.0, 1.0]]},
        "metric": {"kind": "flat"},
        "psi": {
            "kind": "manufactured",
            "u_star": {"terms": [{"amp": 0.05, "fn": "cos", "axis": 0}]},
        },
    }
    report = json.loads(hl.solve_config(json.dumps(config)))
    assert report["u_error_linf"] < 1e-7, report["u_error_linf"]
    assert abs(report["b"]) < 1e-9

    print("smoke test passed")


if __name__ == "__main__":
    main()
