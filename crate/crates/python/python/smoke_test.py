"""Smoke test for the pyouneumann extension.

Build and run from the repository root:

    cargo build --release -p ouneumann-python --features extension-module
    cp target/release/libpyouneumann.so crates/python/python/pyouneumann.so
    python3 crates/python/python/smoke_test.py
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pyouneumann as ou  # noqa: E402


def check(cond, msg):
    if not cond:
        raise AssertionError(msg)
    print("ok  ", msg)


def main():
    check(ou.__version__ == "0.1.0", "version string")

    half = ou.Domain.half_space([1.0], 0.0)
    check(half.dim == 1 and half.contains([-1.0]) and not half.contains([0.5]), "half-line membership")
    check(half.project([2.0]) == [0.0], "projection onto the half-line")
    disk = ou.Domain.ball([0.0, 0.0], 1.0)
    n = disk.normal([0.6, 0.8])
    check(abs(n[0] - 0.6) < 1e-12 and abs(n[1] - 0.8) < 1e-12, "disk outward normal")
    cyl = ou.Domain.cylinder(ou.Domain.slab([1.0], 1.0), 2)
    check(cyl.dim == 3, "cylinder dimension")
    check(ou.Domain.from_json(disk.to_json()).to_json() == disk.to_json(), "domain JSON round trip")

    try:
        ou.Domain.ball([0.0], -1.0)
        raise AssertionError("negative radius accepted")
    except ValueError:
        print("ok   negative radius rejected")

    # Constant data: u = c / lam exactly, and r1 = 1.
    sol = ou.solve(half, ou.Function.constant(1.0), 2.0)
    check(all(abs(v - 0.5) < 1e-10 for v in sol.values), "constant data gives u = 1/lam")
    check(abs(sol.report["r1"] - 1.0) < 1e-8, "constant data attains r1 = 1")

    # Manufactured cubic on the slab, Function and Python callable agree.
    slab = ou.Domain.slab([1.0], 1.0)
    u_exact = ou.Function.axis_poly(0, [0.0, -3.0, 0.0, 1.0])
    check(abs(u_exact.apply_operator([0.5], 1.0) - (4 * 0.125 - 6.0)) < 1e-12, "operator applied to x^3 - 3x")
    f = ou.Function.axis_poly(0, [0.0, -12.0, 0.0, 4.0])
    a = ou.solve(slab, f, 1.0, spacing=1 / 128)
    b = ou.solve(slab, lambda x: 4 * x[0] ** 3 - 12 * x[0], 1.0, spacing=1 / 128)
    err = max(abs(v - u_exact(x)) for x, v in zip(a.nodes, a.values))
    check(err < 1e-4, f"manufactured cubic max error {err:.2e}")
    check(max(abs(p - q) for p, q in zip(a.values, b.values)) < 1e-12, "callable and catalogue data agree")
    check(abs(a.eval([0.5]) + 1.375) < 1e-4, "interpolated value at 0.5")
    for key in ("r1", "r2", "r3", "w22_ratio"):
        check(0.0 <= a.report[key] <= 1.05, f"a-priori ratio {key} = {a.report[key]:.4f}")

    try:
        ou.solve(slab, lambda x: 1.0 / 0.0, 1.0)
        raise AssertionError("callable error swallowed")
    except ZeroDivisionError:
        print("ok   callable exceptions propagate")

    # Radial solver: f = 1.25 r^4 - 5.5 r^2 + 2 has u = r^4/4 - r^2/2.
    rad = ou.radial_solve(disk, lambda r: 1.25 * r**4 - 5.5 * r**2 + 2.0, 1.0, n_r=257)
    check(abs(rad.eval([0.5, 0.0]) - (0.0625 / 4 - 0.125)) < 1e-3, "radial quartic at r = 0.5")

    # Oracle on constant data is exact and seeded.
    est = ou.feynman_kac(slab, ou.Function.constant(1.0), 2.0, [0.3], n_paths=64, dt=0.01, seed=3)
    check(abs(est["value"] - 0.5) < 1e-12, "oracle exact on constant data")
    e1 = ou.feynman_kac(slab, lambda x: math.cos(x[0]), 1.0, [0.3], n_paths=64, dt=0.01, seed=5)
    e2 = ou.feynman_kac(slab, lambda x: math.cos(x[0]), 1.0, [0.3], n_paths=64, dt=0.01, seed=5)
    check(e1 == e2, "oracle is deterministic for a fixed seed")

    rows = ou.dimension_sweep(half, ou.Function.bump([-0.3], 0.7, 1.0), 1.0, [1, 2, 3], hermite_modes=3)
    r1 = [r["r1"] for r in rows]
    check(max(r1) - min(r1) <= 1e-6 * max(r1), "sweep ratios flat across dimensions")

    eq = ou.cylinder_equivalence(slab, f, 1.0)
    check(eq["l2_discrepancy"] <= 5 * (1 / 32) ** 2, "solve-and-lift equivalence")
    check(abs(ou.w22_constant(1.0) - 4.0) < 1e-15, "W22 constant at lam = 1")

    battery = ou.verify()
    check(battery["failed"] == 0 and battery["passed"] > 100, f"battery: {battery['passed']} checks passed")

    with tempfile.TemporaryDirectory() as out:
        code, failures, artifacts = ou.run_config(f'command = "solve"\nlambda = 2.0\noutput_dir = "{out}"\n')
        check(code == 0 and not failures and len(artifacts) == 2, "configured solve run")

    print("smoke test passed")


if __name__ == "__main__":
    main()
