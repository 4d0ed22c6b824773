#!/usr/bin/env python3
"""Smoke test for the affine_premia Python extension.

Build the extension first:

    cargo build -p affine-premia-py --release

then run this script from anywhere inside the repository:

    python3 python/smoke_test.py

It locates the built cdylib, exposes it as an importable module, and checks
a handful of identities against known values.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path


def locate_and_import():
    root = Path(__file__).resolve().parent.parent
    candidates = [
        root / "target" / "release" / "libaffine_premia.so",
        root / "target" / "debug" / "libaffine_premia.so",
        root / "target" / "release" / "libaffine_premia.dylib",
        root / "target" / "debug" / "libaffine_premia.dylib",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit(
            "extension not found; run `cargo build -p affine-premia-py --release` first"
        )
    stage = Path(tempfile.mkdtemp(prefix="affine_premia_py_"))
    shutil.copy2(built, stage / "affine_premia.so")
    sys.path.insert(0, str(stage))
    import affine_premia

    return affine_premia


def approx(a, b, rel=1e-9, abs_tol=0.0):
    assert math.isfinite(a), f"non-finite value {a}"
    assert abs(a - b) <= max(abs_tol, rel * abs(b)), f"{a} != {b}"


def main():
    ap = locate_and_import()

    # Cumulants of the compound-Poisson-exponential family.
    sub = ap.SubordinatorSpec.cp_exp(0.4, 2.0)
    assert sub.theta_max() == 2.0
    approx(sub.cumulant(0.0), 0.0, abs_tol=0.0)
    approx(sub.cumulant(1.0), 0.2)
    approx(sub.cumulant_deriv(0.0, 1), 0.1)
    round_trip = ap.SubordinatorSpec.from_json(sub.to_json())
    approx(round_trip.cumulant(1.0), 0.2)

    # Lambert W identity.
    w = ap.lambert_w0(1.0)
    approx(w * math.exp(w), 1.0, rel=1e-12)

    # Admissibility analysis at the worked parameter set.
    approx(ap.u_min(sub, -5.0, 0.45), 7.0 * (1.0 - 0.45 ** (1.0 / 3.0)), rel=1e-12)
    bm = ap.beta_max(sub, -5.0, 0.5, 1.11)
    approx(bm, 0.48379523303635, rel=1e-8)
    member, lam_min = ap.in_db(sub, -5.0, 0.45, 0.5, 1.11)
    assert member and lam_min < 0.0
    assert ap.beta_max(sub, 0.0, 0.5, 0.2) is None  # no admissible speed fraction

    params = ap.ModelParams(0.127, 1.11, sub)
    ok, margin, max_upsilon, _ = ap.check_assumption_p(params)
    assert ok
    approx(max_upsilon, 0.29080060467313423, rel=1e-9)
    approx(margin, 2.0 - 0.29080060467313423, rel=1e-9)

    # Arithmetic pricing: the premium vanishes without a factor change.
    state = ap.MarketState(0.0, 2.5, 0.0625)
    mc_vol_only = ap.MeasureChange(0.0, -5.0, 0.0, 0.45)
    value, _, _ = ap.premium_arithmetic(params, mc_vol_only, state, 120.0)
    assert value == 0.0
    f0 = ap.forward_arithmetic(params, ap.MeasureChange.p(), state, 0.0)
    approx(f0, 2.5, rel=1e-12)

    # Geometric pricing: the Riccati route agrees with the closed form
    # under the historical measure.
    ric_p = ap.RiccatiSolution.solve(params, ap.MeasureChange.p(), 61.0)
    assert ric_p.admissible and ric_p.blow_up is None
    for tau in (1.0, 10.0, 30.0, 60.0):
        approx(
            ap.forward_geometric(params, ap.MeasureChange.p(), state, tau, ric_p),
            ap.forward_geometric_p(params, state, tau),
            rel=1e-7,
        )
    approx(ap.forward_geometric_p(params, state, 30.0), 1.285280407328879, rel=1e-8)

    # Premium sign diagnostic along a short curve.
    mc = ap.MeasureChange(0.0, -5.0, 0.45, 0.45)
    ric = ap.RiccatiSolution.solve(params, mc, 91.0)
    taus, fq, fp, prem, sigma = ap.premium_curve(
        params, mc, state, [1.0, 10.0, 30.0, 90.0], "geometric"
    )
    for q, p_, pr, s in zip(fq, fp, prem, sigma):
        approx(pr / p_ + 1.0, math.exp(s), rel=1e-10)
        assert (pr > 0) == (s > 0)
    approx(
        ap.premium_geometric(params, mc, state, 30.0, ric), fq[2] - fp[2], rel=1e-6
    )

    # Swap price of a constant forward is that constant.
    flat = ap.ModelParams(0.127, 1.11, sub).with_constant_seasonals(7.5, 1.0)
    zero_state = ap.MarketState(0.0, 0.0, 0.0625)
    approx(
        ap.swap_price(flat, ap.MeasureChange.p(), zero_state, 10.0, 40.0, "arithmetic"),
        7.5,
        rel=1e-10,
    )

    # A small Monte Carlo run brackets the analytic forward.
    mean, se = ap.estimate_forward(
        params, ap.MeasureChange.p(), state, 30.0, "geometric", 20000, 7, under_p=True
    )
    assert abs(mean - 1.285280407328879) <= 4.0 * se, (mean, se)
    mean, se = ap.estimate_premium(
        params, ap.MeasureChange.p(), state, 20.0, "geometric", 5000, 7
    )
    assert abs(mean) <= 4.0 * se, (mean, se)

    print("smoke test OK")


if __name__ == "__main__":
    main()
