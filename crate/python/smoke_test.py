"""Smoke test for the Python extension: build with
`pip install --no-build-isolation -e crates/py`, then run this file."""

import math

import reflectvol as rv


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b}"


def main():
    print("reflectvol", rv.__version__)

    assert rv.skorokhod_map([0.0, -1.0, 0.5, -2.0]) == [0.0, 0.0, 1.5, 0.0]
    assert rv.skorokhod_map([0.0, 1.0, 0.5, 2.0]) == [0.0, 1.0, 0.5, 2.0]

    ou = rv.Model.reflected_ou(q=1.0, m=0.2, xi=0.3, y0=0.2, rho=-0.5, r=0.02)
    assert ou.is_risk_neutral
    drive = [0.3 * math.sin(k) for k in range(50)]
    phi = rv.hat_map(ou, drive)
    assert len(phi) == 51 and min(phi) >= 0.0

    cv = rv.Model.constant_vol(0.3, rho=0.5)
    r = rv.itilde(cv, 0.09, 50)
    close(r["value"], 0.045, 1e-6)

    bm = rv.Model.reflected_bm_drift(a=1.0, xi=1.0, y0=0.0)
    close(rv.l1_infimum(bm, 100), 1.0, 1e-4)

    hit = rv.qtilde_pathset_inf(rv.Model.constant_vol(1.0), "up_in", math.e, 200)
    close(hit["value"], 0.5, 1e-3)

    path = rv.simulate(ou, 1.0, 100, seed=3)
    assert len(path["y"]) == 101 and min(path["y"]) >= 0.0

    est = rv.batch_estimate(ou, 1.0, 100, 20000, 5, "discounted_price")
    assert abs(est["mean"] - 1.0) <= 4 * est["stderr"], est

    call = rv.mc_option_price(rv.Model.constant_vol(0.3), "vanilla_call", 1.0, 1.0, 50, 100000, 9)
    assert abs(call["mean"] - 0.11924) <= 4 * call["stderr"], call

    try:
        rv.Model.reflected_ou(q=1.0, m=0.2, xi=-1.0, y0=0.2)
    except ValueError:
        pass
    else:
        raise AssertionError("negative xi accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
