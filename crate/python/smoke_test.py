"""Smoke test for the rectify Python extension.

Build and install first:

    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/rectify-*.whl
    python python/smoke_test.py
"""

import json
import math

import rectify


def close(a, b, tol=1e-12):
    return math.isclose(a, b, rel_tol=tol, abs_tol=tol)


def main():
    d1 = rectify.Study([2.0, 1.0, 4.0, 3.0], [1.0, 2.0, None, None])
    assert (d1.pool_size, d1.n, d1.nested) == (4, 2, True)

    ppi = d1.ppi()
    assert close(ppi.point, 2.5) and close(ppi.variance, 0.5)
    low, high = ppi.ci
    assert low < ppi.point < high

    assert close(d1.lambda_hat(), -1.0)
    assert close(d1.ppipp().point, 0.5)
    assert close(d1.ppipp(lam=1.0).point, ppi.point)
    assert close(d1.ppipp(lam=0.0).point, d1.labeled_only().point)
    assert close(d1.ppi(variance="superpop-indep").variance, 2 / 2 + 0.5 / 4)

    census = rectify.Study([2.0, 1.0, 4.0, 3.0], [1.0, 2.0, 3.0, 4.0])
    assert close(census.design_effect(), 0.8)
    assert census.exchangeability() == 0.0

    indep = rectify.Study.independent([4.0, 3.0, 5.0], [1.0, 2.0], [2.0, 1.0])
    assert not indep.nested
    try:
        indep.ppi(variance="design")
    except ValueError as e:
        assert "not valid" in str(e)
    else:
        raise AssertionError("design variance on an independent pool must fail")

    arm0 = rectify.Study([2.0, 4.0], [1.0, 3.0])
    arm1 = rectify.Study([3.0, 5.0], [4.0, 6.0])
    assert rectify.ate(arm0, arm1).tau_hat == 3.0
    assert rectify.ate(arm0, arm1, method="pooled").tau_hat == 1.0
    assert close(rectify.theoretical_bias("naive", 0.5, -0.3, 0.2, 0.2), 0.64)

    assert sum(rectify.neyman_allocation([10, 30], [1.0, 1.0], 20)) == 20
    assert rectify.neyman_allocation([10, 30], [1.0, 1.0], 40) == [10, 30]

    report = json.loads(
        rectify.simulate(
            "replications = 200\nmaster_seed = 3\npopulation_size = 100\n"
            'labeled = 20\nestimators = ["ppi", "labeled_only"]\n'
        )
    )
    assert report["replications"] == 200
    assert {r["estimator"] for r in report["rows"]} == {"ppi", "labeled_only"}
    assert json.loads(ppi.to_json())["point"] == 2.5

    print("rectify python smoke test passed")


if __name__ == "__main__":
    main()
