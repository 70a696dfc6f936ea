"""Smoke test for the gril Python extension.

Build first, for example:
    pip install maturin && maturin develop -m crates/py/Cargo.toml
"""

import math
import os
import random
import tempfile

import gril


def make_data(n=60, p=8, seed=7):
    rng = random.Random(seed)
    beta = [3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0][:p]
    x = [[rng.gauss(0.0, 1.0) for _ in range(p)] for _ in range(n)]
    y = [1.0 + sum(b * v for b, v in zip(beta, row)) + rng.gauss(0.0, 1.0) for row in x]
    return x, y


def main():
    x, y = make_data()
    data = gril.Dataset(x, y)
    assert (data.n, data.p) == (60, 8), data

    lasso = gril.fit(data, method="lasso", lambda1=5.0)
    assert lasso.converged and lasso.kkt_max_violation <= 1e-6, lasso
    assert {0, 1, 4} <= set(lasso.active), lasso.active
    pred = lasso.predict(x[:3])
    assert len(pred) == 3 and all(math.isfinite(v) for v in pred)

    tuned = gril.fit(data, method="AdaCnet", selector="bic")
    assert tuned.converged, tuned
    assert {0, 1, 4} <= set(tuned.active), tuned.active

    lambdas, intercepts, coefs = gril.path(data, method="enet", lambda2=1.0)
    assert lambdas == sorted(lambdas, reverse=True)
    assert all(c == 0.0 for c in coefs[0])
    assert len(lambdas) == len(intercepts) == len(coefs)

    rows = gril.simulate(n=100, replications=3, methods=["lasso", "AdaLasso"], selector="bic")
    assert [r["method"] for r in rows] == ["Lasso", "AdaLasso"], rows
    assert all(r["failures"] == 0 for r in rows)

    bad, text = gril.verify("grouping", seed=3, count=12)
    assert bad == 0, text

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "data.csv")
        with open(path, "w") as fh:
            fh.write("y," + ",".join(f"x{j}" for j in range(8)) + "\n")
            for row, target in zip(x, y):
                fh.write(",".join(repr(v) for v in [target] + row) + "\n")
        again = gril.fit(gril.Dataset.from_csv(path, header=True), method="lasso", lambda1=5.0)
        assert max(abs(a - b) for a, b in zip(again.coefficients, lasso.coefficients)) < 1e-12

    try:
        gril.Dataset([[1.0, 2.0]], [1.0, 2.0])
    except ValueError:
        pass
    else:
        raise AssertionError("length mismatch accepted")

    print("smoke test passed:", lasso, tuned, f"{len(lambdas)} path breakpoints", sep="\n  ")


if __name__ == "__main__":
    main()
