"""Smoke test for the mvlstm_py extension module.

Build and install first:

    pip install --no-build-isolation -e crates/python

then run ``python python/smoke_test.py``.
"""

import math
import os
import tempfile

import mvlstm_py as mv


def main():
    frame = mv.synth([0.9, 0.0, 0.3], self_coef=0.0, noise_std=0.1, length=600, seed=3)
    assert frame.names == ["x1", "x2", "x3", "y"], frame.names
    assert frame.target == "y"
    assert len(frame) == 600

    ranking = mv.granger(frame, lag=2)
    assert ranking[0][0] == "x1" and ranking[0][3], ranking
    print("granger:", [(name, round(f, 2), causal) for name, f, _, causal in ranking])

    err = mv.gradcheck(3, 2, 5, seed=1)
    assert err <= 1e-4, err
    print(f"gradcheck max relative error: {err:.2e}")

    model, rmse, mae = mv.train(frame, window=8, dim=3, lr=5e-3, max_epochs=30, seed=1)
    assert math.isfinite(rmse) and math.isfinite(mae)
    assert model.shape == (4, 3, 8)
    print(f"test rmse {rmse:.4f} mae {mae:.4f} (normalised units)")

    window = [[frame.column(n)[t] for n in frame.names] for t in range(8)]
    pred, alpha = model.predict(window)
    assert math.isfinite(pred)
    assert abs(sum(alpha) - 1.0) < 1e-12 and all(0.0 < a < 1.0 for a in alpha)

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.bin")
        model.save(path)
        again = mv.Model.load(path)
        assert again.predict(window) == (pred, alpha)

    means = model.attention(frame)
    assert abs(sum(m for _, m in means) - 1.0) < 1e-9
    print("attention:", [(name, round(m, 3)) for name, m in means])

    try:
        mv.Frame.from_columns(["a", "b"], [[1.0, 2.0], [3.0, 4.0]], "c")
    except ValueError as e:
        assert "c" in str(e)
    else:
        raise AssertionError("missing target accepted")

    print("ok")


if __name__ == "__main__":
    main()
