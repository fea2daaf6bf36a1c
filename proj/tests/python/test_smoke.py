"""Smoke tests for the python bindings (run via ctest)."""

import math

import nutriscreen as ns


def test_derive_label():
    assert ns.derive_label(-2.5, -1.0, -1.0)["malnourished"] is True
    assert ns.derive_label(-2.0, -2.0, -2.0)["malnourished"] is False  # strict boundary
    assert ns.derive_label(0.0, 0.0, 0.0)["malnourished"] is False


def test_sparsemax():
    assert ns.sparsemax([2.0, 0.0]) == [1.0, 0.0]
    out = ns.sparsemax([0.5, 0.5])
    assert abs(out[0] - 0.5) < 1e-12 and abs(out[1] - 0.5) < 1e-12


def test_metrics():
    assert ns.roc_auc([1, 0, 1, 0], [0.8, 0.7, 0.6, 0.5]) == 0.75
    assert abs(ns.average_precision([1, 0, 1], [0.9, 0.8, 0.7]) - 5.0 / 6.0) < 1e-12
    assert abs(ns.brier([1, 0, 1], [0.8, 0.4, 0.6]) - 0.12) < 1e-12
    m = ns.evaluate_scores([1, 1, 0, 0], [0.9, 0.4, 0.3, 0.2], 0.5)
    assert m["precision"] == 1.0 and m["recall"] == 0.5


def test_boruta_threshold():
    assert ns.boruta_min_hits_to_confirm(20, 0.05, 16) == 18


def test_generate_encode_fit():
    header, rows = ns.generate_table(400, seed=7, mode="planted")
    assert len(rows) == 400
    X, y, names = ns.encode_default(header, rows)
    assert len(X) == 400 and len(names) == 16
    assert set(y) == {0, 1}

    train_idx, test_idx = ns.split_stratified(X, y, 0.8, 42)
    assert len(train_idx) + len(test_idx) == 400

    model = ns.fit_model("logistic_regression", [X[i] for i in train_idx], [y[i] for i in train_idx], seed=1)
    scores = model.score([X[i] for i in test_idx])
    auc = ns.roc_auc([y[i] for i in test_idx], scores)
    assert auc > 0.75, f"planted-signal AUC too low: {auc}"


def test_determinism():
    a = ns.generate_table(50, seed=11, mode="marginal")
    b = ns.generate_table(50, seed=11, mode="marginal")
    assert a == b


def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for test in tests:
        test()
        print(f"ok: {test.__name__}")
    print(f"{len(tests)} python smoke tests passed")


if __name__ == "__main__":
    main()
