"""Smoke test for the dynkt_py extension. Run after building it:

    pip install --no-build-isolation ./crates/py    # or: maturin develop -m crates/py/Cargo.toml
    python crates/py/python/smoke_test.py
"""

import json
import math
import os
import tempfile

import dynkt_py as dk


def main():
    ds, true_w, true_b = dk.Dataset.synthetic(
        60, 20, 2, 15, drift_rate=0.1, learn_gain=0.3, skills=4, seed=1
    )
    assert len(ds) == 60 * 15
    assert ds.num_students == 60 and ds.num_questions == 20 and ds.num_skills == 4
    assert len(true_w) == 20 and len(true_b) == 20
    train, test = ds.split(0.25, seed=0)
    assert train.num_students + test.num_students == 60

    fm = dk.FactorModel.train(train, dim=4, epochs=5, seed=2)
    p = fm.predict(0, 3)
    assert 0.0 < p < 1.0
    assert len(fm.question_embeddings()) == 20

    dm = dk.DynModel.train(train, fm, epochs=2, seed=3)
    history = [(q, r) for (_, q, r, _) in test.interactions()[:10]]
    probs = dm.predict_sequence(history)
    assert len(probs) == 10 and all(0.0 < x < 1.0 for x in probs)
    # a fresh student has zero state, so the first score is the bias alone
    b0 = fm.question_biases()[history[0][0]]
    assert math.isclose(probs[0], 1.0 / (1.0 + math.exp(-b0)), rel_tol=1e-9)

    dkt = dk.DynModel.train_dkt(train, hidden_dim=8, epochs=1, seed=4)
    assert dkt.hidden_dim == 8

    with tempfile.TemporaryDirectory() as tmp:
        fm.save(os.path.join(tmp, "q.model"))
        dm.save(os.path.join(tmp, "d.model"))
        fm2 = dk.FactorModel.load(os.path.join(tmp, "q.model"))
        dm2 = dk.DynModel.load(os.path.join(tmp, "d.model"))
        assert fm2.question_embeddings() == fm.question_embeddings()
        assert dm2.predict_sequence(history) == probs
        ds.save_canonical(os.path.join(tmp, "ds.csv"))
        again = dk.Dataset.load_canonical(os.path.join(tmp, "ds.csv"))
        assert again.interactions() == ds.interactions()

    assert dk.auc([0, 1, 0, 1], [0.1, 0.9, 0.5, 0.5]) == 0.875

    report = json.loads(
        dk.evaluate(
            ds,
            {"model": "dynemb", "mf.dim": "4", "mf.epochs": "5", "dyn.epochs": "1", "seed": "5"},
        )
    )
    assert report["model_name"] == "dynemb"
    assert 0.0 <= report["auc"] <= 1.0

    coords, stress = dk.mds(fm, list(range(10)))
    assert len(coords) == 10 and len(coords[0]) == 2 and stress >= 0.0

    try:
        dk.evaluate(ds, {"no.such.key": "1"})
    except ValueError:
        pass
    else:
        raise AssertionError("unknown setting accepted")

    print("dynkt_py smoke test passed")


if __name__ == "__main__":
    main()
