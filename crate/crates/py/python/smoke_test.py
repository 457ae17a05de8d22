"""Smoke test for the pytaggnn extension: train, evaluate, predict, save, load."""

import json
import os
import tempfile

import pytaggnn

FIXTURE = os.path.join(os.path.dirname(__file__), "..", "..", "core", "tests", "fixtures", "tiny")
CONFIG = {"dim": 16, "learning_rate": 0.01, "max_epochs": 30, "seed": 0}


def main():
    err = pytaggnn.gradcheck()
    assert err < 1e-4, err
    assert pytaggnn.predict_topk([0.1, 0.9, 0.9], 2) == [1, 2]
    assert abs(pytaggnn.precision_at_k([1, 2, 3], [1, 3], 3) - 2 / 3) < 1e-15

    with tempfile.TemporaryDirectory() as tmp:
        out = os.path.join(tmp, "model")
        model = pytaggnn.train(json.dumps(CONFIG), FIXTURE, out)
        assert model.name == "taggnn-full"
        report = json.loads(model.evaluate([1, 3, 5]))
        for part in ("without_tags", "partial_tags"):
            for k in ("p@1", "p@3", "p@5"):
                assert 0.0 <= report[part][k] <= 1.0

        linked = {line.split("\t")[1].strip() for line in open(os.path.join(FIXTURE, "item_tag_edges.tsv")) if line.startswith("i1\t")}
        tags = model.predict("i1", 5)
        assert len(tags) == 5 and not linked & {t for t, _ in tags}

        copy = os.path.join(tmp, "copy")
        model.save(copy)
        again = pytaggnn.Model.load(copy, FIXTURE)
        assert again.evaluate([1, 3, 5]) == model.evaluate([1, 3, 5])

        synth = os.path.join(tmp, "synth")
        pytaggnn.generate_synthetic(synth, "overfit", seed=1)
        assert len(open(os.path.join(synth, "items.tsv")).read().splitlines()) == 50

        try:
            pytaggnn.train('{"dimension": 3}', FIXTURE, out)
        except ValueError as e:
            assert "dimension" in str(e)
        else:
            raise AssertionError("unknown config key accepted")
    print("pytaggnn smoke test passed")


if __name__ == "__main__":
    main()
