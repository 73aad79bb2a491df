import json

import numpy as np
import pytest

from bbfn.data import (DataError, SyntheticGenSpec, generate, load, make_batches, manifest_for, save)


def _same(a, b):
    assert len(a) == len(b)
    for r, s in zip(a, b):
        assert (r.id, r.label, r.n) == (s.id, s.label, s.n)
        for m in r.features:
            assert np.asarray(r.features[m]).tobytes() == np.asarray(s.features[m]).tobytes()


def test_generation_is_deterministic():
    spec = SyntheticGenSpec(seed=5)
    _same(generate(spec, 20), generate(spec, 20))
    assert generate(spec, 3, "train")[0].label != generate(spec, 3, "test")[0].label


def test_record_shapes():
    spec = SyntheticGenSpec(seed=1, n_min=3, n_max=6)
    for r in generate(spec, 30):
        assert 3 <= r.n <= 6
        for m, dm in spec.dims.items():
            assert r.features[m].shape == (r.n + 2, dm)
        assert -3 <= r.label <= 3


def test_noise_free_text_only_label_is_function_of_text():
    spec = SyntheticGenSpec(seed=2, weights=(1.0, 0.0, 0.0), noise=0.0, nuisance=0.0)
    recs = generate(spec, 50)
    # with no noise each text word row is s*u + mu, so the latent is recoverable exactly
    X = np.array([r.features["t"][1] for r in recs])
    u = np.linalg.svd(X - X.mean(0))[2][0]
    s = (X - X[0]) @ u
    y = np.array([r.label for r in recs])
    inside = np.abs(y) < 3
    coef = np.polyfit(s[inside], y[inside], 1)
    np.testing.assert_allclose(np.polyval(coef, s[inside]), y[inside], atol=1e-9)


def test_text_probe_explains_label_variance():
    recs = generate(SyntheticGenSpec(seed=0, weights=(1.0, 0.3, 0.3), noise=0.1), 512)
    X = np.array([r.features["t"][1:-1].mean(0) for r in recs])
    X = np.hstack([X, np.ones((len(X), 1))])
    y = np.array([r.label for r in recs])
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    r2 = 1 - np.var(y - X @ beta) / np.var(y)
    assert r2 >= 0.8


def test_integer_and_binary_labels():
    assert all(r.label == int(r.label) for r in generate(SyntheticGenSpec(seed=0, label_mode="integer"), 30))
    assert {r.label for r in generate(SyntheticGenSpec(seed=0, task="binary"), 40)} == {0.0, 1.0}


def test_round_trip(tmp_path):
    for src in ("features", "tokens"):
        spec = SyntheticGenSpec(seed=4, text_source=src)
        recs = generate(spec, 12)
        path = tmp_path / f"{src}.jsonl"
        save(path, manifest_for(spec), recs)
        manifest, back = load(path)
        _same(recs, back)
        assert manifest.modalities["t"]["source"] == src


def test_empty_dataset(tmp_path):
    spec = SyntheticGenSpec(seed=0)
    path = tmp_path / "e.jsonl"
    save(path, manifest_for(spec), [])
    manifest, recs = load(path)
    assert recs == [] and manifest.task == "regression"


def _write(path, lines):
    path.write_text("\n".join(json.dumps(x) if not isinstance(x, str) else x for x in lines) + "\n")


def test_load_errors_carry_line_numbers(tmp_path):
    spec = SyntheticGenSpec(seed=0)
    man = manifest_for(spec).to_json()
    good = [json.loads(json.dumps({"id": r.id, "label": r.label, "n": r.n,
                                   **{m: a.tolist() for m, a in r.features.items()}})) for r in generate(spec, 3)]
    bad_width = json.loads(json.dumps(good[1]))
    bad_width["v"] = [row[:-1] for row in bad_width["v"]]
    cases = {
        "width": (bad_width, "width"),
        "json": ("{not json", "bad JSON"),
        "rows": ({**good[1], "n": good[1]["n"] + 1}, "rows"),
        "label": ({**good[1], "label": 4.0}, "outside"),
        "missing": ({k: v for k, v in good[1].items() if k != "a"}, "lacks modality"),
    }
    for name, (rec, text) in cases.items():
        path = tmp_path / f"{name}.jsonl"
        _write(path, [man, good[0], rec, good[2]])
        with pytest.raises(DataError) as exc:
            load(path)
        assert exc.value.line == 3, name
        assert text in str(exc.value) and str(exc.value).startswith("line 3:")
    nan_rec = json.dumps(good[0]).replace(str(good[0]["t"][1][0]), "NaN", 1)
    path = tmp_path / "nan.jsonl"
    _write(path, [man, nan_rec])
    with pytest.raises(DataError, match="line 2"):
        load(path)
    path = tmp_path / "noman.jsonl"
    path.write_text("")
    with pytest.raises(DataError, match="line 1"):
        load(path)


def test_batches_and_masks():
    recs = generate(SyntheticGenSpec(seed=3, n_min=2, n_max=7), 10)
    batches = list(make_batches(recs, 4))
    assert [len(b) for b in batches] == [4, 4, 2]
    assert [i for b in batches for i in b.ids] == [r.id for r in recs]
    for b, chunk in zip(batches, (recs[:4], recs[4:8], recs[8:])):
        assert list(b.mask.sum(axis=1)) == [r.n + 2 for r in chunk]
        assert b.features["t"].shape[:2] == b.mask.shape
        assert np.all(b.features["v"][~b.mask] == 0)


def test_shuffled_batches_are_seeded_permutations():
    recs = generate(SyntheticGenSpec(seed=3), 10)
    a = [i for b in make_batches(recs, 3, seed=7, shuffle=True, epoch=1) for i in b.ids]
    b = [i for b in make_batches(recs, 3, seed=7, shuffle=True, epoch=1) for i in b.ids]
    c = [i for b in make_batches(recs, 3, seed=7, shuffle=True, epoch=2) for i in b.ids]
    assert a == b and sorted(a) == sorted(r.id for r in recs) and a != c
    assert [len(x) for x in make_batches(recs, 4, min_size=4)] == [4, 4]
    with pytest.raises(ValueError):
        next(make_batches(recs, 3, shuffle=True))


def test_token_batches_are_framed():
    recs = generate(SyntheticGenSpec(seed=0, text_source="tokens", n_min=2, n_max=3), 2)
    b = next(make_batches(recs, 2))
    ids = b.features["t"]
    assert ids.dtype == np.int64
    for i, r in enumerate(recs):
        assert ids[i, 0] == 0 and ids[i, r.n + 1] == 1
        np.testing.assert_array_equal(ids[i, 1:r.n + 1], r.features["t"])


def test_spec_validation():
    with pytest.raises(ValueError):
        generate(SyntheticGenSpec(weights=(0, 0, 0)), 3)
    with pytest.raises(ValueError):
        generate(SyntheticGenSpec(n_min=5, n_max=4), 3)
