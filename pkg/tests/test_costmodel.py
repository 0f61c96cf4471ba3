import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gradjoin import costmodel as cm
from gradjoin import tensor as T
from gradjoin.plan import Plan, encode
from gradjoin.storage import c_out_true


def _examples(store, queries, plans_per_query=3, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for q in queries:
        for _ in range(plans_per_query):
            plan = Plan.left_linear(rng.permutation(q.n))
            x = cm.build_features(q, 4, store)
            out.append(cm.TrainingExample(x, encode(plan), float(c_out_true(store, q, plan).cost), q.id, q.shape))
    return out


def test_feature_layout(toy_store, toy_query):
    x = cm.build_features(toy_query, 4, toy_store)
    assert x.shape == (7, cm.feature_width(4)) == (7, 19)
    # ?x knows ?y: subject and object are variables
    assert x[0, 0] == 1 and np.all(x[0, 1:5] == 1) and x[0, 5] == 0
    emb = x[0, 6:6 + 6]
    assert emb[0] == 0 and np.linalg.norm(emb[1:5]) == pytest.approx(1.0)
    assert emb[5] == pytest.approx(np.log1p(toy_store.count(toy_store.id_of("knows"))))
    assert np.all(x[4:, :-1] == 0) and np.all(x[4:, -1] == 1)
    assert np.all(x[:4, -1] == 0)


def test_pseudo_embedding_is_stable():
    a = cm.pseudo_embedding("knows", 8)
    assert np.array_equal(a, cm.pseudo_embedding("knows", 8))
    assert not np.allclose(a, cm.pseudo_embedding("knows", 8, seed=1))


def test_plan_features_subset(toy_store, toy_query):
    x = cm.build_features(toy_query, 4, toy_store)
    sub = cm.plan_features(x, 4, [3, 1])
    assert sub.shape == (3, x.shape[1])
    assert np.array_equal(sub[0], x[3]) and np.array_equal(sub[2], x[4])


def test_forward_gradients(toy_store, toy_query, random_model):
    x = cm.build_features(toy_query, 4, toy_store)
    a0 = encode(Plan.left_linear([0, 1, 2, 3])) * 0.7 + 0.1

    assert T.finite_diff_check(lambda a: cm.forward(random_model, x, a), a0) < 1e-5
    w0 = random_model.tensors["gin2.mlp_w1"].data.copy()

    def through_weight(w):
        p = random_model.copy()
        p.tensors["gin2.mlp_w1"] = w
        return cm.forward(p, x, a0)

    assert T.finite_diff_check(through_weight, w0[:, :]) < 1e-5


@given(st.permutations(range(4)), st.permutations(range(7)))
def test_model_ignores_node_numbering(order, relabel):
    params = cm.init_params(d_e=4, hidden=16, seed=5)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(7, cm.feature_width(4)))
    a = encode(Plan.left_linear(order))
    perm = np.eye(7)[list(relabel)]
    y1 = cm.predict_raw(params, x, a)
    y2 = cm.predict_raw(params, perm @ x, perm @ a @ perm.T)
    assert y1 == pytest.approx(y2, rel=1e-9, abs=1e-12)


def test_batched_forward_matches_single(small_synthetic, random_model):
    store, queries = small_synthetic
    ex = _examples(store, queries[:5])
    X, A, pool, y = cm.collate(ex)
    batched = cm.forward(random_model, X, A, pool).data[:, 0]
    single = [cm.predict_raw(random_model, e.X, e.A) for e in ex]
    assert np.allclose(batched, single, rtol=1e-10)
    assert y[:, 0].tolist() == [e.target for e in ex]


def test_forward_shape_checks(random_model):
    with pytest.raises(T.ShapeError):
        cm.forward(random_model, np.zeros((3, 19)), np.zeros((4, 4)))
    with pytest.raises(T.ShapeError):
        cm.forward(random_model, np.zeros((3, 7)), np.zeros((3, 3)))


def test_output_is_nonnegative(random_model):
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.normal(size=(5, 19))
        assert cm.predict_raw(random_model, x, rng.random((5, 5))) >= 0


@given(st.floats(1e-3, 1e6), st.floats(1e-3, 1e6))
def test_q_error_properties(a, b):
    q = cm.q_error(a, b)
    assert q >= 1.0
    assert q == pytest.approx(cm.q_error(b, a))
    assert cm.q_error(a, a) == 1.0


def test_q_error_edge_cases():
    with pytest.raises(ValueError):
        cm.q_error(0.0, 1.0)
    assert cm.smoothed_q_error(0.0, 0.0) == 1.0
    assert cm.smoothed_q_error(-5.0, 1.0) == 2.0
    assert cm.q_error(2.0, 8.0) == 4.0


def test_split_by_query_keeps_queries_whole(small_synthetic):
    store, queries = small_synthetic
    ex = _examples(store, queries)
    train, val = cm.split(ex, 0.25, 0, by="query")
    assert len(train) + len(val) == len(ex)
    assert not {e.query_id for e in train} & {e.query_id for e in val}
    again = cm.split(ex, 0.25, 0, by="query")
    assert [e.query_id for e in again[1]] == [e.query_id for e in val]
    tp, vp = cm.split(ex, 0.25, 0, by="plan")
    assert len(vp) == round(0.25 * len(ex)) and len(tp) + len(vp) == len(ex)


def test_config_validation():
    with pytest.raises(ValueError):
        cm.TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        cm.TrainConfig(val_fraction=1.0)
    with pytest.raises(ValueError):
        cm.TrainConfig(split_by="shape")
    with pytest.raises(ValueError):
        cm.TrainingExample(np.zeros((1, 19)), np.zeros((1, 1)), -1.0)


def test_training_reduces_error_and_is_seeded(small_synthetic):
    store, queries = small_synthetic
    ex = _examples(store, queries)
    cfg = cm.TrainConfig(epochs=15, batch_size=16, d_e=4, hidden=16, lr=3e-3, seed=2)
    p1, r1 = cm.train(ex, cfg)
    p2, r2 = cm.train(ex, cfg)
    assert r1.train_mse == r2.train_mse
    assert r1.train_mse[-1] < r1.train_mse[0]
    assert r1.best_val_median_q == min(r1.val_median_q)
    assert len(r1.best_val_q) == r1.n_val
    assert np.median(cm.evaluate_q(p1, [e for e in ex])) < 10
    for k in p1.tensors:
        assert np.array_equal(p1.tensors[k].data, p2.tensors[k].data)


def test_per_shape_models(small_synthetic):
    store, queries = small_synthetic
    ex = _examples(store, queries, plans_per_query=2)
    cfg = cm.TrainConfig(epochs=2, batch_size=32, d_e=4, hidden=8)
    models, reports, pooled = cm.train_models(ex, cfg)
    assert sorted(models.models) == ["path", "star"]
    qs = [q for r in reports.values() for q in r.best_val_q]
    assert pooled == pytest.approx(float(np.median(qs)))
    assert models.for_shape("star") is models.models["star"]
    with pytest.raises(KeyError):
        models.for_shape("snowflake")
    one, reports, _ = cm.train_models(ex, cm.TrainConfig(epochs=1, d_e=4, hidden=8, per_shape=False))
    assert list(one.models) == [cm.ANY_SHAPE]
    assert one.for_shape("star") is one.models[cm.ANY_SHAPE]


def test_persistence_round_trip(tmp_path, random_model):
    cm.save_model(random_model, tmp_path / "m.json")
    back = cm.load_model(tmp_path / "m.json")
    for k, v in random_model.tensors.items():
        assert np.array_equal(v.data, back.tensors[k].data)
    assert cm.load_models(tmp_path / "m.json").for_shape("path") is not None

    cm.save_models(cm.ModelSet({"star": random_model}), tmp_path / "s.json")
    assert cm.load_models(tmp_path / "s.json").d_e == 4
    with pytest.raises(cm.ModelFormatError):
        cm.load_model(tmp_path / "s.json")


def test_persistence_rejects_bad_files(tmp_path, random_model):
    cm.save_model(random_model, tmp_path / "m.json")
    doc = json.loads((tmp_path / "m.json").read_text())
    doc["format_version"] = 99
    (tmp_path / "v.json").write_text(json.dumps(doc))
    with pytest.raises(cm.ModelFormatError):
        cm.load_model(tmp_path / "v.json")
    doc["format_version"] = 1
    del doc["tensors"]["proj"]
    (tmp_path / "t.json").write_text(json.dumps(doc))
    with pytest.raises(cm.ModelFormatError):
        cm.load_model(tmp_path / "t.json")
