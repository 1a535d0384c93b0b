import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from framevqa.model import (
    Batch, DimMismatch, EmptyQuestion, FeatureStore, MultitaskParams, RmspropState, ShapeMismatch,
    TrainConfig, UnlabeledSample, encode_image, encode_question, forward, gradients, load_checkpoint,
    log_softmax, loss, per_verb_prior, predict, prior_baseline, rmsprop_step, save_checkpoint,
    synthetic_features, tokenize, train,
)
from framevqa.realize import Dataset, QASample
from framevqa.synthetic import make_world


def toy_params(seed=0, vocab=6, C=3, R=2, d_w=3, d_h=4, d_img=5):
    return MultitaskParams.init(np.random.default_rng(seed), vocab, C, R, d_w, d_h, d_img)


def toy_batch(seed=1, n=5, vocab=6, C=3, R=2, d_img=5):
    rng = np.random.default_rng(seed)
    tokens = [rng.integers(0, vocab, size=rng.integers(1, 5)) for _ in range(n)]
    return Batch(tokens, rng.standard_normal((n, d_img)), rng.integers(0, C, n), rng.integers(0, R, n))


def finite_difference(batch, params, name, index, step=1e-5, **kw):
    arr = getattr(params, name)
    old = arr[index]
    arr[index] = old + step
    up = loss(batch, params, **kw)
    arr[index] = old - step
    down = loss(batch, params, **kw)
    arr[index] = old
    return (up - down) / (2 * step)


def test_encode_question():
    p = toy_params()
    one = encode_question([2], p)
    assert np.allclose(one, np.tanh(p.word_embeddings[2] @ p.question_w + p.question_b))
    assert np.allclose(encode_question([1, 2, 3], p), encode_question([3, 1, 2], p), rtol=0, atol=1e-15)
    p.word_embeddings[:] = 0
    p.question_b[:] = 0.3
    assert np.allclose(encode_question([0, 4], p), np.tanh(0.3))
    with pytest.raises(EmptyQuestion):
        encode_question([], p)


def test_encode_image():
    p = toy_params(d_h=5, d_img=5)
    p.image_b[:] = 0.2
    assert np.allclose(encode_image(np.zeros(5), p), np.tanh(0.2))
    p.image_w[:] = np.eye(5)
    p.image_b[:] = 0
    raw = np.linspace(-1, 1, 5)
    assert np.allclose(encode_image(raw, p), np.tanh(raw))
    with pytest.raises(DimMismatch):
        encode_image(np.zeros(4), p)


def test_synthetic_features_reproducible():
    a = synthetic_features("img_1", 7, 16)
    assert np.array_equal(a, synthetic_features("img_1", 7, 16))
    assert not np.array_equal(a, synthetic_features("img_1", 8, 16))
    assert not np.array_equal(a, synthetic_features("img_2", 7, 16))
    store = FeatureStore(dim=16, synthetic_seed=7)
    assert np.array_equal(store("img_1"), a)


def test_feature_file_round_trip(tmp_path):
    store = FeatureStore({"a": np.arange(3.0), "b": np.ones(3)})
    p = tmp_path / "f.jsonl"
    with open(p, "w") as fh:
        store.write_jsonl(fh)
    back = FeatureStore.load_jsonl(p)
    assert back.dim == 3 and np.array_equal(back("a"), np.arange(3.0))
    with pytest.raises(KeyError):
        back("missing")


def test_forward_simplex_and_uniform_heads():
    p, b = toy_params(), toy_batch()
    pa, pr = forward(b, p)
    assert np.allclose(pa.sum(1), 1, atol=1e-6) and np.allclose(pr.sum(1), 1, atol=1e-6)
    assert (pa >= 0).all() and (pr >= 0).all()
    for name in ("answer_w", "answer_b", "element_w", "element_b"):
        getattr(p, name)[:] = 0
    pa, pr = forward(b, p)
    assert np.allclose(pa, 1 / 3) and np.allclose(pr, 1 / 2)


def test_softmax_closed_form():
    assert np.allclose(np.exp(log_softmax(np.array([math.log(3), 0.0]))), [0.75, 0.25])
    # max subtraction keeps huge logits finite
    assert np.isfinite(log_softmax(np.array([1e4, 0.0]))).all()


def test_loss_identities():
    p, b = toy_params(), toy_batch()
    for name in ("answer_w", "answer_b", "element_w", "element_b"):
        getattr(p, name)[:] = 0
    assert loss(b, p) == pytest.approx(math.log(3) + math.log(2))
    assert loss(b, p, "average") == 0.5 * loss(b, p, "sum")
    assert loss(b, p, single_task=True) == pytest.approx(math.log(3))

    # perfect one-hot predictions: enormous logit on the right class
    p2 = toy_params()
    b2 = toy_batch()
    b2.answers[:] = 1
    b2.elements[:] = 0
    p2.answer_w[:] = 0
    p2.element_w[:] = 0
    p2.answer_b[:] = [0, 100, 0]
    p2.element_b[:] = [100, 0]
    assert loss(b2, p2) == pytest.approx(0, abs=1e-40)

    b2.answers[0] = -1
    with pytest.raises(UnlabeledSample):
        loss(b2, p2)


@settings(deadline=None, max_examples=20)
@given(st.integers(0, 10_000))
def test_average_mode_is_half_sum(seed):
    p, b = toy_params(seed), toy_batch(seed + 1)
    assert loss(b, p, "average") == 0.5 * loss(b, p, "sum")
    _, g_sum = gradients(b, p, "sum")
    _, g_avg = gradients(b, p, "average")
    for k in g_sum:
        assert np.allclose(g_avg[k], 0.5 * g_sum[k], rtol=1e-12, atol=0)


@pytest.mark.parametrize("single_task", [False, True])
@pytest.mark.parametrize("mode", ["sum", "average"])
def test_gradients_match_finite_differences(single_task, mode):
    p, b = toy_params(3), toy_batch(4)
    rng = np.random.default_rng(5)
    for arr in p.as_dict().values():
        arr += rng.normal(0, 0.3, arr.shape)
    value, grads = gradients(b, p, mode, single_task)
    assert value == pytest.approx(loss(b, p, mode, single_task))
    for name, arr in p.as_dict().items():
        for index in np.ndindex(arr.shape):
            num = finite_difference(b, p, name, index, mode=mode, single_task=single_task)
            ana = grads[name][index]
            assert abs(ana - num) <= 1e-4 * max(abs(ana), abs(num)) + 1e-9, (name, index)


def test_answer_head_gradient_rows_sum_to_zero():
    p, b = toy_params(), toy_batch()
    for name in ("answer_w", "answer_b", "element_w", "element_b"):
        getattr(p, name)[:] = 0
    b.answers[:] = [0, 1, 2, 0, 1]
    _, g = gradients(b, p)
    assert np.allclose(g["answer_w"].sum(axis=1), 0)
    assert np.allclose(g["answer_b"].sum(), 0)


def test_rmsprop_hand_arithmetic():
    p = toy_params()
    for arr in p.as_dict().values():
        arr[...] = 1.0
    grads = {k: np.ones_like(v) for k, v in p.as_dict().items()}
    state = RmspropState(lr=0.01, rho=0.9, eps=1e-8)
    rmsprop_step(p, grads, state)
    assert np.allclose(state.accumulators["answer_w"], 0.1)
    assert p.answer_w[0, 0] == pytest.approx(1 - 0.01 / (math.sqrt(0.1) + 1e-8))
    assert p.answer_w[0, 0] == pytest.approx(0.96838, abs=1e-5)

    before = p.copy()
    zeros = {k: np.zeros_like(v) for k, v in p.as_dict().items()}
    rmsprop_step(p, zeros, state)
    assert np.array_equal(p.answer_w, before.answer_w)
    assert np.allclose(state.accumulators["answer_w"], 0.09)

    with pytest.raises(ShapeMismatch):
        rmsprop_step(p, {**zeros, "answer_b": np.zeros(7)}, state)


def test_rmsprop_is_deterministic():
    runs = []
    for _ in range(2):
        p, b = toy_params(), toy_batch()
        state = RmspropState()
        for _ in range(2):
            _, g = gradients(b, p)
            rmsprop_step(p, g, state)
        runs.append(p)
    for k, v in runs[0].as_dict().items():
        assert np.array_equal(v, runs[1].as_dict()[k])


def test_param_shapes_checked():
    p = toy_params()
    d = p.as_dict()
    d["fusion1_b"] = np.zeros(9)
    with pytest.raises(ShapeMismatch):
        MultitaskParams(**d)


@pytest.fixture(scope="module")
def world():
    return make_world(seed=0, n_verbs=3, images_per_verb=20)


@pytest.fixture(scope="module")
def overfit(world):
    small = Dataset(world.dataset().split("train")[:20])
    config = TrainConfig(epochs=300, seed=3)
    return small, config, *train(small, config, world.features)


def test_training_converges(overfit, world):
    small, config, model, history = overfit
    assert len(history) == config.epochs
    assert history[-1]["loss"] < 0.05
    preds = predict(small, model, "train", world.features)
    assert len(preds) == 20
    assert all(p.predicted_answer == s.answer for p, s in zip(preds, small.samples))
    batch = model.encode(small.samples, world.features)
    _, grads = gradients(batch, model.params)
    norm = math.sqrt(sum(float((g ** 2).sum()) for g in grads.values()))
    assert norm < 1e-3


def test_training_is_reproducible(world):
    small = Dataset(world.dataset().split("train")[:20])
    config = TrainConfig(epochs=5, batch_size=7, seed=11)
    _, h1 = train(small, config, world.features)
    _, h2 = train(small, config, world.features)
    assert h1 == h2


def test_predict_ties_go_to_lowest_index(overfit, world):
    small, _, model, _ = overfit
    params = model.params.copy()
    for name in ("answer_w", "answer_b", "element_w", "element_b"):
        getattr(params, name)[:] = 0
    tied = type(model)(params, model.words, model.answers, model.elements, model.config)
    preds = predict(small, tied, "train", world.features)
    assert {p.predicted_answer for p in preds} == {model.answers[0]}
    assert {p.predicted_element for p in preds} == {model.elements[0]}


def test_single_task_predictions_have_no_element(world):
    small = Dataset(world.dataset().split("train")[:10])
    model, _ = train(small, TrainConfig(epochs=2, single_task=True), world.features)
    assert all(p.predicted_element is None for p in predict(small, model, "train", world.features))


def test_checkpoint_round_trip(overfit, world, tmp_path):
    small, _, model, _ = overfit
    path = tmp_path / "m.npz"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    assert back.answers.items == model.answers.items and back.config == model.config
    assert predict(small, back, "train", world.features) == predict(small, model, "train", world.features)


def test_tokenize():
    assert tokenize("What does the boy use to cook in wok?") == ["what", "does", "the", "boy", "use", "to", "cook",
                                                                 "in", "wok"]


def _qa(verb, answer):
    return QASample("i", verb, "q?", answer, "AGENT", "train")


def test_baselines():
    assert prior_baseline([_qa("v", "a"), _qa("v", "a"), _qa("v", "b")]) == "a"
    assert prior_baseline([_qa("v", "b"), _qa("v", "a")]) == "a"
    assert per_verb_prior([_qa("v", "a"), _qa("w", "b"), _qa("w", "b"), _qa("v", "c"), _qa("v", "c")]) == {
        "v": "c", "w": "b"}
