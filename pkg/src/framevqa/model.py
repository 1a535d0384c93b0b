"""Two-head VQA classifier written directly in numpy.

Question words are averaged into a bag-of-words vector, image features are
projected to the same width, the two are fused by elementwise product and
passed through two tanh layers shared by an answer softmax and a
frame-element softmax. Training minimizes the summed cross-entropies with
RMSProp.
"""
from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .metrics import Prediction
from .realize import Dataset, QASample, Vocab

UNK = "<unk>"
CHECKPOINT_VERSION = 1

_WORD_RE = re.compile(r"[a-z0-9']+")


class ModelError(ValueError):
    pass


class EmptyQuestion(ModelError):
    pass


class DimMismatch(ModelError):
    pass


class UnlabeledSample(ModelError):
    pass


class ShapeMismatch(ModelError):
    pass


def tokenize(question: str) -> list[str]:
    return _WORD_RE.findall(question.lower())


@dataclass
class TrainConfig:
    batch_size: int = 500
    epochs: int = 50
    seed: int = 0
    d_w: int = 32
    d_h: int = 64
    d_img: int = 64
    loss_mode: str = "sum"
    lr: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-8
    single_task: bool = False

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.loss_mode not in ("sum", "average"):
            raise ValueError(f"loss_mode must be 'sum' or 'average', not {self.loss_mode!r}")


@dataclass
class MultitaskParams:
    word_embeddings: np.ndarray
    question_w: np.ndarray
    question_b: np.ndarray
    image_w: np.ndarray
    image_b: np.ndarray
    fusion1_w: np.ndarray
    fusion1_b: np.ndarray
    fusion2_w: np.ndarray
    fusion2_b: np.ndarray
    answer_w: np.ndarray
    answer_b: np.ndarray
    element_w: np.ndarray
    element_b: np.ndarray

    def __post_init__(self):
        v, d_w = self.word_embeddings.shape
        d_h = self.question_w.shape[1]
        expect = {
            "question_w": (d_w, d_h), "question_b": (d_h,),
            "image_b": (d_h,),
            "fusion1_w": (d_h, d_h), "fusion1_b": (d_h,),
            "fusion2_w": (d_h, d_h), "fusion2_b": (d_h,),
            "answer_b": (self.answer_w.shape[1],),
            "element_b": (self.element_w.shape[1],),
        }
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise ShapeMismatch(f"{name}: {getattr(self, name).shape} != {shape}")
        for name in ("image_w", "answer_w", "element_w"):
            if getattr(self, name).shape[0 if name != "image_w" else 1] != d_h:
                raise ShapeMismatch(f"{name} does not match hidden width {d_h}")
        if self.n_answers == 0 or self.n_elements == 0:
            raise ShapeMismatch("need at least one answer and one element class")

    @property
    def n_answers(self) -> int:
        return self.answer_w.shape[1]

    @property
    def n_elements(self) -> int:
        return self.element_w.shape[1]

    @property
    def d_img(self) -> int:
        return self.image_w.shape[0]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def copy(self) -> "MultitaskParams":
        return MultitaskParams(**{k: v.copy() for k, v in self.as_dict().items()})

    @classmethod
    def init(cls, rng: np.random.Generator, vocab_size: int, n_answers: int, n_elements: int,
             d_w: int, d_h: int, d_img: int) -> "MultitaskParams":
        """Glorot-uniform weights, zero biases; draw order is fixed."""
        def glorot(fan_in, fan_out):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-lim, lim, size=(fan_in, fan_out))

        return cls(
            word_embeddings=glorot(vocab_size, d_w),
            question_w=glorot(d_w, d_h), question_b=np.zeros(d_h),
            image_w=glorot(d_img, d_h), image_b=np.zeros(d_h),
            fusion1_w=glorot(d_h, d_h), fusion1_b=np.zeros(d_h),
            fusion2_w=glorot(d_h, d_h), fusion2_b=np.zeros(d_h),
            answer_w=glorot(d_h, n_answers), answer_b=np.zeros(n_answers),
            element_w=glorot(d_h, n_elements), element_b=np.zeros(n_elements),
        )


@dataclass
class Batch:
    """Encoded samples. Label -1 marks a class outside the training vocabulary."""
    token_ids: list[np.ndarray]
    features: np.ndarray
    answers: np.ndarray
    elements: np.ndarray

    def __len__(self):
        return len(self.token_ids)

    def subset(self, idx: Sequence[int]) -> "Batch":
        return Batch([self.token_ids[i] for i in idx], self.features[idx], self.answers[idx], self.elements[idx])


# ---------------------------------------------------------------- features

def synthetic_features(image_id: str, seed: int, dim: int) -> np.ndarray:
    """Stand-in image vector derived from a hash of (seed, image_id)."""
    digest = hashlib.blake2b(f"{seed}:{image_id}".encode(), digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "little")).standard_normal(dim)


class FeatureStore:
    def __init__(self, vectors: Mapping[str, np.ndarray] | None = None, dim: int | None = None,
                 synthetic_seed: int | None = None):
        self.vectors = dict(vectors or {})
        self.dim = dim if dim is not None else (len(next(iter(self.vectors.values()))) if self.vectors else None)
        self.synthetic_seed = synthetic_seed
        if self.dim is None:
            raise ValueError("feature dimension unknown")

    def __call__(self, image_id: str) -> np.ndarray:
        vec = self.vectors.get(image_id)
        if vec is None:
            if self.synthetic_seed is None:
                raise KeyError(f"no features for image {image_id!r}")
            vec = synthetic_features(image_id, self.synthetic_seed, self.dim)
        if len(vec) != self.dim:
            raise DimMismatch(f"image {image_id!r}: {len(vec)} features, expected {self.dim}")
        return np.asarray(vec, dtype=float)

    @classmethod
    def load_jsonl(cls, path: str | Path) -> "FeatureStore":
        """First record ``{"dim": N}``, then ``{"image_id", "features"}`` lines."""
        with open(path, encoding="utf-8") as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        if not lines or "dim" not in lines[0]:
            raise ValueError(f"{path}: missing header record with 'dim'")
        dim = int(lines[0]["dim"])
        vectors = {}
        for i, rec in enumerate(lines[1:], 2):
            vec = np.asarray(rec["features"], dtype=float)
            if vec.shape != (dim,) or not np.all(np.isfinite(vec)):
                raise DimMismatch(f"{path}: record {i}: bad feature vector for {rec['image_id']!r}")
            vectors[rec["image_id"]] = vec
        return cls(vectors, dim)

    def write_jsonl(self, fh):
        fh.write(json.dumps({"dim": self.dim}) + "\n")
        for image_id in sorted(self.vectors):
            fh.write(json.dumps({"image_id": image_id, "features": self.vectors[image_id].tolist()}) + "\n")


# ---------------------------------------------------------------- forward

def _bag_mean(token_ids: Sequence[np.ndarray], emb: np.ndarray):
    lengths = np.array([len(t) for t in token_ids])
    if np.any(lengths == 0):
        raise EmptyQuestion("question has no tokens")
    flat = np.concatenate(token_ids)
    seg = np.repeat(np.arange(len(token_ids)), lengths)
    weight = np.repeat(1.0 / lengths, lengths)
    out = np.zeros((len(token_ids), emb.shape[1]))
    np.add.at(out, seg, emb[flat] * weight[:, None])
    return out, (flat, seg, weight)


def encode_question(token_ids: Sequence[int], params: MultitaskParams) -> np.ndarray:
    qbar, _ = _bag_mean([np.asarray(token_ids, dtype=int)], params.word_embeddings)
    return np.tanh(qbar @ params.question_w + params.question_b)[0]


def encode_image(raw: np.ndarray, params: MultitaskParams) -> np.ndarray:
    raw = np.asarray(raw, dtype=float)
    if raw.shape[-1] != params.d_img:
        raise DimMismatch(f"image vector has {raw.shape[-1]} entries, expected {params.d_img}")
    return np.tanh(raw @ params.image_w + params.image_b)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _forward(batch: Batch, p: MultitaskParams):
    qbar, bag = _bag_mean(batch.token_ids, p.word_embeddings)
    q = np.tanh(qbar @ p.question_w + p.question_b)
    v = encode_image(batch.features, p)
    f = q * v
    h1 = np.tanh(f @ p.fusion1_w + p.fusion1_b)
    h2 = np.tanh(h1 @ p.fusion2_w + p.fusion2_b)
    la = log_softmax(h2 @ p.answer_w + p.answer_b)
    lr = log_softmax(h2 @ p.element_w + p.element_b)
    cache = dict(qbar=qbar, bag=bag, q=q, v=v, f=f, h1=h1, h2=h2)
    return la, lr, cache


def forward(batch: Batch, params: MultitaskParams) -> tuple[np.ndarray, np.ndarray]:
    """Answer and element distributions, one row per sample."""
    la, lr, _ = _forward(batch, params)
    return np.exp(la), np.exp(lr)


def _check_labels(batch: Batch, single_task: bool):
    if len(batch) == 0:
        raise ValueError("empty batch")
    if np.any(batch.answers < 0) or (not single_task and np.any(batch.elements < 0)):
        raise UnlabeledSample("batch contains samples without training labels")


def _scale(mode: str) -> float:
    if mode not in ("sum", "average"):
        raise ValueError(f"unknown loss mode {mode!r}")
    return 0.5 if mode == "average" else 1.0


def loss(batch: Batch, params: MultitaskParams, mode: str = "sum", single_task: bool = False) -> float:
    """Batch mean of answer CE plus element CE; ``average`` halves the sum."""
    _check_labels(batch, single_task)
    la, lr, _ = _forward(batch, params)
    rows = np.arange(len(batch))
    per_sample = -la[rows, batch.answers]
    if not single_task:
        per_sample = per_sample - lr[rows, batch.elements]
    return float(_scale(mode) * per_sample.mean())


def gradients(batch: Batch, params: MultitaskParams, mode: str = "sum",
              single_task: bool = False) -> tuple[float, dict[str, np.ndarray]]:
    _check_labels(batch, single_task)
    p = params
    la, lr, c = _forward(batch, p)
    n = len(batch)
    rows = np.arange(n)
    scale = _scale(mode)

    dza = np.exp(la)
    dza[rows, batch.answers] -= 1.0
    dza *= scale / n
    total = -la[rows, batch.answers]
    if single_task:
        dzr = np.zeros_like(lr)
    else:
        dzr = np.exp(lr)
        dzr[rows, batch.elements] -= 1.0
        dzr *= scale / n
        total = total - lr[rows, batch.elements]

    g = {}
    h1, h2, q, v = c["h1"], c["h2"], c["q"], c["v"]
    g["answer_w"] = h2.T @ dza
    g["answer_b"] = dza.sum(0)
    g["element_w"] = h2.T @ dzr
    g["element_b"] = dzr.sum(0)
    da2 = (dza @ p.answer_w.T + dzr @ p.element_w.T) * (1 - h2 ** 2)
    g["fusion2_w"] = h1.T @ da2
    g["fusion2_b"] = da2.sum(0)
    da1 = (da2 @ p.fusion2_w.T) * (1 - h1 ** 2)
    g["fusion1_w"] = c["f"].T @ da1
    g["fusion1_b"] = da1.sum(0)
    df = da1 @ p.fusion1_w.T
    dqa = df * v * (1 - q ** 2)
    dva = df * q * (1 - v ** 2)
    g["question_w"] = c["qbar"].T @ dqa
    g["question_b"] = dqa.sum(0)
    g["image_w"] = batch.features.T @ dva
    g["image_b"] = dva.sum(0)
    flat, seg, weight = c["bag"]
    dqbar = dqa @ p.question_w.T
    demb = np.zeros_like(p.word_embeddings)
    np.add.at(demb, flat, dqbar[seg] * weight[:, None])
    g["word_embeddings"] = demb
    return float(scale * total.mean()), g


# ---------------------------------------------------------------- optimizer

@dataclass
class RmspropState:
    lr: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-8
    accumulators: dict[str, np.ndarray] = field(default_factory=dict)


def rmsprop_step(params: MultitaskParams, grads: Mapping[str, np.ndarray], state: RmspropState) -> MultitaskParams:
    """acc <- rho*acc + (1-rho)*g^2; theta <- theta - lr*g/(sqrt(acc)+eps). Updates in place."""
    named = params.as_dict()
    for name, theta in named.items():
        if grads[name].shape != theta.shape:
            raise ShapeMismatch(f"{name}: gradient {grads[name].shape} vs parameter {theta.shape}")
    for name, theta in named.items():
        g = grads[name]
        acc = state.accumulators.get(name)
        if acc is None:
            acc = state.accumulators[name] = np.zeros_like(theta)
        acc *= state.rho
        acc += (1.0 - state.rho) * g * g
        theta -= state.lr * g / (np.sqrt(acc) + state.eps)
    return params


# ---------------------------------------------------------------- training

@dataclass
class MultitaskModel:
    params: MultitaskParams
    words: Vocab
    answers: Vocab
    elements: Vocab
    config: TrainConfig

    def word_ids(self, question: str) -> np.ndarray:
        unk = self.words.index[UNK]
        return np.array([self.words.index.get(t, unk) for t in tokenize(question)], dtype=int)

    def encode(self, samples: Sequence[QASample], features: Callable[[str], np.ndarray]) -> Batch:
        feats = np.stack([features(s.image_id) for s in samples]) if samples else np.zeros((0, self.config.d_img))
        return Batch(
            [self.word_ids(s.question) for s in samples],
            feats,
            np.array([self.answers.get(s.answer, -1) for s in samples], dtype=int),
            np.array([self.elements.get(s.frame_element, -1) for s in samples], dtype=int),
        )


def build_word_vocab(samples: Iterable[QASample]) -> Vocab:
    words = Vocab(t for s in samples for t in tokenize(s.question))
    # UNK always occupies row 0
    words.items = [UNK] + [w for w in words.items if w != UNK]
    words.index = {w: i for i, w in enumerate(words.items)}
    return words


def _evaluate(batch: Batch, params: MultitaskParams, config: TrainConfig) -> dict:
    la, lr, _ = _forward(batch, params)
    rows = np.arange(len(batch))
    per_sample = -la[rows, batch.answers]
    if not config.single_task:
        per_sample = per_sample - lr[rows, batch.elements]
    return {
        "loss": float(_scale(config.loss_mode) * per_sample.mean()),
        "answer_acc": float(100.0 * np.mean(la.argmax(1) == batch.answers)),
        "element_acc": float(100.0 * np.mean(lr.argmax(1) == batch.elements)),
    }


def train(dataset: Dataset, config: TrainConfig, features: Callable[[str], np.ndarray] | None = None,
          on_epoch: Callable[[dict], None] | None = None) -> tuple[MultitaskModel, list[dict]]:
    """Fit on the train split.

    One generator seeded with ``config.seed`` draws the initial weights and
    then one permutation per epoch; batches are reduced in sample order, so a
    rerun with the same inputs is bit-identical. History rows hold the loss
    and both accuracies over the whole train split after each epoch.
    """
    train_samples = dataset.split("train")
    if not train_samples:
        raise ValueError("dataset has no train samples")
    if features is None:
        features = FeatureStore(dim=config.d_img, synthetic_seed=config.seed)
    answers = Vocab(s.answer for s in train_samples)
    elements = Vocab(s.frame_element for s in train_samples)
    words = build_word_vocab(train_samples)

    rng = np.random.default_rng(config.seed)
    params = MultitaskParams.init(rng, len(words), len(answers), len(elements), config.d_w, config.d_h, config.d_img)
    model = MultitaskModel(params, words, answers, elements, config)
    data = model.encode(train_samples, features)
    state = RmspropState(config.lr, config.rho, config.eps)

    history = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(data))
        for start in range(0, len(order), config.batch_size):
            batch = data.subset(order[start : start + config.batch_size])
            _, grads = gradients(batch, params, config.loss_mode, config.single_task)
            rmsprop_step(params, grads, state)
        row = {"epoch": epoch, **_evaluate(data, params, config)}
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)
    return model, history


def predict(dataset: Dataset | Sequence[QASample], model: MultitaskModel, split: str | None = "test",
            features: Callable[[str], np.ndarray] | None = None, chunk: int = 4096) -> list[Prediction]:
    """Argmax of each head (ties go to the lower class index)."""
    samples = dataset.split(split) if isinstance(dataset, Dataset) and split else list(
        dataset.samples if isinstance(dataset, Dataset) else dataset)
    if features is None:
        features = FeatureStore(dim=model.config.d_img, synthetic_seed=model.config.seed)
    out = []
    for start in range(0, len(samples), chunk):
        part = samples[start : start + chunk]
        pa, pr = forward(model.encode(part, features), model.params)
        for s, ia, ir in zip(part, pa.argmax(1), pr.argmax(1)):
            element = None if model.config.single_task else model.elements[int(ir)]
            out.append(Prediction(s.sample_id, model.answers[int(ia)], element))
    return out


# ---------------------------------------------------------------- baselines

def _modal(counter: Counter) -> str:
    return min(counter, key=lambda a: (-counter[a], a))


def prior_baseline(train: Iterable[QASample]) -> str:
    counts = Counter(s.answer for s in train)
    if not counts:
        raise ValueError("empty training set")
    return _modal(counts)


def per_verb_prior(train: Iterable[QASample]) -> dict[str, str]:
    by_verb: dict[str, Counter] = {}
    for s in train:
        by_verb.setdefault(s.verb_id, Counter())[s.answer] += 1
    if not by_verb:
        raise ValueError("empty training set")
    return {v: _modal(c) for v, c in sorted(by_verb.items())}


def baseline_predictions(samples: Iterable[QASample], answer_for: Callable[[QASample], str]) -> list[Prediction]:
    return [Prediction(s.sample_id, answer_for(s), None) for s in samples]


# ---------------------------------------------------------------- checkpoints

def _vocab_hash(v: Vocab) -> str:
    return hashlib.sha256("\n".join(v.items).encode()).hexdigest()


def save_checkpoint(model: MultitaskModel, path: str | Path):
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "vocabs": {name: getattr(model, name).items for name in ("words", "answers", "elements")},
        "hashes": {name: _vocab_hash(getattr(model, name)) for name in ("words", "answers", "elements")},
    }
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **model.params.as_dict())


def load_checkpoint(path: str | Path) -> MultitaskModel:
    with np.load(path) as z:
        meta = json.loads(z["__meta__"].tobytes().decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ModelError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        params = MultitaskParams(**{f.name: z[f.name].copy() for f in fields(MultitaskParams)})
    vocabs = {}
    for name, items in meta["vocabs"].items():
        v = Vocab()
        v.items, v.index = list(items), {s: i for i, s in enumerate(items)}
        if _vocab_hash(v) != meta["hashes"][name]:
            raise ModelError(f"{path}: {name} vocabulary hash mismatch")
        vocabs[name] = v
    return MultitaskModel(params, vocabs["words"], vocabs["answers"], vocabs["elements"], TrainConfig(**meta["config"]))
