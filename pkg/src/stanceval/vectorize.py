"""Bag-of-words / TF-IDF vectorization and a softmax-regression baseline.

The TF-IDF weight is pinned as ``tf(t) * ln((1 + n_documents) / (1 + df(t)))``
with raw term counts for tf, so a token occurring in every document gets
weight 0 and is omitted from the vector.

Training is deterministic: weights start at zero, mini-batches are drawn from
``numpy.random.default_rng(seed)`` (PCG64), and identical runs produce
bit-identical models.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .labels import StanceLabel, decode_label

MODEL_FORMAT_VERSION = 1

_TOKEN_RE = re.compile(r"\w+")


class ModelFormatError(Exception):
    """A persisted model file has an unsupported version or is malformed."""


def tokenize(text: str) -> list[str]:
    """Lowercased Unicode word tokens; punctuation is dropped."""
    return [t.lower() for t in _TOKEN_RE.findall(text)]


@dataclass
class Vocabulary:
    """Token-to-index map with the document frequencies it was fitted on."""

    index: dict[str, int]
    document_frequency: dict[str, int]
    n_documents: int

    def __len__(self) -> int:
        return len(self.index)


def fit_vocabulary(corpus: Sequence[str], min_df: int = 1) -> Vocabulary:
    """Index tokens with document frequency >= min_df, in first-seen order."""
    if not corpus:
        raise ValueError("cannot fit a vocabulary on an empty corpus")
    if min_df < 1:
        raise ValueError("min_df must be >= 1")
    df: dict[str, int] = {}
    for text in corpus:
        for token in set(tokenize(text)):
            df[token] = df.get(token, 0) + 1
    # dicts preserve insertion order, but set() above does not; recover
    # first-seen order by a second pass over the corpus.
    index: dict[str, int] = {}
    frequency: dict[str, int] = {}
    for text in corpus:
        for token in tokenize(text):
            if token in index or df[token] < min_df:
                continue
            index[token] = len(index)
            frequency[token] = df[token]
    return Vocabulary(index=index, document_frequency=frequency, n_documents=len(corpus))


@dataclass(frozen=True)
class SparseVector:
    """(index, weight) pairs with strictly increasing indices and no zeros."""

    entries: tuple[tuple[int, float], ...]

    def __post_init__(self):
        previous = -1
        for index, weight in self.entries:
            if index <= previous:
                raise ValueError("indices must be strictly increasing")
            if weight == 0.0:
                raise ValueError("zero weights must be omitted")
            previous = index

    def to_dense(self, size: int) -> np.ndarray:
        dense = np.zeros(size, dtype=np.float64)
        for index, weight in self.entries:
            dense[index] = weight
        return dense


def bow_vector(text: str, vocab: Vocabulary) -> SparseVector:
    """Raw in-vocabulary token counts; out-of-vocabulary tokens are ignored."""
    counts: dict[int, int] = {}
    for token in tokenize(text):
        index = vocab.index.get(token)
        if index is not None:
            counts[index] = counts.get(index, 0) + 1
    return SparseVector(tuple((i, float(counts[i])) for i in sorted(counts)))


def tfidf_vector(text: str, vocab: Vocabulary) -> SparseVector:
    """tf * ln((1 + N) / (1 + df)) weights; zero-idf tokens are omitted."""
    counts: dict[str, int] = {}
    for token in tokenize(text):
        if token in vocab.index:
            counts[token] = counts.get(token, 0) + 1
    entries = []
    for token, tf in counts.items():
        idf = math.log((1 + vocab.n_documents) / (1 + vocab.document_frequency[token]))
        if idf == 0.0:
            continue
        entries.append((vocab.index[token], tf * idf))
    entries.sort()
    return SparseVector(tuple(entries))


VECTORIZERS = {"bow": bow_vector, "tfidf": tfidf_vector}


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the softmax-regression baseline."""

    epochs: int = 200
    learning_rate: float = 0.5
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class LinearModel:
    """Softmax-regression classifier over sparse text vectors.

    Prediction is the argmax over the three class scores; ties resolve to the
    lowest class code.
    """

    weights: np.ndarray  # 3 x V
    bias: np.ndarray  # 3
    config: TrainConfig
    final_loss: float
    vocab: Vocabulary | None = None
    vectorizer: str = "bow"

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]


def _to_csr(vectors: Sequence[SparseVector], n_features: int) -> sp.csr_matrix:
    data, indices, indptr = [], [], [0]
    for vector in vectors:
        for index, weight in vector.entries:
            if index >= n_features:
                raise ValueError(
                    f"vector index {index} out of range for {n_features} features"
                )
            indices.append(index)
            data.append(weight)
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.asarray(data, dtype=np.float64), indices, indptr),
        shape=(len(vectors), n_features),
    )


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def loss_and_gradient(
    weights: np.ndarray,
    bias: np.ndarray,
    x: sp.csr_matrix,
    y: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy loss and its gradients for one batch.

    ``y`` holds integer class codes; returns (loss, d_weights, d_bias).
    """
    n = x.shape[0]
    logits = x @ weights.T + bias
    probs = _softmax(logits)
    loss = float(-np.mean(np.log(probs[np.arange(n), y] + 1e-300)))
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    d_weights = (x.T @ delta).T
    d_bias = delta.sum(axis=0)
    return loss, np.asarray(d_weights), d_bias


def train_linear_baseline(
    train: Sequence[tuple[SparseVector, StanceLabel]],
    config: TrainConfig,
    n_features: int,
) -> LinearModel:
    """Mini-batch gradient descent from zero-initialized weights."""
    if not train:
        raise ValueError("training set must be nonempty")
    x = _to_csr([vector for vector, _ in train], n_features)
    y = np.asarray([int(label) for _, label in train], dtype=np.int64)

    weights = np.zeros((3, n_features), dtype=np.float64)
    bias = np.zeros(3, dtype=np.float64)
    rng = np.random.default_rng(config.seed)
    n = len(train)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            _, d_weights, d_bias = loss_and_gradient(weights, bias, x[batch], y[batch])
            weights -= config.learning_rate * d_weights
            bias -= config.learning_rate * d_bias
    final_loss, _, _ = loss_and_gradient(weights, bias, x, y)
    return LinearModel(weights=weights, bias=bias, config=config, final_loss=final_loss)


def predict_linear(model: LinearModel, vector: SparseVector) -> StanceLabel:
    """Argmax class score; ties resolve to the lowest class code."""
    scores = model.bias.copy()
    for index, weight in vector.entries:
        if index >= model.n_features:
            raise ValueError(
                f"vector index {index} out of range for model with "
                f"{model.n_features} features"
            )
        scores += model.weights[:, index] * weight
    return decode_label(int(np.argmax(scores)))


def predict_text(model: LinearModel, text: str) -> StanceLabel:
    """Vectorize with the model's own vocabulary and vectorizer, then predict."""
    if model.vocab is None:
        raise ValueError("model carries no vocabulary; cannot vectorize text")
    vector = VECTORIZERS[model.vectorizer](text, model.vocab)
    return predict_linear(model, vector)


def save_model(model: LinearModel, path: str | Path) -> None:
    """Persist a model (with its vocabulary) as a versioned JSON file."""
    if model.vocab is None:
        raise ValueError("only models fitted with a vocabulary can be saved")
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "vectorizer": model.vectorizer,
        "n_features": model.n_features,
        "vocabulary": model.vocab.index,
        "document_frequency": model.vocab.document_frequency,
        "n_documents": model.vocab.n_documents,
        "weights": model.weights.tolist(),
        "bias": model.bias.tolist(),
        "seed": model.config.seed,
        "epochs": model.config.epochs,
        "learning_rate": model.config.learning_rate,
        "batch_size": model.config.batch_size,
        "final_loss": model.final_loss,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_model(path: str | Path) -> LinearModel:
    """Load a persisted model; rejects files with a mismatched format version."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from None
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format version {version!r} "
            f"(expected {MODEL_FORMAT_VERSION})"
        )
    vocab = Vocabulary(
        index={str(k): int(v) for k, v in payload["vocabulary"].items()},
        document_frequency={
            str(k): int(v) for k, v in payload["document_frequency"].items()
        },
        n_documents=int(payload["n_documents"]),
    )
    config = TrainConfig(
        epochs=int(payload["epochs"]),
        learning_rate=float(payload["learning_rate"]),
        batch_size=int(payload["batch_size"]),
        seed=int(payload["seed"]),
    )
    return LinearModel(
        weights=np.asarray(payload["weights"], dtype=np.float64),
        bias=np.asarray(payload["bias"], dtype=np.float64),
        config=config,
        final_loss=float(payload["final_loss"]),
        vocab=vocab,
        vectorizer=str(payload["vectorizer"]),
    )


def fit_baseline(
    items: Sequence[tuple[str, StanceLabel]],
    vectorizer: str = "bow",
    min_df: int = 1,
    config: TrainConfig = TrainConfig(),
) -> LinearModel:
    """Fit vocabulary + vectors + softmax regression on (text, label) pairs."""
    if vectorizer not in VECTORIZERS:
        raise ValueError(f"unknown vectorizer {vectorizer!r}")
    vocab = fit_vocabulary([text for text, _ in items], min_df=min_df)
    vectorize_fn = VECTORIZERS[vectorizer]
    pairs = [(vectorize_fn(text, vocab), label) for text, label in items]
    model = train_linear_baseline(pairs, config, n_features=len(vocab))
    model.vocab = vocab
    model.vectorizer = vectorizer
    return model
