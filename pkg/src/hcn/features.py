"""Utterance featurization: bag of words, averaged word embeddings, and
assembly of the fixed-width per-turn observation vector.

The observation fed to the recurrent policy is the concatenation, in fixed
order, of four segments: bag-of-words over the training vocabulary, averaged
word embedding of the utterance, domain context features, and features
returned by the most recent API call.  Any segment may be configured with
length zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

# Characters removed before whitespace tokenization.  Dialog corpora handled
# here are pre-normalized, so this is deliberately minimal.
_STRIP_CHARS = ".,!?;:"
_STRIP_TABLE = str.maketrans("", "", _STRIP_CHARS)


def tokenize(text: str) -> list[str]:
    """Lowercase, drop ``.,!?;:`` and split on whitespace."""
    return text.lower().translate(_STRIP_TABLE).split()


class Vocabulary:
    """Dense token -> index map, insertion-ordered, frozen after build."""

    def __init__(self, tokens: list[str] | None = None):
        self._index: dict[str, int] = {}
        for tok in tokens or []:
            if tok not in self._index:
                self._index[tok] = len(self._index)

    @classmethod
    def from_utterances(cls, utterances: list[str]) -> "Vocabulary":
        vocab = cls()
        for utt in utterances:
            for tok in tokenize(utt):
                if tok not in vocab._index:
                    vocab._index[tok] = len(vocab._index)
        return vocab

    @property
    def size(self) -> int:
        return len(self._index)

    def index(self, token: str) -> int | None:
        return self._index.get(token)

    def tokens(self) -> list[str]:
        return list(self._index)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self._index == other._index

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self._index:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.rstrip("\n")])


def build_vocab(training_dialogs) -> Vocabulary:
    """Vocabulary over the user side of the training dialogs.

    One index per distinct token, in order of first occurrence.  Dialogs must
    expose ``user_utterances()`` (see :class:`hcn.babi.data.BabiDialog`).
    """
    if not training_dialogs:
        raise ValueError("need at least one training dialog to build a vocabulary")
    utterances = []
    for dialog in training_dialogs:
        utterances.extend(dialog.user_utterances())
    return Vocabulary.from_utterances(utterances)


def bow_vector(utterance: str, vocab: Vocabulary) -> np.ndarray:
    """Binary presence vector; out-of-vocabulary tokens contribute nothing."""
    vec = np.zeros(vocab.size)
    for tok in tokenize(utterance):
        idx = vocab.index(tok)
        if idx is not None:
            vec[idx] = 1.0
    return vec


class EmbeddingTable:
    """Read-only token -> vector map with a single shared dimension."""

    def __init__(self, vectors: dict[str, np.ndarray], dimension: int):
        self._vectors = vectors
        self.dimension = dimension

    def get(self, token: str) -> np.ndarray | None:
        return self._vectors.get(token)

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, token: str) -> bool:
        return token in self._vectors


def load_embeddings(path) -> EmbeddingTable:
    """Load a text embedding file: one token per line, then D decimals.

    Ragged rows are an error naming the offending line; a repeated token keeps
    the last entry and logs a warning.
    """
    vectors: dict[str, np.ndarray] = {}
    dimension = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if dimension is None:
                if not values:
                    raise ValueError(f"{path}: line {lineno} has no vector values")
                dimension = len(values)
            if len(values) != dimension:
                raise ValueError(
                    f"{path}: line {lineno} has {len(values)} values, expected {dimension}"
                )
            if token in vectors:
                log.warning("duplicate embedding for %r at line %d; keeping last", token, lineno)
            vectors[token] = np.array([float(v) for v in values])
    if dimension is None:
        raise ValueError(f"{path}: empty embedding file")
    return EmbeddingTable(vectors, dimension)


def utterance_embedding(utterance: str, table: EmbeddingTable) -> np.ndarray:
    """Arithmetic mean of the vectors of in-table tokens; zeros if none."""
    hits = [table.get(tok) for tok in tokenize(utterance)]
    hits = [v for v in hits if v is not None]
    if not hits:
        return np.zeros(table.dimension)
    return np.mean(hits, axis=0)


@dataclass(frozen=True)
class ObservationLayout:
    """Segment lengths of the observation vector, in concatenation order."""

    bow: int = 0
    embedding: int = 0
    context: int = 0
    api: int = 0

    @property
    def obs_size(self) -> int:
        return self.bow + self.embedding + self.context + self.api


@dataclass(frozen=True)
class Observation:
    """The four observation segments plus their concatenation."""

    bow: np.ndarray
    embedding: np.ndarray
    context: np.ndarray
    api_features: np.ndarray
    vector: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(
            self,
            "vector",
            np.concatenate([self.bow, self.embedding, self.context, self.api_features]),
        )


def assemble_observation(
    bow: np.ndarray,
    embedding: np.ndarray,
    context: np.ndarray,
    api_features: np.ndarray,
    layout: ObservationLayout,
) -> Observation:
    """Concatenate the segments, validating each length against the layout."""
    for name, seg, want in (
        ("bow", bow, layout.bow),
        ("embedding", embedding, layout.embedding),
        ("context", context, layout.context),
        ("api", api_features, layout.api),
    ):
        if len(seg) != want:
            raise ValueError(f"{name} segment has length {len(seg)}, layout says {want}")
    return Observation(
        np.asarray(bow, dtype=float),
        np.asarray(embedding, dtype=float),
        np.asarray(context, dtype=float),
        np.asarray(api_features, dtype=float),
    )


class Featurizer:
    """Binds vocabulary, embeddings and layout into a per-utterance observer.

    ``vocab`` and ``embeddings`` may be None to disable those segments (the
    layout must agree, with zero lengths).
    """

    def __init__(
        self,
        layout: ObservationLayout,
        vocab: Vocabulary | None = None,
        embeddings: EmbeddingTable | None = None,
    ):
        if vocab is not None and vocab.size != layout.bow:
            raise ValueError(f"vocab size {vocab.size} != layout.bow {layout.bow}")
        if vocab is None and layout.bow:
            raise ValueError("layout has a bow segment but no vocabulary given")
        if embeddings is not None and embeddings.dimension != layout.embedding:
            raise ValueError(
                f"embedding dimension {embeddings.dimension} != layout.embedding {layout.embedding}"
            )
        if embeddings is None and layout.embedding:
            raise ValueError("layout has an embedding segment but no table given")
        self.layout = layout
        self.vocab = vocab
        self.embeddings = embeddings

    def observe(
        self, utterance: str, context: np.ndarray, api_features: np.ndarray | None = None
    ) -> Observation:
        bow = bow_vector(utterance, self.vocab) if self.vocab else np.zeros(0)
        emb = (
            utterance_embedding(utterance, self.embeddings)
            if self.embeddings
            else np.zeros(0)
        )
        if api_features is None:
            api_features = np.zeros(self.layout.api)
        return assemble_observation(bow, emb, np.asarray(context, dtype=float), api_features, self.layout)
