"""Embedding tables, synonym sets, dataset loading and synthetic corpora.

The synonym model follows the substitution-attack setting: the admissible
replacements of a word are its ``k`` nearest vocabulary neighbours in
embedding space, kept only if they lie within Euclidean distance ``d_e``
(k-nearest first, then the distance filter).  Each word's entry also stores
the elementwise radius ``max over synonyms of |v(w') - v(w)|``, which is the
per-coordinate perturbation budget certification consumes.

Out-of-vocabulary words embed to the zero vector and have no synonyms, so
they are inert both in the forward pass and in the perturbation budget.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, DimensionError

SYNONYM_CACHE_VERSION = 1

_TOKEN_CLEANER = re.compile(r"[^\w\s]")


@dataclass
class EmbeddingTable:
    """Word -> row lookup over a fixed-dimension vector matrix."""

    vocab: dict[str, int]
    vectors: np.ndarray
    duplicates_dropped: int = 0

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise DimensionError(f"vectors must be (V, d0), got {self.vectors.shape}")
        if len(self.vocab) != self.vectors.shape[0]:
            raise DimensionError(
                f"{len(self.vocab)} words vs {self.vectors.shape[0]} vector rows"
            )

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    def __contains__(self, word: str) -> bool:
        return word in self.vocab

    def lookup(self, word: str) -> np.ndarray:
        """The word's vector; zero vector for out-of-vocabulary words."""
        idx = self.vocab.get(word)
        if idx is None:
            return np.zeros(self.dim)
        return self.vectors[idx]

    def embed_sequence(self, tokens: Sequence[str]) -> np.ndarray:
        """Stack lookups into an ``(N, d0)`` matrix."""
        if not tokens:
            raise DataError("cannot embed an empty token sequence")
        return np.stack([self.lookup(t) for t in tokens])


def load_embeddings(path) -> EmbeddingTable:
    """Stream a text embedding file: one ``word v_1 ... v_d0`` row per line.

    The first line fixes the dimension.  Duplicate words keep their first
    row (a warning is emitted per duplicate); malformed lines raise
    :class:`DataError` with the line number.
    """
    vocab: dict[str, int] = {}
    rows: list[np.ndarray] = []
    dim = None
    dups = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            word, raw = parts[0], parts[1:]
            if dim is None:
                if not raw:
                    raise DataError(f"{path}:{lineno}: no vector components")
                dim = len(raw)
            if len(raw) != dim:
                raise DataError(
                    f"{path}:{lineno}: expected {dim} components, got {len(raw)}"
                )
            try:
                vec = np.array([float(x) for x in raw])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if word in vocab:
                dups += 1
                warnings.warn(f"duplicate embedding for {word!r} at line {lineno}; keeping first")
                continue
            vocab[word] = len(rows)
            rows.append(vec)
    if not rows:
        raise DataError(f"{path}: no embeddings found")
    return EmbeddingTable(vocab=vocab, vectors=np.stack(rows), duplicates_dropped=dups)


def save_embeddings(table: EmbeddingTable, path) -> None:
    """Write the table back out in the same one-row-per-word text format."""
    order = sorted(table.vocab, key=table.vocab.get)
    with open(path, "w", encoding="utf-8") as fh:
        for word in order:
            vec = " ".join(format(x, ".17g") for x in table.vectors[table.vocab[word]])
            fh.write(f"{word} {vec}\n")


@dataclass(frozen=True)
class SynonymEntry:
    """Admissible replacements for one word plus their elementwise radius."""

    synonyms: tuple[str, ...]
    radius: np.ndarray

    def __post_init__(self) -> None:
        r = np.asarray(self.radius, dtype=np.float64)
        if r.ndim != 1 or np.any(r < 0):
            raise DataError("synonym radius must be a nonnegative vector")
        object.__setattr__(self, "radius", r)


@dataclass
class SynonymTable:
    """Word -> synonym entry map with the construction parameters recorded."""

    k: int
    d_e: float
    dim: int
    entries: dict[str, SynonymEntry] = field(default_factory=dict)

    def alternatives(self, word: str) -> tuple[str, ...]:
        entry = self.entries.get(word)
        return entry.synonyms if entry is not None else ()

    def radius_for(self, word: str) -> np.ndarray:
        entry = self.entries.get(word)
        if entry is None:
            return np.zeros(self.dim)
        return entry.radius

    def sentence_radii(self, tokens: Sequence[str]) -> np.ndarray:
        """Per-position per-coordinate budgets, shape ``(N, dim)``."""
        return np.stack([self.radius_for(t) for t in tokens])

    def save(self, path) -> None:
        payload = {
            "version": SYNONYM_CACHE_VERSION,
            "k": self.k,
            "d_e": self.d_e,
            "dim": self.dim,
            "entries": {
                w: {"synonyms": list(e.synonyms), "radius": e.radius.tolist()}
                for w, e in sorted(self.entries.items())
            },
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SynonymTable":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        version = payload.get("version")
        if version != SYNONYM_CACHE_VERSION:
            raise DataError(
                f"synonym cache version {version!r} unsupported "
                f"(expected {SYNONYM_CACHE_VERSION})"
            )
        table = cls(k=int(payload["k"]), d_e=float(payload["d_e"]), dim=int(payload["dim"]))
        for word, raw in payload["entries"].items():
            table.entries[word] = SynonymEntry(
                synonyms=tuple(raw["synonyms"]), radius=np.asarray(raw["radius"])
            )
        return table


def build_synonyms(emb: EmbeddingTable, k: int, d_e: float, chunk: int = 512) -> SynonymTable:
    """Exact nearest-neighbour synonym sets: ``k`` nearest, then filter by ``d_e``.

    Candidates are ordered by (distance, word) so results are deterministic
    under distance ties.  The word itself is excluded; entries are only
    stored for words with at least one admissible synonym.
    """
    if k < 0:
        raise DataError(f"k must be >= 0, got {k}")
    if not d_e > 0:
        raise DataError(f"d_e must be positive, got {d_e}")
    table = SynonymTable(k=k, d_e=float(d_e), dim=emb.dim)
    if k == 0:
        return table
    words = sorted(emb.vocab, key=emb.vocab.get)
    vecs = emb.vectors
    sq = np.sum(vecs * vecs, axis=1)
    for start in range(0, emb.size, chunk):
        stop = min(start + chunk, emb.size)
        block = vecs[start:stop]
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (block @ vecs.T)
        np.maximum(d2, 0.0, out=d2)
        for row, widx in enumerate(range(start, stop)):
            dist = np.sqrt(d2[row])
            dist[widx] = np.inf
            # the <= d_e set is a distance-ranking prefix, so filtering
            # before taking the k nearest is exact and keeps tie-breaking
            # global
            within = np.flatnonzero(dist <= d_e)
            if within.size == 0:
                continue
            ranked = sorted((float(dist[c]), words[c], int(c)) for c in within)
            kept = ranked[:k]
            diffs = np.abs(vecs[[c for _, _, c in kept]] - vecs[widx])
            table.entries[words[widx]] = SynonymEntry(
                synonyms=tuple(w for _, w, _ in kept),
                radius=diffs.max(axis=0),
            )
    return table


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace.  Deterministic and
    idempotent: tokens contain only word characters."""
    return _TOKEN_CLEANER.sub(" ", text.lower()).split()


@dataclass
class TextDataset:
    """Tokenized labeled sentences."""

    examples: list[tuple[list[str], int]]
    num_classes: int
    split: str = "train"

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise DataError(f"need at least 2 classes, got {self.num_classes}")
        for i, (tokens, label) in enumerate(self.examples):
            if not tokens:
                raise DataError(f"example {i}: empty token sequence")
            if not 0 <= label < self.num_classes:
                raise DataError(
                    f"example {i}: label {label} outside [0, {self.num_classes})"
                )

    def __len__(self) -> int:
        return len(self.examples)

    def labels(self) -> np.ndarray:
        return np.array([y for _, y in self.examples], dtype=np.int64)


def load_dataset(
    path, fmt: str = "tsv", max_length: int = 512, num_classes: int | None = None,
    split: str = "train",
) -> TextDataset:
    """Read header-less ``label<TAB>text`` (or csv) rows, tokenize and truncate."""
    rows: list[tuple[str, str]] = []
    if fmt == "tsv":
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t", 1)
                if len(parts) != 2:
                    raise DataError(f"{path}:{lineno}: expected 'label<TAB>text'")
                rows.append((parts[0], parts[1]))
    elif fmt == "csv":
        import csv

        with open(path, "r", encoding="utf-8", newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row:
                    continue
                if len(row) < 2:
                    raise DataError(f"{path}:{lineno}: expected 'label,text'")
                rows.append((row[0], ",".join(row[1:])))
    else:
        raise DataError(f"unknown dataset format {fmt!r} (use tsv or csv)")

    examples: list[tuple[list[str], int]] = []
    max_label = -1
    for lineno, (raw_label, text) in enumerate(rows, start=1):
        try:
            label = int(raw_label.strip())
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad label {raw_label!r}") from None
        if label < 0:
            raise DataError(f"{path}:{lineno}: negative label {label}")
        tokens = tokenize(text)[:max_length]
        if not tokens:
            raise DataError(f"{path}:{lineno}: empty text")
        examples.append((tokens, label))
        max_label = max(max_label, label)
    inferred = max_label + 1
    if num_classes is None:
        num_classes = max(inferred, 2)
    elif inferred > num_classes:
        raise DataError(f"{path}: found label {max_label} >= num_classes {num_classes}")
    return TextDataset(examples=examples, num_classes=num_classes, split=split)


def save_dataset(ds: TextDataset, path) -> None:
    """Write in the tsv format :func:`load_dataset` reads."""
    with open(path, "w", encoding="utf-8") as fh:
        for tokens, label in ds.examples:
            fh.write(f"{label}\t{' '.join(tokens)}\n")


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the planted two-class corpus.

    Words come in clusters: a base word plus ``variants_per_word`` near
    copies offset by at most ``spread`` per coordinate (these are the
    synonyms certification will discover).  Class-indicative base vectors sit
    ``margin`` away from the origin along opposing class directions, neutral
    ones have no class component.  Sentences mix indicative words of the
    label's class with neutral words.
    """

    dim: int = 16
    n_train: int = 2000
    n_test: int = 500
    num_classes: int = 2
    words_per_class: int = 25
    neutral_words: int = 50
    variants_per_word: int = 3
    margin: float = 1.0
    indicative_prob: float = 0.55
    min_length: int = 8
    max_length: int = 14
    spread: float = 0.1
    base_noise: float = 0.3

    def __post_init__(self) -> None:
        if self.num_classes != 2:
            raise DataError("the synthetic generator emits two-class corpora")
        if not 0 < self.indicative_prob <= 1:
            raise DataError("indicative_prob must be in (0, 1]")
        if self.min_length < 1 or self.max_length < self.min_length:
            raise DataError("bad sentence length range")


def make_synthetic(
    cfg: SyntheticConfig, seed: int = 42
) -> tuple[TextDataset, TextDataset, EmbeddingTable]:
    """Generate (train, test, embeddings) with planted synonym clusters."""
    rng = np.random.default_rng(seed)
    directions = np.zeros((2, cfg.dim))
    raw = rng.normal(size=cfg.dim)
    raw /= np.linalg.norm(raw)
    directions[0] = raw
    directions[1] = -raw

    vocab: dict[str, int] = {}
    rows: list[np.ndarray] = []
    groups: dict[str, list[str]] = {"c0": [], "c1": [], "neut": []}

    def add_cluster(prefix: str, idx: int, center: np.ndarray) -> None:
        base_name = f"{prefix}w{idx}"
        names = [base_name] + [
            f"{base_name}v{j + 1}" for j in range(cfg.variants_per_word)
        ]
        for name in names:
            offset = rng.uniform(-cfg.spread, cfg.spread, size=cfg.dim)
            vec = center if name == base_name else center + offset
            vocab[name] = len(rows)
            rows.append(vec)
        groups[prefix].extend(names)

    for cls, prefix in enumerate(("c0", "c1")):
        for i in range(cfg.words_per_class):
            center = cfg.margin * directions[cls] + rng.normal(size=cfg.dim) * cfg.base_noise
            add_cluster(prefix, i, center)
    for i in range(cfg.neutral_words):
        center = rng.normal(size=cfg.dim) * cfg.base_noise
        add_cluster("neut", i, center)

    emb = EmbeddingTable(vocab=vocab, vectors=np.stack(rows))

    def sample_sentence(label: int) -> list[str]:
        length = int(rng.integers(cfg.min_length, cfg.max_length + 1))
        own = groups["c0"] if label == 0 else groups["c1"]
        toks = []
        for _ in range(length):
            pool = own if rng.random() < cfg.indicative_prob else groups["neut"]
            toks.append(pool[int(rng.integers(len(pool)))])
        return toks

    def sample_split(n: int, split: str) -> TextDataset:
        examples = []
        for i in range(n):
            label = i % 2
            examples.append((sample_sentence(label), label))
        return TextDataset(examples=examples, num_classes=2, split=split)

    return sample_split(cfg.n_train, "train"), sample_split(cfg.n_test, "test"), emb
