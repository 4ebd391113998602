"""Embedding IO, synonym construction, tokenization, datasets, synthesis."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from growthbound.data import (
    EmbeddingTable,
    SynonymTable,
    SyntheticConfig,
    TextDataset,
    build_synonyms,
    load_dataset,
    load_embeddings,
    make_synthetic,
    save_dataset,
    save_embeddings,
    tokenize,
)
from growthbound.errors import DataError


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


class TestEmbeddingIO:
    def test_three_word_toy_file(self, tmp_path):
        p = tmp_path / "emb.txt"
        write_lines(p, ["cat 1.0 2.0", "dog 3.0 4.0", "eel -1.0 0.5"])
        emb = load_embeddings(p)
        assert emb.size == 3 and emb.dim == 2
        assert np.array_equal(emb.lookup("dog"), [3.0, 4.0])

    def test_duplicate_keeps_first_and_warns(self, tmp_path):
        p = tmp_path / "emb.txt"
        write_lines(p, ["cat 1.0 2.0", "cat 9.0 9.0", "dog 3.0 4.0"])
        with pytest.warns(UserWarning, match="duplicate"):
            emb = load_embeddings(p)
        assert emb.size == 2
        assert emb.duplicates_dropped == 1
        assert np.array_equal(emb.lookup("cat"), [1.0, 2.0])

    def test_malformed_line_reports_line_number(self, tmp_path):
        p = tmp_path / "emb.txt"
        write_lines(p, ["cat 1.0 2.0", "dog 3.0 oops"])
        with pytest.raises(DataError, match=":2"):
            load_embeddings(p)

    def test_wrong_arity_reports_line_number(self, tmp_path):
        p = tmp_path / "emb.txt"
        write_lines(p, ["cat 1.0 2.0", "dog 3.0"])
        with pytest.raises(DataError, match=":2"):
            load_embeddings(p)

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "emb.txt"
        p.write_text("", encoding="utf-8")
        with pytest.raises(DataError, match="no embeddings"):
            load_embeddings(p)

    def test_oov_is_zero_vector(self, tmp_path):
        p = tmp_path / "emb.txt"
        write_lines(p, ["cat 1.0 2.0"])
        emb = load_embeddings(p)
        assert np.array_equal(emb.lookup("unseen"), [0.0, 0.0])
        assert "unseen" not in emb

    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        emb = EmbeddingTable(
            vocab={f"w{i}": i for i in range(5)}, vectors=rng.normal(size=(5, 3))
        )
        p = tmp_path / "emb.txt"
        save_embeddings(emb, p)
        back = load_embeddings(p)
        assert back.vocab == emb.vocab
        np.testing.assert_array_equal(back.vectors, emb.vectors)

    def test_large_file_streams(self, tmp_path):
        # 100k rows in the same format; parsing must stay line-at-a-time.
        p = tmp_path / "big.txt"
        with open(p, "w", encoding="utf-8") as fh:
            for i in range(100_000):
                fh.write(f"w{i} {i % 7}.0 {i % 11}.0 {i % 13}.0 {i % 3}.0\n")
        emb = load_embeddings(p)
        assert emb.size == 100_000 and emb.dim == 4
        assert np.array_equal(emb.lookup("w20"), [6.0, 9.0, 7.0, 2.0])

    def test_embed_sequence_shape(self, tmp_path):
        p = tmp_path / "emb.txt"
        write_lines(p, ["a 1 0", "b 0 1"])
        emb = load_embeddings(p)
        x = emb.embed_sequence(["a", "b", "zzz", "a"])
        np.testing.assert_array_equal(x, [[1, 0], [0, 1], [0, 0], [1, 0]])
        with pytest.raises(DataError):
            emb.embed_sequence([])


def brute_force_synonyms(emb, k, d_e):
    """O(V^2) oracle: full pairwise distances, (distance, word) ordering."""
    words = sorted(emb.vocab, key=emb.vocab.get)
    out = {}
    for w in words:
        v = emb.vectors[emb.vocab[w]]
        ranked = sorted(
            (float(np.linalg.norm(emb.vectors[emb.vocab[u]] - v)), u)
            for u in words
            if u != w
        )
        kept = [u for d, u in ranked[:k] if d <= d_e]
        if kept:
            radius = np.max(
                np.abs(np.stack([emb.vectors[emb.vocab[u]] for u in kept]) - v),
                axis=0,
            )
            out[w] = (tuple(kept), radius)
    return out


class TestSynonyms:
    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(3)
        vocab = {f"word{i:02d}": i for i in range(40)}
        # three planted clusters plus scatter
        centers = rng.normal(size=(3, 5)) * 3.0
        vecs = np.concatenate(
            [
                centers[0] + rng.uniform(-0.1, 0.1, size=(8, 5)),
                centers[1] + rng.uniform(-0.1, 0.1, size=(8, 5)),
                centers[2] + rng.uniform(-0.1, 0.1, size=(8, 5)),
                rng.normal(size=(16, 5)) * 4.0,
            ]
        )
        emb = EmbeddingTable(vocab=vocab, vectors=vecs)
        table = build_synonyms(emb, k=5, d_e=0.8)
        oracle = brute_force_synonyms(emb, k=5, d_e=0.8)
        assert set(table.entries) == set(oracle)
        for w, (syns, radius) in oracle.items():
            assert table.alternatives(w) == syns
            np.testing.assert_allclose(table.radius_for(w), radius, atol=0)

    def test_k_nearest_then_distance_filter(self):
        # five words within d_e of the origin word, k=2 keeps only two
        vocab = {w: i for i, w in enumerate("origin a b c d e far".split())}
        vecs = np.array(
            [[0.0], [0.1], [0.2], [0.3], [0.35], [0.4], [9.0]]
        )
        emb = EmbeddingTable(vocab=vocab, vectors=vecs)
        table = build_synonyms(emb, k=2, d_e=0.5)
        assert table.alternatives("origin") == ("a", "b")
        # the k window can include words beyond d_e, which get dropped
        table2 = build_synonyms(emb, k=3, d_e=0.15)
        assert table2.alternatives("origin") == ("a",)

    def test_distance_ties_break_lexicographically(self):
        vocab = {"aa": 0, "zz": 1, "bb": 2, "yy": 3}
        vecs = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        emb = EmbeddingTable(vocab=vocab, vectors=vecs)
        table = build_synonyms(emb, k=3, d_e=1.5)
        assert table.alternatives("aa") == ("bb", "yy", "zz")

    def test_identical_vectors_are_mutual_zero_distance_synonyms(self):
        vocab = {"one": 0, "two": 1, "far": 2}
        vecs = np.array([[1.0, 1.0], [1.0, 1.0], [8.0, 8.0]])
        emb = EmbeddingTable(vocab=vocab, vectors=vecs)
        table = build_synonyms(emb, k=4, d_e=0.5)
        assert table.alternatives("one") == ("two",)
        assert table.alternatives("two") == ("one",)
        np.testing.assert_array_equal(table.radius_for("one"), [0.0, 0.0])

    def test_isolated_word_has_empty_set_and_zero_radius(self):
        vocab = {"lone": 0, "afar": 1}
        emb = EmbeddingTable(vocab=vocab, vectors=np.array([[0.0], [5.0]]))
        table = build_synonyms(emb, k=8, d_e=0.5)
        assert table.alternatives("lone") == ()
        np.testing.assert_array_equal(table.radius_for("lone"), [0.0])

    def test_radii_nonnegative_and_zero_when_empty(self):
        rng = np.random.default_rng(11)
        emb = EmbeddingTable(
            vocab={f"w{i}": i for i in range(30)},
            vectors=rng.normal(size=(30, 4)),
        )
        table = build_synonyms(emb, k=4, d_e=1.0)
        for w in emb.vocab:
            r = table.radius_for(w)
            assert np.all(r >= 0)
            if not table.alternatives(w):
                assert np.all(r == 0)

    def test_sentence_radii_shape(self):
        vocab = {"one": 0, "two": 1}
        emb = EmbeddingTable(vocab=vocab, vectors=np.array([[0.0, 0.0], [0.1, 0.0]]))
        table = build_synonyms(emb, k=2, d_e=1.0)
        radii = table.sentence_radii(["one", "oov", "two"])
        assert radii.shape == (3, 2)
        np.testing.assert_array_equal(radii[1], [0.0, 0.0])

    def test_cache_roundtrip_and_version_check(self, tmp_path):
        rng = np.random.default_rng(5)
        emb = EmbeddingTable(
            vocab={f"w{i}": i for i in range(12)},
            vectors=rng.normal(size=(12, 3)) * 0.3,
        )
        table = build_synonyms(emb, k=3, d_e=0.7)
        p = tmp_path / "syn.json"
        table.save(p)
        back = SynonymTable.load(p)
        assert back.k == table.k and back.d_e == table.d_e and back.dim == table.dim
        assert set(back.entries) == set(table.entries)
        for w in table.entries:
            assert back.alternatives(w) == table.alternatives(w)
            np.testing.assert_array_equal(back.radius_for(w), table.radius_for(w))
        import json

        payload = json.loads(p.read_text())
        payload["version"] = 999
        p.write_text(json.dumps(payload))
        with pytest.raises(DataError, match="version"):
            SynonymTable.load(p)


class TestTokenize:
    def test_basic(self):
        assert tokenize("Good, movie!") == ["good", "movie"]
        assert tokenize("A B\tC\nd") == ["a", "b", "c", "d"]

    def test_punctuation_only(self):
        assert tokenize("?!...") == []

    @given(st.text(max_size=80))
    @settings(max_examples=200, deadline=None)
    def test_idempotent(self, text):
        once = tokenize(text)
        assert tokenize(" ".join(once)) == once


class TestLoadDataset:
    def test_tsv_row(self, tmp_path):
        p = tmp_path / "d.tsv"
        write_lines(p, ["1\tgood movie", "0\tbad, bad film"])
        ds = load_dataset(p, fmt="tsv")
        assert ds.examples[0] == (["good", "movie"], 1)
        assert ds.examples[1] == (["bad", "bad", "film"], 0)
        assert ds.num_classes == 2

    def test_csv_row_with_commas_in_text(self, tmp_path):
        p = tmp_path / "d.csv"
        write_lines(p, ['1,"good, very good"', "0,awful"])
        ds = load_dataset(p, fmt="csv")
        assert ds.examples[0] == (["good", "very", "good"], 1)

    def test_truncation_to_max_length(self, tmp_path):
        p = tmp_path / "d.tsv"
        write_lines(p, ["0\t" + " ".join(f"w{i}" for i in range(40))])
        ds = load_dataset(p, fmt="tsv", max_length=7)
        assert len(ds.examples[0][0]) == 7

    def test_missing_tab_rejected(self, tmp_path):
        p = tmp_path / "d.tsv"
        write_lines(p, ["1 good movie"])
        with pytest.raises(DataError, match=":1"):
            load_dataset(p)

    def test_bad_label_rejected(self, tmp_path):
        p = tmp_path / "d.tsv"
        write_lines(p, ["pos\tgood"])
        with pytest.raises(DataError, match="label"):
            load_dataset(p)

    def test_empty_text_rejected(self, tmp_path):
        p = tmp_path / "d.tsv"
        write_lines(p, ["1\t..."])
        with pytest.raises(DataError, match="empty"):
            load_dataset(p)

    def test_label_exceeding_num_classes_rejected(self, tmp_path):
        p = tmp_path / "d.tsv"
        write_lines(p, ["5\tgood"])
        with pytest.raises(DataError, match="num_classes"):
            load_dataset(p, num_classes=2)

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(DataError, match="format"):
            load_dataset(tmp_path / "x", fmt="parquet")

    def test_save_roundtrip(self, tmp_path):
        ds = TextDataset(
            examples=[(["good", "movie"], 1), (["bad"], 0)], num_classes=2
        )
        p = tmp_path / "d.tsv"
        save_dataset(ds, p)
        back = load_dataset(p)
        assert back.examples == ds.examples

    def test_dataset_validation(self):
        with pytest.raises(DataError, match="label"):
            TextDataset(examples=[(["a"], 3)], num_classes=2)
        with pytest.raises(DataError, match="empty"):
            TextDataset(examples=[([], 0)], num_classes=2)


class TestSynthetic:
    def test_deterministic_under_seed(self):
        cfg = SyntheticConfig(n_train=50, n_test=20)
        tr1, te1, emb1 = make_synthetic(cfg, seed=9)
        tr2, te2, emb2 = make_synthetic(cfg, seed=9)
        assert tr1.examples == tr2.examples
        assert te1.examples == te2.examples
        np.testing.assert_array_equal(emb1.vectors, emb2.vectors)

    def test_balanced_labels(self):
        tr, te, _ = make_synthetic(SyntheticConfig(n_train=100, n_test=40), seed=1)
        assert int(tr.labels().sum()) == 50
        assert int(te.labels().sum()) == 20

    def test_all_tokens_embeddable(self):
        tr, te, emb = make_synthetic(SyntheticConfig(n_train=30, n_test=10), seed=2)
        for ds in (tr, te):
            for tokens, _ in ds.examples:
                assert all(t in emb for t in tokens)
                assert tokenize(" ".join(tokens)) == tokens

    def test_margin_one_bag_probe_reaches_99_percent(self):
        cfg = SyntheticConfig(n_train=400, n_test=200, margin=1.0)
        train, test, emb = make_synthetic(cfg, seed=7)

        def bags(ds):
            return np.stack(
                [emb.embed_sequence(toks).mean(axis=0) for toks, _ in ds.examples]
            )

        # trained logistic probe on mean embeddings
        xb, yb = bags(train), train.labels()
        w = np.zeros(emb.dim)
        b = 0.0
        for _ in range(2000):
            p = 1.0 / (1.0 + np.exp(-(xb @ w + b)))
            g = p - yb
            w -= 0.5 * (xb.T @ g) / len(yb)
            b -= 0.5 * g.mean()
        xt, yt = bags(test), test.labels()
        acc = float(np.mean(((xt @ w + b) > 0) == yt))
        assert acc >= 0.99

    def test_planted_clusters_become_synonyms(self):
        cfg = SyntheticConfig(
            n_train=10, n_test=10, words_per_class=6, neutral_words=8, spread=0.05
        )
        _, _, emb = make_synthetic(cfg, seed=3)
        table = build_synonyms(emb, k=8, d_e=0.5)
        # every variant of a base word lists only words from its own cluster
        for word in emb.vocab:
            base = word.split("v")[0] if "v" in word else word
            syns = table.alternatives(word)
            assert syns, f"{word} found no synonyms"
            for s in syns:
                s_base = s.split("v")[0] if "v" in s else s
                assert s_base == base
            # radius bounded by twice the per-coordinate spread
            assert np.all(table.radius_for(word) <= 2 * cfg.spread + 1e-12)

    def test_sentence_lengths_within_range(self):
        cfg = SyntheticConfig(n_train=60, n_test=10, min_length=5, max_length=9)
        tr, _, _ = make_synthetic(cfg, seed=4)
        lengths = [len(t) for t, _ in tr.examples]
        assert min(lengths) >= 5 and max(lengths) <= 9

    def test_config_validation(self):
        with pytest.raises(DataError):
            SyntheticConfig(indicative_prob=0.0)
        with pytest.raises(DataError):
            SyntheticConfig(min_length=6, max_length=3)
