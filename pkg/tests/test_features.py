import numpy as np
import pytest
from hypothesis import given, strategies as st

from hcn import features


class TestTokenize:
    def test_lowercase_and_split(self):
        assert features.tokenize("Good Morning") == ["good", "morning"]

    def test_strips_punctuation(self):
        assert features.tokenize("thanks! bye.") == ["thanks", "bye"]

    def test_keeps_apostrophes_and_underscores(self):
        assert features.tokenize("i'd like resto_paris_cheap") == ["i'd", "like", "resto_paris_cheap"]

    def test_empty(self):
        assert features.tokenize("") == []


class FakeDialog:
    def __init__(self, utterances):
        self._utts = utterances

    def user_utterances(self):
        return self._utts


class TestVocabulary:
    def test_insertion_order(self):
        vocab = features.build_vocab([FakeDialog(["a b"]), FakeDialog(["b c"])])
        assert vocab.tokens() == ["a", "b", "c"]
        assert vocab.size == 3

    def test_deterministic(self):
        dialogs = [FakeDialog(["x y z", "y q"])]
        assert features.build_vocab(dialogs) == features.build_vocab(dialogs)

    def test_requires_dialogs(self):
        with pytest.raises(ValueError):
            features.build_vocab([])

    def test_save_load_round_trip(self, tmp_path):
        vocab = features.Vocabulary(["alpha", "beta", "gamma"])
        path = tmp_path / "vocab.txt"
        vocab.save(path)
        assert features.Vocabulary.load(path) == vocab


class TestBowVector:
    def test_presence(self):
        vocab = features.Vocabulary(["a", "b", "c"])
        assert features.bow_vector("a c a", vocab).tolist() == [1.0, 0.0, 1.0]

    def test_oov_gives_zero_vector(self):
        vocab = features.Vocabulary(["a", "b"])
        assert features.bow_vector("x y z", vocab).tolist() == [0.0, 0.0]

    def test_empty_utterance(self):
        vocab = features.Vocabulary(["a"])
        assert features.bow_vector("", vocab).tolist() == [0.0]

    @given(st.lists(st.sampled_from("abcde"), max_size=12))
    def test_binary_and_set_dependent(self, tokens):
        vocab = features.Vocabulary(list("abc"))
        utt = " ".join(tokens)
        vec = features.bow_vector(utt, vocab)
        assert set(np.unique(vec)) <= {0.0, 1.0}
        shuffled = " ".join(sorted(tokens))
        assert np.array_equal(vec, features.bow_vector(shuffled, vocab))


def write_embeddings(path, lines):
    path.write_text("\n".join(lines) + "\n")
    return path


class TestEmbeddings:
    def test_load_small_file(self, tmp_path):
        path = write_embeddings(tmp_path / "emb.txt", ["cat 1.0 0.0 2.0", "dog 0.5 0.5 0.5"])
        table = features.load_embeddings(path)
        assert len(table) == 2
        assert table.dimension == 3
        assert table.get("cat").tolist() == [1.0, 0.0, 2.0]

    def test_duplicate_keeps_last(self, tmp_path, caplog):
        path = write_embeddings(tmp_path / "emb.txt", ["cat 1.0", "cat 2.0"])
        with caplog.at_level("WARNING"):
            table = features.load_embeddings(path)
        assert table.get("cat").tolist() == [2.0]
        assert any("duplicate" in rec.message for rec in caplog.records)

    def test_ragged_line_names_line_number(self, tmp_path):
        path = write_embeddings(tmp_path / "emb.txt", ["cat 1.0 2.0", "dog 0.5"])
        with pytest.raises(ValueError, match="line 2"):
            features.load_embeddings(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            features.load_embeddings(tmp_path / "nope.txt")

    def test_mean_embedding(self, tmp_path):
        path = write_embeddings(tmp_path / "emb.txt", ["a 1.0 0.0", "b 0.0 1.0"])
        table = features.load_embeddings(path)
        assert features.utterance_embedding("a b", table).tolist() == [0.5, 0.5]

    def test_single_word_exact(self, tmp_path):
        path = write_embeddings(tmp_path / "emb.txt", ["a 0.25 -0.5"])
        table = features.load_embeddings(path)
        assert features.utterance_embedding("a", table).tolist() == [0.25, -0.5]

    def test_all_oov_gives_zeros(self, tmp_path):
        path = write_embeddings(tmp_path / "emb.txt", ["a 1.0 1.0"])
        table = features.load_embeddings(path)
        assert features.utterance_embedding("x y", table).tolist() == [0.0, 0.0]


class TestAssembleObservation:
    @pytest.mark.parametrize(
        "layout,total",
        [
            (features.ObservationLayout(bow=85, embedding=300, context=4), 389),
            (features.ObservationLayout(bow=523, embedding=300, context=14), 837),
            (features.ObservationLayout(context=17), 17),
        ],
    )
    def test_reference_sizes(self, layout, total):
        assert layout.obs_size == total
        obs = features.assemble_observation(
            np.zeros(layout.bow),
            np.zeros(layout.embedding),
            np.zeros(layout.context),
            np.zeros(layout.api),
            layout,
        )
        assert len(obs.vector) == total

    def test_length_mismatch(self):
        layout = features.ObservationLayout(bow=2, context=1)
        with pytest.raises(ValueError, match="bow"):
            features.assemble_observation(np.zeros(3), np.zeros(0), np.zeros(1), np.zeros(0), layout)

    def test_segment_offsets(self):
        layout = features.ObservationLayout(bow=2, embedding=2, context=2, api=1)
        base = features.assemble_observation(
            np.array([1.0, 2]), np.array([3.0, 4]), np.array([5.0, 6]), np.array([7.0]), layout
        )
        corrupted = features.assemble_observation(
            np.array([1.0, 2]), np.array([9.0, 9]), np.array([5.0, 6]), np.array([7.0]), layout
        )
        diff = np.flatnonzero(base.vector != corrupted.vector)
        assert diff.tolist() == [2, 3]


class TestFeaturizer:
    def test_observe_concatenates(self, tmp_path):
        vocab = features.Vocabulary(["hello", "world"])
        path = write_embeddings(tmp_path / "emb.txt", ["hello 1.0 0.0", "world 0.0 1.0"])
        table = features.load_embeddings(path)
        layout = features.ObservationLayout(bow=2, embedding=2, context=3)
        feat = features.Featurizer(layout, vocab, table)
        obs = feat.observe("hello", np.array([1.0, 0.0, 1.0]))
        assert obs.vector.tolist() == [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]

    def test_context_only(self):
        feat = features.Featurizer(features.ObservationLayout(context=2))
        assert feat.observe("ignored text", np.array([1.0, 1.0])).vector.tolist() == [1.0, 1.0]

    def test_rejects_inconsistent_layout(self):
        vocab = features.Vocabulary(["a"])
        with pytest.raises(ValueError):
            features.Featurizer(features.ObservationLayout(bow=5), vocab)
        with pytest.raises(ValueError):
            features.Featurizer(features.ObservationLayout(bow=1))
