import json
import logging

import numpy as np
import pytest

from scribe.alphabet import Alphabet, UnknownCharacterError, default_alphabet, one_hot_encode
from scribe.dataset import ingest_absolute, load_dataset, sample_to_record, save_dataset
from scribe.strokes import StrokeSequence
from scribe.synthetic import (
    DEFAULT_WORDS,
    SyntheticWriterStyle,
    char_template,
    make_styles,
    synth_corpus,
    synthetic_alphabet,
    template_characters,
)


class TestAlphabet:
    def test_default_size_is_87(self):
        # 86 characters plus the blank -> one-hot length 87
        alpha = default_alphabet()
        assert alpha.size == 87
        assert alpha.blank_index == 86
        assert one_hot_encode("a", alpha).shape == (1, 87)

    def test_one_hot_positions(self):
        alpha = default_alphabet()
        m = one_hot_encode("ab", alpha)
        assert m.shape == (2, 87)
        assert m.sum() == 2
        assert m[0].argmax() == alpha.index("a")
        assert m[1].argmax() == alpha.index("b")

    def test_empty_string_rejected(self):
        with pytest.raises(ValueError):
            one_hot_encode("", default_alphabet())

    def test_unknown_character(self):
        with pytest.raises(UnknownCharacterError) as exc:
            one_hot_encode("aé", default_alphabet())
        assert "é" in str(exc.value)

    def test_indices_stable(self):
        a1, a2 = default_alphabet(), default_alphabet()
        assert a1.indices("hello world").tolist() == a2.indices("hello world").tolist()

    def test_duplicate_characters_rejected(self):
        with pytest.raises(ValueError):
            Alphabet("aba")


class TestDatasetIO:
    def sample(self, wid="w0", text="ab"):
        rows = np.array([[1.5, -2.25, 0.0], [0.125, 3.0, 1.0], [2.0, 0.0, 1.0]])
        return StrokeSequence(rows=rows, writer_id=wid, text=text, eoc=np.array([0, 1, 1]))

    def test_write_then_read_roundtrip(self, tmp_path):
        path = tmp_path / "data.jsonl"
        samples = [self.sample(f"w{i}") for i in range(3)]
        save_dataset(path, samples)
        back = load_dataset(path)
        assert len(back) == 3
        for a, b in zip(samples, back):
            np.testing.assert_array_equal(a.rows, b.rows)
            np.testing.assert_array_equal(a.eoc, b.eoc)
            assert (a.writer_id, a.text) == (b.writer_id, b.text)

    def test_full_float_precision(self):
        s = self.sample()
        s.rows[0, 0] = 0.1 + 0.2  # not exactly representable in short decimal
        rec = json.loads(sample_to_record(s))
        assert rec["points"][0][0] == s.rows[0, 0]

    def test_empty_file(self, tmp_path, caplog):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with caplog.at_level(logging.WARNING):
            assert load_dataset(path) == []
        assert "no valid records" in caplog.text

    def test_bad_eoc_count_skipped_with_line_number(self, tmp_path, caplog):
        path = tmp_path / "data.jsonl"
        good = sample_to_record(self.sample())
        bad = json.dumps({"writer_id": "w", "text": "abc", "points": [[1, 1, 1]], "eoc": [1]})
        path.write_text(good + "\n" + bad + "\n")
        with caplog.at_level(logging.WARNING):
            out = load_dataset(path, on_error="skip")
        assert len(out) == 1
        assert ":2:" in caplog.text

    def test_fail_fast_mode(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text("not json\n")
        with pytest.raises(ValueError, match=":1:"):
            load_dataset(path, on_error="raise")

    def test_ingest_absolute_applies_reordering(self):
        recs = [
            {
                "writer_id": "w",
                "text": "xy",
                "strokes": [[[10.0, 0.0], [14.0, 1.0]], [[0.0, 0.0], [3.0, 1.0]]],
            }
        ]
        [seq] = ingest_absolute(recs)
        # after reordering the first movement belongs to the left stroke
        assert seq.rows[0, 0] == 3.0


class TestSyntheticCorpus:
    def test_same_seed_identical(self):
        styles = make_styles(2, rng_seed=5)
        a = synth_corpus(styles, ["his", "the"], rng_seed=11)
        b = synth_corpus(styles, ["his", "the"], rng_seed=11)
        assert len(a) == len(b) == 4
        for s, t in zip(a, b):
            np.testing.assert_array_equal(s.rows, t.rows)
            np.testing.assert_array_equal(s.eoc, t.eoc)

    def test_scale_two_doubles_deltas_exactly(self):
        base = dict(slant=0.21, spacing=3.0, jitter_seed=7, jitter_amp=0.5)
        s1 = SyntheticWriterStyle(writer_id="a", scale=1.0, **base)
        s2 = SyntheticWriterStyle(writer_id="b", scale=2.0, **base)
        [r1] = synth_corpus([s1], ["when"], rng_seed=3)
        [r2] = synth_corpus([s2], ["when"], rng_seed=3)
        np.testing.assert_array_equal(r2.rows[:, :2], 2.0 * r1.rows[:, :2])
        np.testing.assert_array_equal(r2.rows[:, 2], r1.rows[:, 2])

    def test_identity_style_reproduces_template_deltas(self):
        style = SyntheticWriterStyle(writer_id="w", slant=0.0, scale=1.0, spacing=4.0, jitter_seed=0, jitter_amp=0.0)
        [seq] = synth_corpus([style], ["o"], rng_seed=0)
        [tpl] = char_template("o")
        np.testing.assert_array_equal(seq.rows[:, :2], np.diff(tpl, axis=0))

    def test_every_sample_satisfies_invariants(self):
        styles = make_styles(3, rng_seed=1)
        corpus = synth_corpus(styles, DEFAULT_WORDS[:10], rng_seed=2)
        for s in corpus:
            s.validate()
            idx = s.eoc_indices()
            assert len(idx) == len(s.text)
            assert (np.diff(idx) > 0).all()
            assert idx[-1] == len(s) - 1

    def test_unknown_character_raises(self):
        style = make_styles(1)[0]
        with pytest.raises(ValueError, match="template"):
            synth_corpus([style], ["ab9"], rng_seed=0)

    def test_synthetic_alphabet_covers_templates(self):
        alpha = synthetic_alphabet()
        for c in template_characters():
            assert c in alpha

    def test_word_list_renderable(self):
        chars = set(template_characters())
        for w in DEFAULT_WORDS:
            assert set(w) <= chars
