import numpy as np
import pytest

import lattice_oracle as oracle
from scribe.alphabet import Alphabet
from scribe.features import FEATURE_DIM, FEATURE_NAMES, extract_features
from scribe.segmentation import (
    Segmenter,
    build_lattice,
    decode_alignment,
    seg_ctc_loss,
    segment_dataset,
    train_segmenter,
)
from scribe.strokes import StrokeSequence, delta_encode, strokes_to_points
from scribe.tensor import Tensor, grad_check

ALPHA = Alphabet("abcd")
BLANK = ALPHA.blank_index


def log_softmax_np(logits):
    m = logits.max(axis=1, keepdims=True)
    return logits - m - np.log(np.exp(logits - m).sum(axis=1, keepdims=True))


def dp_loss(logits, label, **kw):
    return float(seg_ctc_loss(Tensor(logits), label, ALPHA, **kw).data)


class TestFeatures:
    def straight(self, n=8):
        pts = [(0, 0, 0)] + [(i * 2.0, i * 1.0, 1) for i in range(1, n + 1)]
        return delta_encode(pts)

    def test_shape_and_names(self):
        assert len(FEATURE_NAMES) == FEATURE_DIM == 23
        for n in (2, 5, 17):
            seq = self.straight(n)
            assert extract_features(seq).shape == (n, 23)

    def test_straight_stroke_has_zero_curvature(self):
        f = extract_features(self.straight())
        turn_cos = f[:, FEATURE_NAMES.index("turn_one_minus_cos")]
        turn_sin = f[:, FEATURE_NAMES.index("turn_sin")]
        turning = f[:, FEATURE_NAMES.index("vic_turning")]
        np.testing.assert_allclose(turn_cos, 0.0, atol=1e-12)
        np.testing.assert_allclose(turn_sin, 0.0, atol=1e-12)
        np.testing.assert_allclose(turning, 0.0, atol=1e-12)

    def test_vicinity_slope_hand_computed(self):
        # 5-point toy stroke; at the center point the chord runs from the
        # first to the last point of the window: (0,0) -> (4,2).
        pts = [(0, 0, 0), (1, 1, 1), (2, 1, 1), (3, 2, 1), (4, 2, 1)]
        seq = delta_encode(pts)
        f = extract_features(seq)
        # row index 2 corresponds to absolute point (3, 2); its window covers
        # rows 0..4 i.e. points (1,1)..(4,2) -- positions are post-delta
        # cumsums, so the chord at row 2 is (4,2)-(1,1) = (3,1).
        chord = np.array([3.0, 1.0])
        unit = chord / np.linalg.norm(chord)
        assert f[2, FEATURE_NAMES.index("vic_chord_cos")] == pytest.approx(unit[0])
        assert f[2, FEATURE_NAMES.index("vic_chord_sin")] == pytest.approx(unit[1])

    def test_pen_lift_and_jump(self):
        pts = strokes_to_points([[(0, 0), (1, 0)], [(5, 5), (6, 5)]])
        f = extract_features(delta_encode(pts))
        assert f[0, FEATURE_NAMES.index("pen_lift")] == 1.0
        assert f[1, FEATURE_NAMES.index("jump_distance")] > 0
        assert f[2, FEATURE_NAMES.index("jump_distance")] == 0.0

    def test_requires_two_points(self):
        seq = StrokeSequence(rows=np.array([[1.0, 0.0, 1.0]]))
        with pytest.raises(ValueError):
            extract_features(seq)


class TestLatticeLoss:
    def test_repeated_label_single_path(self):
        # "aa" over 3 frames admits exactly the path a,-,a
        rng = np.random.default_rng(0)
        logits = rng.standard_normal((3, ALPHA.size))
        lp = log_softmax_np(logits)
        a = ALPHA.index("a")
        expected = -(lp[0, a] + lp[1, BLANK] + lp[2, a])
        assert dp_loss(logits, "aa") == pytest.approx(expected, abs=1e-12)
        paths, _ = oracle.enumerate_paths("aa", 3, BLANK, ALPHA.index)
        assert len(paths) == 1

    def test_distinct_label_three_paths(self):
        # "ab" over 3 frames: aab, abb, a-b
        rng = np.random.default_rng(1)
        logits = rng.standard_normal((3, ALPHA.size))
        lp = log_softmax_np(logits)
        total, paths, _ = oracle.total_probability("ab", lp, BLANK, ALPHA.index)
        assert len(paths) == 3
        a, b = ALPHA.index("a"), ALPHA.index("b")
        by_hand = (
            np.exp(lp[0, a] + lp[1, a] + lp[2, b])
            + np.exp(lp[0, a] + lp[1, b] + lp[2, b])
            + np.exp(lp[0, a] + lp[1, BLANK] + lp[2, b])
        )
        assert total == pytest.approx(by_hand, rel=1e-12)
        assert np.exp(-dp_loss(logits, "ab")) == pytest.approx(by_hand, abs=1e-12)

    def test_uniform_logits_closed_form(self):
        q = ALPHA.size
        for label, n in [("a", 4), ("ab", 5), ("aa", 5), ("abca", 7)]:
            logits = np.zeros((n, q))
            paths, _ = oracle.enumerate_paths(label, n, BLANK, ALPHA.index)
            expected = -np.log(len(paths) * q ** (-float(n)))
            assert dp_loss(logits, label) == pytest.approx(expected, rel=1e-12)

    def test_dp_equals_enumeration_sweep(self):
        rng = np.random.default_rng(2)
        labels = ["a", "b", "ab", "aa", "abc", "aba", "abb", "aabb", "abcd"]
        for label in labels:
            lattice = build_lattice(label, ALPHA)
            for n in range(lattice.min_path, 7):
                logits = rng.standard_normal((n, ALPHA.size))
                total, _, _ = oracle.total_probability(label, log_softmax_np(logits), BLANK, ALPHA.index)
                assert np.exp(-dp_loss(logits, label)) == pytest.approx(total, abs=1e-9)

    def test_no_blank_variant(self):
        rng = np.random.default_rng(3)
        for label in ["ab", "aa", "abc", "abb"]:
            lattice = build_lattice(label, ALPHA, allow_blank_between_distinct=False)
            for n in range(lattice.min_path, 7):
                logits = rng.standard_normal((n, ALPHA.size))
                total, paths, _ = oracle.total_probability(
                    label, log_softmax_np(logits), BLANK, ALPHA.index, allow_blank_between_distinct=False
                )
                got = dp_loss(logits, label, allow_blank_between_distinct=False)
                assert np.exp(-got) == pytest.approx(total, abs=1e-9)
        # "ab" over 3 frames without optional blanks: only aab and abb remain
        paths, _ = oracle.enumerate_paths("ab", 3, BLANK, ALPHA.index, allow_blank_between_distinct=False)
        assert len(paths) == 2

    def test_too_short_raises(self):
        logits = np.zeros((2, ALPHA.size))
        with pytest.raises(ValueError, match="minimum path length"):
            dp_loss(logits, "aba")  # needs 3 frames
        with pytest.raises(ValueError, match="minimum path length"):
            dp_loss(np.zeros((2, ALPHA.size)), "aa")  # repeat needs 3

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        logits = Tensor(rng.standard_normal((6, ALPHA.size)), requires_grad=True)
        report = grad_check(lambda: seg_ctc_loss(logits, "aba", ALPHA), [logits], h=1e-6)
        assert report.max_rel_err < 1e-4, str(report)


class TestDecodeAlignment:
    def test_peaked_identity_alignment(self):
        label = "abc"
        logits = np.full((3, ALPHA.size), -20.0)
        for t, ch in enumerate(label):
            logits[t, ALPHA.index(ch)] = 20.0
        ali = decode_alignment(logits, label, ALPHA)
        np.testing.assert_array_equal(ali.char_index, [0, 1, 2])
        np.testing.assert_array_equal(ali.eoc, [1, 1, 1])

    def test_repeated_blank_absorbs_backward(self):
        # "aa" over 3 frames: single path a,-,a; blank attaches to the first a
        rng = np.random.default_rng(5)
        logits = rng.standard_normal((3, ALPHA.size))
        ali = decode_alignment(logits, "aa", ALPHA)
        np.testing.assert_array_equal(ali.char_index, [0, 0, 1])
        np.testing.assert_array_equal(ali.eoc, [0, 1, 1])

    def test_viterbi_beats_every_enumerated_path(self):
        rng = np.random.default_rng(6)
        for label in ["ab", "aab", "abca", "bb"]:
            lattice = build_lattice(label, ALPHA)
            for n in range(lattice.min_path, 7):
                logits = rng.standard_normal((n, ALPHA.size))
                ali = decode_alignment(logits, label, ALPHA)
                best_lp, _ = oracle.best_path(label, log_softmax_np(logits), BLANK, ALPHA.index)
                assert ali.log_prob == pytest.approx(best_lp, abs=1e-9)

    def test_alignment_invariants_random(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            label = "".join(rng.choice(list("abcd"), size=rng.integers(1, 5)))
            lattice = build_lattice(label, ALPHA)
            n = int(rng.integers(lattice.min_path, lattice.min_path + 6))
            logits = rng.standard_normal((n, ALPHA.size))
            ali = decode_alignment(logits, label, ALPHA)
            ali.validate()  # raises on violation


class TestSegmenterConvergence:
    def test_trained_boundaries_match_ground_truth(self):
        # train on the synthetic corpus without its eoc labels, then compare
        # decoded boundaries against the withheld ground truth
        from scribe.synthetic import DEFAULT_WORDS, make_styles, synth_corpus
        from scribe.tensor import no_grad

        words = DEFAULT_WORDS[:30]
        corpus = synth_corpus(make_styles(4, rng_seed=0, jitter_amp=0.5), words, rng_seed=0)
        alpha = Alphabet("".join(sorted({c for s in corpus for c in s.text})))
        unlabelled = [StrokeSequence(rows=s.rows.copy(), writer_id=s.writer_id, text=s.text) for s in corpus]
        seg, log = train_segmenter(unlabelled, alpha, hidden=24, layers=1, steps=300, batch_size=4, seed=0)
        assert log[-1]["phase"] == "lattice"

        from scribe.features import extract_features as feats

        hits = total = 0
        for s in corpus:
            with no_grad():
                logits = seg.logits(feats(s))
            ali = decode_alignment(logits.data, s.text, alpha)
            pred = np.nonzero(ali.eoc)[0]
            true = s.eoc_indices()
            for p, t in zip(pred, true):
                total += 1
                hits += abs(int(p) - int(t)) <= 2
        assert hits / total >= 0.90, f"boundary placement within 2 points for only {hits}/{total}"


class TestSegmenterNetwork:
    def test_logits_shape_and_grads_flow(self):
        seg = Segmenter(ALPHA, hidden=6, layers=2, seed=0)
        feats = np.random.default_rng(8).standard_normal((9, FEATURE_DIM))
        logits = seg.logits(feats)
        assert logits.shape == (9, ALPHA.size)
        loss = seg_ctc_loss(logits, "ab", ALPHA)
        loss.backward()
        grads = [p.grad for p in seg.params().values()]
        assert all(g is not None for g in grads)
        assert any(np.abs(g).sum() > 0 for g in grads)

    def test_save_load_roundtrip(self, tmp_path):
        seg = Segmenter(ALPHA, hidden=5, layers=1, seed=3)
        path = tmp_path / "seg.ckpt"
        seg.save(path)
        back = Segmenter.load(path)
        assert back.alphabet == ALPHA
        feats = np.random.default_rng(9).standard_normal((6, FEATURE_DIM))
        np.testing.assert_array_equal(seg.logits(feats).data, back.logits(feats).data)

    def test_segment_dataset_fills_eoc(self):
        seg = Segmenter(ALPHA, hidden=4, layers=1, seed=1)
        rows = np.column_stack([np.random.default_rng(10).standard_normal((8, 2)), np.zeros(8)])
        rows[-1, 2] = 1.0
        sample = StrokeSequence(rows=rows, writer_id="w", text="ab")
        [out] = segment_dataset([sample], seg)
        assert out.eoc is not None and out.eoc.sum() == 2
        out.validate()
