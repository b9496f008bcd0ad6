"""Acceptance gate: one test per criterion, each printing a pass line.

Run with ``pytest tests/test_acceptance.py -v -s``. The desk-scale training
fixture (criterion 5) is shared by criteria 6 and 7; criterion 8 trains its
own model on multi-word samples. Budgets and tolerances are pinned in the
criterion constants below.
"""

import itertools
import json
import time
from dataclasses import replace

import numpy as np
import pytest

import lattice_oracle as oracle
from scribe import tensor as T
from scribe.alphabet import Alphabet
from scribe.applications import audit_invertibility, build_codebook, estimate_new_character, identify_writer
from scribe.cli import main as cli_main
from scribe.database import build_database, sample_wcts
from scribe.losses import total_loss
from scribe.model import ModelConfig, StyleModel
from scribe.nn import init_lstm, lstm_forward
from scribe.segmentation import build_lattice, seg_ctc_loss
from scribe.synthetic import DEFAULT_WORDS, make_styles, synth_corpus, synthetic_alphabet
from scribe.tensor import Tensor, grad_check, mat_inverse
from scribe.training import TrainConfig, derive_views, train

GRAD_TOL = 1e-4  # criterion 1
INVERSE_CHAIN_TOL = 1e-5  # criterion 2
CTC_ABS_TOL = 1e-9  # criterion 3
FC2_EXPECTED = 16_842_752  # criterion 4
TOTAL_PARAM_RANGE = (31.0e6, 31.7e6)  # criterion 4
LOSS_DROP_FRACTION = 0.5  # criterion 5
TRAIN_BUDGET_SECONDS = 15 * 60  # criterion 5
RANK_RATIO = 1e-10  # criterion 6
ROUNDTRIP_TOL = 1e-6  # criterion 7
IDENT_ACCURACY_FLOOR = 0.75  # criterion 8
IDENT_TRIALS = 20  # criterion 8
NEWCHAR_TOL = 1e-6  # criterion 9


def announce(num, text):
    print(f"\nACCEPTANCE {num:02d} PASS: {text}")


# -- shared training fixtures --------------------------------------------------


@pytest.fixture(scope="module")
def desk_run():
    """Criterion 5's training run: 8 writers x 40 words, L=32, K=5, 2000 steps."""
    styles = make_styles(8, rng_seed=0, jitter_amp=0.6)
    corpus = synth_corpus(styles, DEFAULT_WORDS[:40], rng_seed=0)
    config = TrainConfig(
        latent_dim=32,
        mixtures=5,
        lstm_layers=3,
        steps=2000,
        batch_sentences=5,
        log_every=10,
        seed=0,
        alphabet=synthetic_alphabet(),
    )
    start = time.monotonic()
    result = train(corpus, config)
    wall = time.monotonic() - start
    return {"result": result, "corpus": corpus, "styles": styles, "wall": wall}


@pytest.fixture(scope="module")
def ident_run():
    """Criterion 8's model: two-word samples knit writer vectors across
    content, and the latent terms are upweighted so the factorization
    emerges within a desk-scale step budget."""
    styles = make_styles(8, rng_seed=0, jitter_amp=0.6, letterform_amp=2.4)
    words = DEFAULT_WORDS[:40]
    rng = np.random.default_rng(4)
    pairs = rng.choice(40, size=(40, 2), replace=True)
    phrases = [words[i] + " " + words[j] for i, j in pairs if i != j][:30]
    corpus = synth_corpus(styles, phrases, rng_seed=0)
    config = TrainConfig(
        latent_dim=32,
        mixtures=5,
        lstm_layers=3,
        steps=1000,
        batch_sentences=5,
        log_every=100,
        seed=0,
        alphabet=synthetic_alphabet(),
        latent_weight=200.0,
    )
    result = train(corpus, config)
    return {"model": result.model, "styles": styles, "phrases": phrases}


# -- criteria -------------------------------------------------------------------


class TestCriterion01GradientCorrectness:
    def test_every_primitive_and_the_composed_loss(self):
        start = time.monotonic()
        rng = np.random.default_rng(11)

        def check(name, build, leaves):
            report = grad_check(build, leaves, h=1e-5, max_coords=24)
            assert report.max_rel_err < GRAD_TOL, f"{name}: {report}"

        a = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
        b = Tensor(rng.standard_normal((5, 3)), requires_grad=True)
        check("matmul", lambda: ((a @ b) ** 2.0).sum(), [a, b])
        m = Tensor(rng.standard_normal((6, 6)) + 4 * np.eye(6), requires_grad=True)
        check("inverse", lambda: mat_inverse(m).sum(), [m])
        x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        check("sigmoid", lambda: T.sigmoid(x).sum(), [x])
        check("tanh", lambda: T.tanh(x).sum(), [x])
        check("exp", lambda: T.exp(x).sum(), [x])
        mixer = Tensor(rng.standard_normal((3, 4)))
        check("softmax", lambda: (T.softmax(x, axis=1) * mixer).sum(), [x])
        check("log_softmax", lambda: (T.log_softmax(x, axis=1) ** 2.0).sum(), [x])
        check("logsumexp", lambda: T.logsumexp(x, axis=1).sum(), [x])
        w = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
        bias = Tensor(rng.standard_normal(2), requires_grad=True)
        check("affine", lambda: ((x @ w + bias) ** 2.0).sum(), [x, w, bias])
        params = init_lstm(np.random.default_rng(3), 3, 4, 2)
        xin = Tensor(rng.standard_normal((5, 3)), requires_grad=True)
        leaves = [xin] + [t for lay in params.layers for t in (lay.wx, lay.wh, lay.b)]
        check("lstm", lambda: (lstm_forward(xin, params) ** 2.0).sum(), leaves)

        # composed objective: L=8 model, 2 writers, 3-char words
        model = StyleModel(ModelConfig(alphabet=synthetic_alphabet(), latent_dim=8, mixtures=2, lstm_layers=1, seed=5))
        styles = make_styles(2, rng_seed=5, jitter_amp=0.4)
        batch = synth_corpus(styles, ["his", "ten"], rng_seed=5)
        views = derive_views(batch)
        leaves = list(model.params().values())
        report = grad_check(lambda: total_loss(model, views)[0], leaves, h=1e-5, max_coords=40)
        assert report.max_rel_err < GRAD_TOL, str(report)

        elapsed = time.monotonic() - start
        assert elapsed < 60, f"criterion 1 took {elapsed:.1f}s"
        announce(1, f"all primitives and the composed loss match finite differences < {GRAD_TOL} ({elapsed:.1f}s)")


class TestCriterion02InverseBackprop:
    def test_inverse_rule_through_mean_and_alpha_chain(self):
        worst = 0.0
        for case in range(10):
            rng = np.random.default_rng(100 + case)
            n = 8
            cs = [Tensor(rng.standard_normal((n, n)) + 4.0 * np.eye(n), requires_grad=True) for _ in range(2)]
            ws = [Tensor(rng.standard_normal(n)) for _ in range(2)]
            targets = [Tensor(rng.standard_normal(n)) for _ in range(2)]

            def build():
                mean = (mat_inverse(cs[0]) @ ws[0] + mat_inverse(cs[1]) @ ws[1]) * 0.5
                loss = Tensor(0.0)
                for c, t in zip(cs, targets):
                    diff = c @ mean - t
                    loss = loss + (diff * diff).sum()
                return loss

            report = grad_check(build, cs, h=1e-5, max_coords=16, rng=rng)
            worst = max(worst, report.max_rel_err)
            assert report.max_rel_err < INVERSE_CHAIN_TOL, f"case {case}: {report}"
        announce(2, f"inverse backward validated through the mean/remix chain on 10 8x8 cases (worst {worst:.2e})")


class TestCriterion03CtcEquivalence:
    def test_dp_equals_enumeration_everywhere(self):
        start = time.monotonic()
        alpha = Alphabet("abc")  # 3 characters + blank = 4 classes
        blank = alpha.blank_index
        rng = np.random.default_rng(0)
        n_cases = 0
        worst = 0.0
        for length in range(1, 5):
            for combo in itertools.product("abc", repeat=length):
                label = "".join(combo)
                lattice = build_lattice(label, alpha)
                for n in range(lattice.min_path, 9):
                    logits = rng.standard_normal((n, alpha.size))
                    m = logits.max(axis=1, keepdims=True)
                    lsm = logits - m - np.log(np.exp(logits - m).sum(axis=1, keepdims=True))
                    total, _, _ = oracle.total_probability(label, lsm, blank, alpha.index)
                    dp = float(seg_ctc_loss(Tensor(logits), label, alpha).data)
                    worst = max(worst, abs(np.exp(-dp) - total))
                    n_cases += 1
        elapsed = time.monotonic() - start
        assert worst < CTC_ABS_TOL, f"worst probability-space gap {worst:.2e}"
        assert elapsed < 30, f"criterion 3 took {elapsed:.1f}s"
        announce(3, f"lattice DP equals path enumeration on {n_cases} cases (worst gap {worst:.1e}, {elapsed:.1f}s)")


class TestCriterion04ParameterCounts:
    def test_expansion_layer_exact_and_total_in_range(self):
        shapes = StyleModel.parameter_shapes(latent_dim=256, mixtures=20, alphabet_size=87, lstm_layers=3)
        fc2 = int(np.prod(shapes["char_expand.w"])) + int(np.prod(shapes["char_expand.b"]))
        assert fc2 == FC2_EXPECTED
        total = sum(int(np.prod(s)) for s in shapes.values())
        print(f"\nfull model parameter count at latent 256: {total:,}")
        assert TOTAL_PARAM_RANGE[0] <= total <= TOTAL_PARAM_RANGE[1], f"total {total:,} outside {TOTAL_PARAM_RANGE}"
        # the shape table matches a live (small) model exactly
        small = StyleModel(ModelConfig(alphabet=synthetic_alphabet(), latent_dim=16, mixtures=3, lstm_layers=2))
        live = {k: v.data.shape for k, v in small.params().items()}
        assert live == StyleModel.parameter_shapes(16, 3, small.alphabet.size, 2)
        announce(4, f"expansion layer has exactly {fc2:,} parameters; full model {total:,} in [31.0M, 31.7M]")


class TestCriterion05DeskTraining:
    def test_loss_halves_within_budget(self, desk_run):
        result = desk_run["result"]
        step10 = next(r["total"] for r in result.log if r["step"] == 10)
        final = result.final_loss
        assert np.isfinite([r["total"] for r in result.log]).all()
        assert final < LOSS_DROP_FRACTION * step10, f"final {final:.1f} vs step-10 {step10:.1f}"
        assert desk_run["wall"] < TRAIN_BUDGET_SECONDS, f"training took {desk_run['wall']:.0f}s"
        announce(
            5,
            f"2000-step desk training: loss {step10:.1f} -> {final:.1f} "
            f"({final / step10:+.1%} of step-10) in {desk_run['wall']:.0f}s",
        )


class TestCriterion06InvertibilityAfterTraining:
    def test_all_single_and_pair_matrices_full_rank(self, desk_run):
        model = desk_run["result"].model
        report = audit_invertibility(model, max_len=2)
        assert report.singular_strings == [], f"singular strings: {report.singular_strings[:10]}"
        assert all(r.sigma_ratio > RANK_RATIO for r in report.records)
        announce(6, f"all {report.n_checked} single- and two-character matrices pass the rank test")


class TestCriterion07RoundtripIdentity:
    def test_single_char_inverse_roundtrip_residual(self, desk_run):
        model = desk_run["result"].model
        corpus = desk_run["corpus"]
        rng = np.random.default_rng(9)
        checked = 0
        worst = 0.0
        with T.no_grad():
            while checked < 100:
                sample = corpus[int(rng.integers(len(corpus)))]
                spans = sample.char_spans()
                ci = int(rng.integers(len(sample.text)))
                crop = sample.crop(spans[ci][0], spans[ci][1], sample.text[ci])
                _, stacked = model.encode_stacked(crop)
                w = stacked.data[0]
                [cm] = model.char_matrices(crop.text)
                back = cm.mat.data @ np.linalg.solve(cm.mat.data, w)
                residual = float(((w - back) ** 2).sum())
                worst = max(worst, residual)
                assert residual < ROUNDTRIP_TOL, f"char {crop.text!r}: residual {residual:.2e}"
                checked += 1
        announce(7, f"single-character inverse round trip residual < {ROUNDTRIP_TOL} on 100 samples (worst {worst:.1e})")


class TestCriterion08WriterIdentification:
    def test_accuracy_floor_and_monotone_trend(self, ident_run):
        model = ident_run["model"]
        styles = ident_run["styles"]
        phrases = ident_run["phrases"]

        enroll = synth_corpus(styles, phrases[:5], rng_seed=0)  # 5-sample codebooks
        by_writer = {}
        for s in enroll:
            by_writer.setdefault(s.writer_id, []).append(s)
        codebook = build_codebook(model, by_writer)

        unseen = DEFAULT_WORDS[40:60]

        def query_groups(trial):
            rng = np.random.default_rng(1000 + trial)
            groups, labels = [], []
            for style in styles:
                for v in range(4):  # 4 held-out sessions per writer
                    held = replace(style, jitter_seed=style.jitter_seed + 500 + 10 * trial + v)
                    words = list(rng.choice(unseen, size=10, replace=False))
                    groups.append(synth_corpus([held], words, rng_seed=7000 + 100 * trial + v))
                    labels.append(style.writer_id)
            return groups, labels

        groups, labels = query_groups(0)
        acc10 = identify_writer(codebook, groups, model, labels=labels).accuracy
        assert acc10 >= IDENT_ACCURACY_FLOOR, f"10-word accuracy {acc10:.3f} below {IDENT_ACCURACY_FLOOR}"

        acc10s, acc1s = [], []
        for trial in range(IDENT_TRIALS):
            groups, labels = query_groups(trial)
            acc10s.append(identify_writer(codebook, groups, model, labels=labels).accuracy)
            acc1s.append(identify_writer(codebook, [g[:1] for g in groups], model, labels=labels).accuracy)
        mean10 = float(np.mean(acc10s))
        mean1 = float(np.mean(acc1s))
        assert mean10 >= mean1, f"10-word mean {mean10:.3f} below 1-word mean {mean1:.3f}"
        announce(
            8,
            f"identification: 10-word accuracy {acc10:.3f} (chance 0.125); "
            f"trend over {IDENT_TRIALS} trials: {mean1:.3f} (1 word) -> {mean10:.3f} (10 words)",
        )


class TestCriterion09NewCharacterRecovery:
    def test_exact_recovery_and_heldout_trend(self):
        latent = 16
        rng = np.random.default_rng(3)
        c_star = rng.standard_normal((latent, latent)) + 2.0 * np.eye(latent)
        ws = rng.standard_normal((2 * latent + 20, latent))
        pairs = [(w, c_star @ w) for w in ws]
        held = pairs[2 * latent :]

        res = estimate_new_character(pairs[: 2 * latent], mode="direct_lsq")
        err = np.linalg.norm(res.matrix - c_star, "fro")
        assert err < NEWCHAR_TOL, f"recovery error {err:.2e}"

        residuals = []
        for k in (1, latent // 2, latent, 2 * latent):
            est = estimate_new_character(pairs[:k], mode="direct_lsq")
            residuals.append(float(np.mean([np.linalg.norm(est.matrix @ w - wn) for w, wn in held])))
        for a, b in zip(residuals, residuals[1:]):
            assert b <= a + 1e-9, f"held-out residuals not weakly decreasing: {residuals}"
        announce(
            9,
            f"recovery error {err:.1e} with {2 * latent} pairs; held-out residuals "
            + " -> ".join(f"{r:.2e}" for r in residuals),
        )


class TestCriterion10SamplingConformance:
    def test_thin_from_his_relink_trace(self):
        model = StyleModel(ModelConfig(alphabet=synthetic_alphabet(), latent_dim=10, mixtures=2, lstm_layers=1, seed=2))
        [his] = synth_corpus(make_styles(1, rng_seed=4, jitter_amp=0.4), ["his"], rng_seed=9)
        db = build_database([his], model)
        assert sorted(db.keys()) == ["h", "hi", "his", "i", "is", "s"]
        plan = sample_wcts(db, "thin", model)
        assert [(s.key, s.source) for s in plan.segments] == [
            ("t", "mean"),
            ("hi", "database"),
            ("n", "mean"),
        ]
        assert plan.relink_calls == [["t"], ["t", "h"], ["t", "hi"], ["t", "hi", "n"]]
        assert len(plan.wcts) == 4
        announce(10, "conditioning for 'thin' from a 'his' database follows the four relink equations exactly")


class TestCriterion11Determinism:
    def test_synth_data_generate_and_train_are_reproducible(self, desk_run, tmp_path):
        # synth-data: byte-identical dataset files
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for path in (a, b):
            assert cli_main(["synth-data", "--writers", "3", "--words", "6", "--seed", "9", "--out", str(path)]) == 0
        assert a.read_bytes() == b.read_bytes()

        # train: byte-identical checkpoints and bitwise loss traces
        traces, ckpt_bytes = [], []
        data = tmp_path / "train_data.jsonl"
        assert cli_main(["synth-data", "--writers", "2", "--words", "4", "--seed", "3", "--out", str(data)]) == 0
        for run in ("r1", "r2"):
            out = tmp_path / run
            rc = cli_main(
                ["train", "--data", str(data), "--out", str(out), "--steps", "40", "--latent", "12",
                 "--mixtures", "2", "--layers", "1", "--seed", "2", "--log-every", "5"]
            )
            assert rc == 0
            records = [json.loads(line) for line in (out / "train_log.jsonl").read_text().splitlines()]
            traces.append([(r["step"], r["total"], tuple(sorted(r["terms"].items()))) for r in records])
            ckpt_bytes.append((out / "model.ckpt").read_bytes())
        assert traces[0] == traces[1]
        assert ckpt_bytes[0] == ckpt_bytes[1]

        # generate: byte-identical outputs from the trained desk model
        ckpt = tmp_path / "desk.ckpt"
        desk_run["result"].model.save(ckpt)
        refs = tmp_path / "refs.jsonl"
        from scribe.dataset import save_dataset

        save_dataset(refs, desk_run["corpus"][:3])
        outs = []
        for name in ("g1", "g2"):
            out = tmp_path / name
            rc = cli_main(
                ["generate", "--checkpoint", str(ckpt), "--refs", str(refs), "--text", "his",
                 "--seed", "4", "--max-steps", "250", "--out", str(out)]
            )
            assert rc in (0, 2)
            outs.append((out / "generated.jsonl").read_bytes() + (out / "generated.svg").read_bytes())
        assert outs[0] == outs[1]
        announce(11, "synth-data, train, and generate are byte-reproducible under fixed seeds")
