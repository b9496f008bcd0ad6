"""Command-line surface tying the pipeline together.

Exit codes: 0 success, 1 usage error, 2 runtime failure. Every subcommand
accepts ``--config FILE`` (text ``key = value`` lines); precedence is
built-in defaults, then config file, then explicit flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .alphabet import Alphabet, default_alphabet
from .applications import audit_invertibility, build_codebook, estimate_new_character, identify_writer, interpolate_char_bilinear, interpolate_writer
from .database import build_database, sample_wcts
from .dataset import ingest_absolute, load_dataset, sample_to_record, save_dataset
from .model import StyleModel, decode_strokes
from .render import RenderSpec, render_svg
from .segmentation import Segmenter, segment_dataset, train_segmenter
from .synthetic import DEFAULT_WORDS, make_styles, synth_corpus, synthetic_alphabet, template_characters
from .training import TrainConfig, train

__all__ = ["main", "entrypoint"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_config_file(path) -> dict:
    """key = value lines; '#' starts a comment; values keep their raw text."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _merge(args, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    merged = dict(defaults)
    if getattr(args, "config", None):
        file_values = parse_config_file(args.config)
        unknown = set(file_values) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)}")
        for k, v in file_values.items():
            ref = defaults[k]
            if isinstance(ref, bool):
                merged[k] = v.lower() in ("1", "true", "yes")
            elif isinstance(ref, int):
                merged[k] = int(v)
            elif isinstance(ref, float):
                merged[k] = float(v)
            else:
                merged[k] = v
    for k in defaults:
        flag = getattr(args, k, None)
        if flag is not None:
            merged[k] = flag
    return merged


def _load_labelled(path):
    samples = load_dataset(path)
    missing = [i for i, s in enumerate(samples) if s.eoc is None]
    if missing:
        raise RuntimeError(
            f"{len(missing)} record(s) in {path} lack end-of-character labels; run the segment subcommand first"
        )
    return samples


def _group_by_writer(samples):
    grouped: dict[str, list] = {}
    for s in samples:
        grouped.setdefault(s.writer_id, []).append(s)
    return grouped


def build_parser() -> _Parser:
    p = _Parser(prog="scribe", description="Factorized online-handwriting modeling")
    sub = p.add_subparsers(dest="command", metavar="command")

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="key = value config file")
        return sp

    sp = add("ingest", "convert absolute-coordinate drawings to delta records")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-reorder", action="store_true", help="skip delayed-stroke reordering")

    sp = add("synth-data", "generate a synthetic corpus")
    sp.add_argument("--writers", type=int)
    sp.add_argument("--words", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--jitter", type=float)
    sp.add_argument("--word-offset", type=int, dest="word_offset")
    sp.add_argument("--out", required=True)

    sp = add("segment", "fill end-of-character labels with the alignment network")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--checkpoint")
    sp.add_argument("--train", action="store_true", help="fit a fresh segmenter on the input data")
    sp.add_argument("--save-checkpoint", dest="save_checkpoint")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--hidden", type=int)
    sp.add_argument("--layers", type=int)
    sp.add_argument("--seed", type=int)

    sp = add("train", "train the style model")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True, help="output directory (checkpoint + log)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--latent", type=int)
    sp.add_argument("--mixtures", type=int)
    sp.add_argument("--layers", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--batch", type=int)
    sp.add_argument("--log-every", type=int, dest="log_every")
    sp.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    sp.add_argument("--no-normalize", action="store_true")
    sp.add_argument("--ablate", help="comma-separated: Lf_enc,Lalpha,Lbeta,wct_rec")

    sp = add("generate", "synthesize strokes for new text from reference samples")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--refs", required=True, help="labelled records of the reference writer")
    sp.add_argument("--text", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--temperature", type=float)
    sp.add_argument("--max-steps", type=int, dest="max_steps")
    sp.add_argument("--out", required=True, help="output directory (record + svg)")

    sp = add("interp", "interpolate styles at the writer, style-vector, or character level")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--refs", required=True, help="2 labelled records (w/wct) or 1 (C level)")
    sp.add_argument("--level", required=True, choices=["w", "wct", "C"])
    sp.add_argument("--gamma", type=float, required=True)
    sp.add_argument("--text", help="target text (w level); defaults to the first ref's text")
    sp.add_argument("--corner-texts", dest="corner_texts", help="4 comma-separated strings (C level)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)

    sp = add("newchar", "estimate a character matrix from (writer, style) vector pairs")
    sp.add_argument("--pairs", required=True, help="JSONL: {writer_vec: [...], writer_char_vec: [...]}")
    sp.add_argument("--mode", choices=["direct_lsq", "latent_lbfgsb"])
    sp.add_argument("--checkpoint", help="required for latent_lbfgsb")
    sp.add_argument("--out", required=True)

    sp = add("identify", "nearest-codebook writer identification")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--codebook", required=True, help="labelled enrollment records")
    sp.add_argument("--queries", required=True, help="labelled query records, grouped by writer_id")
    sp.add_argument("--out", required=True)

    sp = add("audit", "rank-check character matrices over the alphabet")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--max-len", type=int, dest="max_len")
    sp.add_argument("--sample", type=int, help="samples per length beyond 2")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)

    sp = add("render", "render records to SVG files")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--color-by-char", action="store_true", dest="color_by_char")
    sp.add_argument("--width", type=int)
    sp.add_argument("--height", type=int)
    sp.add_argument("--baseline", type=float)

    return p


def cmd_ingest(args) -> int:
    cfg = _merge(args, {"no_reorder": False})
    records = [json.loads(line) for line in Path(args.input).read_text(encoding="utf-8").splitlines() if line.strip()]
    samples = ingest_absolute(records, reorder=not cfg["no_reorder"])
    save_dataset(args.out, samples)
    print(f"ingested {len(samples)} samples -> {args.out}")
    return 0


def cmd_synth_data(args) -> int:
    cfg = _merge(args, {"writers": 8, "words": 40, "seed": 0, "jitter": 0.6, "word_offset": 0})
    words = DEFAULT_WORDS[cfg["word_offset"] : cfg["word_offset"] + cfg["words"]]
    if len(words) < cfg["words"]:
        raise RuntimeError(f"word list exhausted: asked for {cfg['words']} at offset {cfg['word_offset']}")
    styles = make_styles(cfg["writers"], rng_seed=cfg["seed"], jitter_amp=cfg["jitter"])
    corpus = synth_corpus(styles, words, rng_seed=cfg["seed"])
    save_dataset(args.out, corpus)
    print(f"wrote {len(corpus)} samples ({cfg['writers']} writers x {len(words)} words) -> {args.out}")
    return 0


def cmd_segment(args) -> int:
    cfg = _merge(args, {"steps": 400, "hidden": 64, "layers": 2, "seed": 0})
    samples = load_dataset(args.data)
    if not samples:
        raise RuntimeError(f"no samples in {args.data}")
    chars = sorted({c for s in samples for c in s.text})
    alphabet = Alphabet("".join(chars))
    if args.train or not args.checkpoint:
        seg, log = train_segmenter(
            samples, alphabet, hidden=cfg["hidden"], layers=cfg["layers"], steps=cfg["steps"], seed=cfg["seed"]
        )
        print(f"trained segmenter: loss {log[0]['loss']:.2f} -> {log[-1]['loss']:.2f}")
        if args.save_checkpoint:
            seg.save(args.save_checkpoint)
    else:
        seg = Segmenter.load(args.checkpoint)
    labelled = segment_dataset(samples, seg)
    save_dataset(args.out, labelled)
    print(f"labelled {len(labelled)} samples -> {args.out}")
    return 0


def cmd_train(args) -> int:
    defaults = {
        "seed": 0,
        "steps": 2000,
        "latent": 32,
        "mixtures": 5,
        "layers": 3,
        "lr": 1e-3,
        "batch": 5,
        "log_every": 10,
        "checkpoint_every": 500,
        "no_normalize": False,
        "ablate": "",
    }
    cfg = _merge(args, defaults)
    samples = _load_labelled(args.data)
    chars = {c for s in samples for c in s.text}
    alphabet = synthetic_alphabet() if chars <= set(template_characters()) else default_alphabet()
    ablations = frozenset(x for x in cfg["ablate"].split(",") if x)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tc = TrainConfig(
        latent_dim=cfg["latent"],
        mixtures=cfg["mixtures"],
        lstm_layers=cfg["layers"],
        learning_rate=cfg["lr"],
        batch_sentences=cfg["batch"],
        steps=cfg["steps"],
        seed=cfg["seed"],
        checkpoint_every=cfg["checkpoint_every"],
        log_every=cfg["log_every"],
        normalize=not cfg["no_normalize"],
        alphabet=alphabet,
        ablations=ablations,
    )
    result = train(samples, tc, log_path=out_dir / "train_log.jsonl", checkpoint_path=out_dir / "model.ckpt")
    n_params = result.model.parameter_count()
    print(f"model parameters: {n_params}")
    print(f"final loss: {result.final_loss:.3f} (step {result.log[-1]['step']})")
    print(f"checkpoint: {out_dir / 'model.ckpt'}")
    return 0


def cmd_generate(args) -> int:
    cfg = _merge(args, {"seed": 0, "temperature": 1.0, "max_steps": 400})
    model = StyleModel.load(args.checkpoint)
    refs = _load_labelled(args.refs)
    db = build_database(refs, model)
    plan = sample_wcts(db, args.text, model)
    rng = np.random.default_rng(np.random.SeedSequence([17, cfg["seed"]]))
    result = decode_strokes(
        model,
        plan.wcts,
        rng,
        max_steps=cfg["max_steps"],
        temperature=cfg["temperature"],
        text=args.text,
        writer_id=refs[0].writer_id,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "generated.jsonl").write_text(sample_to_record(result.sequence) + "\n", encoding="utf-8")
    (out_dir / "generated.svg").write_text(render_svg(result.sequence), encoding="utf-8")
    cover = ", ".join(f"{s.key}({s.source})" for s in plan.segments)
    print(f"cover: {cover}")
    print(f"wrote {result.steps} points -> {out_dir}")
    if result.truncated:
        print("warning: output truncated before the final character", file=sys.stderr)
        return 2
    return 0


def cmd_interp(args) -> int:
    cfg = _merge(args, {"seed": 0})
    model = StyleModel.load(args.checkpoint)
    refs = _load_labelled(args.refs)
    rng = np.random.default_rng(np.random.SeedSequence([19, cfg["seed"]]))
    gamma = args.gamma
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    from .applications import writer_vec_of_sample

    if args.level in ("w", "wct") and len(refs) < 2:
        raise RuntimeError(f"--level {args.level} needs two reference samples")

    if args.level == "w":
        text = args.text or refs[0].text
        wa = writer_vec_of_sample(model, refs[0])
        wb = writer_vec_of_sample(model, refs[1])
        mixed = interpolate_writer(wa, wb, gamma)
        from . import tensor as T

        with T.no_grad():
            mats = model.char_matrices(text)
            wcts = [m.mat.data @ mixed for m in mats]
    elif args.level == "wct":
        if refs[0].text != refs[1].text:
            raise RuntimeError("wct-level interpolation needs two samples of the same text")
        text = refs[0].text
        from . import tensor as T

        with T.no_grad():
            _, sa = model.encode_stacked(refs[0])
            _, sb = model.encode_stacked(refs[1])
        wcts = [gamma * sa.data[t] + (1.0 - gamma) * sb.data[t] for t in range(len(text))]
    else:  # C level
        if not args.corner_texts:
            raise RuntimeError("--level C needs --corner-texts a,b,c,d")
        corners_text = args.corner_texts.split(",")
        if len(corners_text) != 4:
            raise RuntimeError("--corner-texts must list exactly four strings")
        from . import tensor as T

        with T.no_grad():
            corners = [model.char_matrices(t)[-1].mat.data for t in corners_text]
        r = [(1 - gamma) * (1 - gamma), gamma * (1 - gamma), (1 - gamma) * gamma, gamma * gamma]
        blended = interpolate_char_bilinear(corners, r)
        w = writer_vec_of_sample(model, refs[0])
        wcts = [blended @ w]
        text = corners_text[0]

    result = decode_strokes(model, wcts, rng, max_steps=400, text=text, writer_id="interp")
    (out_dir / "interp.jsonl").write_text(sample_to_record(result.sequence) + "\n", encoding="utf-8")
    (out_dir / "interp.svg").write_text(render_svg(result.sequence), encoding="utf-8")
    print(f"interpolated at level {args.level} with gamma {gamma} -> {out_dir}")
    return 2 if result.truncated else 0


def cmd_newchar(args) -> int:
    cfg = _merge(args, {"mode": "direct_lsq"})
    pairs = []
    for line in Path(args.pairs).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        pairs.append((np.asarray(obj["writer_vec"]), np.asarray(obj["writer_char_vec"])))
    model = StyleModel.load(args.checkpoint) if args.checkpoint else None
    result = estimate_new_character(pairs, mode=cfg["mode"], model=model)
    report = {
        "mode": result.mode,
        "residual": result.residual,
        "converged": result.converged,
        "n_iter": result.n_iter,
        "matrix": result.matrix.tolist(),
    }
    Path(args.out).write_text(json.dumps(report) + "\n", encoding="utf-8")
    print(f"estimated {result.matrix.shape} matrix, residual {result.residual:.3e} -> {args.out}")
    return 0


def cmd_identify(args) -> int:
    _merge(args, {})
    model = StyleModel.load(args.checkpoint)
    codebook = build_codebook(model, _group_by_writer(_load_labelled(args.codebook)))
    grouped = _group_by_writer(_load_labelled(args.queries))
    labels = sorted(grouped)
    result = identify_writer(codebook, [grouped[w] for w in labels], model, labels=labels)
    with open(args.out, "w", encoding="utf-8") as fh:
        for label, pred in zip(labels, result.predictions):
            fh.write(json.dumps({"writer_id": label, "predicted": pred, "correct": label == pred}) + "\n")
        fh.write(json.dumps({"accuracy": result.accuracy, "writers": len(codebook)}) + "\n")
    print(f"accuracy {result.accuracy:.4f} over {len(labels)} query groups -> {args.out}")
    return 0


def cmd_audit(args) -> int:
    cfg = _merge(args, {"max_len": 2, "sample": 200, "seed": 0})
    model = StyleModel.load(args.checkpoint)
    report = audit_invertibility(model, max_len=cfg["max_len"], sample_per_length=cfg["sample"], rng_seed=cfg["seed"])
    with open(args.out, "w", encoding="utf-8") as fh:
        for r in report.records:
            fh.write(
                json.dumps(
                    {"string": r.string, "sigma_ratio": r.sigma_ratio, "cond": r.cond, "full_rank": r.full_rank}
                )
                + "\n"
            )
        fh.write(json.dumps(report.summary()) + "\n")
    s = report.summary()
    print(f"checked {s['checked']} strings: {s['full_rank']} full rank, {s['singular']} singular -> {args.out}")
    return 0


def cmd_render(args) -> int:
    cfg = _merge(args, {"color_by_char": False, "width": 750, "height": 120, "baseline": 80.0})
    samples = load_dataset(args.data)
    spec = RenderSpec(
        width=cfg["width"], height=cfg["height"], baseline=cfg["baseline"], color_per_char=cfg["color_by_char"]
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, s in enumerate(samples):
        (out_dir / f"sample_{i:04d}.svg").write_text(render_svg(s, spec), encoding="utf-8")
    print(f"rendered {len(samples)} samples -> {out_dir}")
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "synth-data": cmd_synth_data,
    "segment": cmd_segment,
    "train": cmd_train,
    "generate": cmd_generate,
    "interp": cmd_interp,
    "newchar": cmd_newchar,
    "identify": cmd_identify,
    "audit": cmd_audit,
    "render": cmd_render,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_usage(sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help path
        code = exc.code or 0
        return int(code) if isinstance(code, int) else 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint():
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entrypoint()
