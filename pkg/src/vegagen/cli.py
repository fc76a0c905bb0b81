"""Command-line interface.

Subcommands: train, generate, evaluate, validate, attention, serve.
Exit codes: 0 success, 1 usage, 2 data error, 3 checkpoint error,
4 evaluation threshold missed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import datasets as bundled
from .corpus import CorpusError, Dataset, backward_transform, forward_transform, infer_schema
from .decoding import Hypothesis, beam_search, export_attention, greedy_decode
from .evaluator import EmptyConfiguration, evaluate, render_report, report_to_json
from .neural.model import model_forward
from .service import checkpoint_digest, create_app
from .tokenizer import TooLong, build_vocab, decode as decode_ids, encode
from .trainer import (CorruptCheckpoint, NoTrainableData, TrainConfig,
                      default_conventions, load_checkpoint, save_checkpoint, train)
from .validator import validate_text

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CHECKPOINT = 3
EXIT_THRESHOLD = 4


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags by default; usage problems must exit 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="vegagen", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", metavar="command")

    t = sub.add_parser("train", help="train a model on a corpus of examples")
    t.add_argument("--corpus", help="directory of example JSON files")
    t.add_argument("--bundled", action="store_true", help="use the bundled mini-corpus")
    t.add_argument("--out", required=True, help="checkpoint file to write")
    t.add_argument("--steps", type=int, default=20000)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--dropout", type=float, default=0.5)
    t.add_argument("--d-cell", type=int, default=512)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--max-len", type=int, default=500)
    t.add_argument("--samples-per-example", type=int, default=50)
    t.add_argument("--eval-fraction", type=float, default=0.05,
                   help="held-out pair fraction for log perplexity (0 disables)")
    t.add_argument("--eval-every", type=int, default=100)
    t.add_argument("--checkpoint-every", type=int, default=0)
    t.add_argument("--log", help="JSONL training log path")

    g = sub.add_parser("generate", help="decode chart candidates for one record")
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--data", help="JSON file: array of records, or {\"data\": [...]}")
    g.add_argument("--dataset", help="bundled dataset name")
    g.add_argument("--beam", type=int, default=15)
    g.add_argument("--row", type=int, default=0)
    g.add_argument("--max-candidates", type=int)
    g.add_argument("--out", help="write candidates as JSON here")

    e = sub.add_parser("evaluate", help="score validity rates on held-out datasets")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--datasets", help="comma-separated bundled dataset names")
    e.add_argument("--all", action="store_true", help="use every bundled dataset")
    e.add_argument("--widths", default="5,10,15,20")
    e.add_argument("--rows", type=int, default=10, help="rows sampled per dataset")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--max-len", type=int, default=500)
    e.add_argument("--out", help="write the JSON report here")
    e.add_argument("--diagnostics", help="write per-candidate JSONL here")
    e.add_argument("--thresholds", help="JSON file with min_language_rate / "
                                        "min_visualization_rate / max_phantom_rate")

    v = sub.add_parser("validate", help="check one spec text against the grammar")
    v.add_argument("--spec", help="JSON file holding the spec")
    v.add_argument("--text", help="spec given inline as a JSON string")
    v.add_argument("--data", help="JSON data file; enables field checks")

    a = sub.add_parser("attention", help="export an attention matrix as TSV")
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--data", help="JSON file: array of records, or {\"data\": [...]}")
    a.add_argument("--dataset", help="bundled dataset name")
    a.add_argument("--row", type=int, default=0)
    a.add_argument("--target", help="teacher-force this target text instead of greedy")
    a.add_argument("--out", help="TSV path (default: standard output)")

    s = sub.add_parser("serve", help="run the HTTP service")
    s.add_argument("--checkpoint", help="checkpoint path (or set VEGAGEN_CHECKPOINT)")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    return p


def _read_json(path, what: str):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise DataError(f"cannot read {what} {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"{what} {path} is not valid JSON: {e}") from e


def _load_records(args) -> Dataset:
    if (args.data is None) == (args.dataset is None):
        raise UsageError("provide exactly one of --data or --dataset")
    if args.dataset is not None:
        try:
            return bundled.rdataset(args.dataset)
        except bundled.UnknownDataset:
            raise DataError(f"unknown bundled dataset {args.dataset!r}") from None
    obj = _read_json(args.data, "data file")
    records = obj.get("data") if isinstance(obj, dict) else obj
    if not isinstance(records, list) or not records:
        raise DataError(f"{args.data}: expected a non-empty JSON array of records")
    return Dataset(records=records, name=Path(args.data).stem)


def _transform_row(ds: Dataset, row: int, model, max_len: int):
    try:
        schema = infer_schema(ds)
    except CorpusError as e:
        raise DataError(str(e)) from e
    if not 0 <= row < len(ds.records):
        raise DataError(f"row {row} outside 0..{len(ds.records) - 1}")
    source, mapping = forward_transform(ds.records[row], schema)
    try:
        ids = encode(source, model.src_vocab, max_len)
    except TooLong as e:
        raise DataError(f"row normalizes past max_len={max_len}: {e}") from e
    return schema, source, mapping, ids


def _cmd_train(args) -> int:
    if (args.corpus is None) == (not args.bundled):
        raise UsageError("provide exactly one of --corpus or --bundled")
    corpus = bundled.bundled_corpus() if args.bundled else _load_corpus_dir(args.corpus)
    rng = np.random.default_rng(args.seed)
    from .corpus import generate_pairs

    pairs = generate_pairs(corpus, samples_per_example=args.samples_per_example,
                           max_len=args.max_len, rng=rng)
    if not pairs:
        raise DataError("corpus produced no training pairs")
    src_vocab = build_vocab([p.source for p in pairs])
    tgt_vocab = build_vocab([p.target for p in pairs])

    eval_pairs = None
    if args.eval_fraction > 0:
        order = rng.permutation(len(pairs))
        n_eval = min(max(1, int(len(pairs) * args.eval_fraction)), 512)
        eval_pairs = [pairs[i] for i in order[:n_eval]]
        pairs = [pairs[i] for i in order[n_eval:]]

    config = TrainConfig(steps=args.steps, learning_rate=args.lr,
                         batch_size=args.batch_size, dropout=args.dropout,
                         max_len=args.max_len, seed=args.seed,
                         checkpoint_every=args.checkpoint_every,
                         eval_every=args.eval_every, d_cell=args.d_cell)
    ckpt_dir = Path(args.out).parent if args.checkpoint_every else None
    try:
        params, history = train(pairs, (src_vocab, tgt_vocab), config,
                                eval_pairs=eval_pairs, checkpoint_dir=ckpt_dir,
                                log_path=args.log)
    except NoTrainableData as e:
        raise DataError(str(e)) from e
    save_checkpoint(params, (src_vocab, tgt_vocab), default_conventions(), args.out,
                    meta={"seed": args.seed, "steps": args.steps,
                          "pairs": len(pairs)})
    last = history.points[-1]
    print(f"trained {args.steps} steps; final batch NLL/token {last.train_nll:.4f}")
    if last.heldout_log_perplexity is not None:
        print(f"held-out log perplexity {last.heldout_log_perplexity:.4f}")
    print(f"checkpoint written to {args.out}")
    return EXIT_OK


def _load_corpus_dir(path):
    from .corpus import load_corpus_dir

    try:
        return load_corpus_dir(Path(path))
    except (CorpusError, OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot load corpus: {e}") from e


def _cmd_generate(args) -> int:
    if args.beam < 1:
        raise UsageError("--beam must be >= 1")
    model = load_checkpoint(args.checkpoint)
    ds = _load_records(args)
    max_len = model.params.hyper.max_len
    schema, source, mapping, ids = _transform_row(ds, args.row, model, max_len)

    hyps = beam_search(ids, model.params, k=args.beam, max_len=max_len,
                       record_alignment=False)
    out = []
    for hyp in hyps:
        restored = backward_transform(decode_ids(hyp.tokens, model.tgt_vocab), mapping)
        res = validate_text(restored, schema=schema)
        out.append({
            "spec_text": restored,
            "score": float(hyp.score),
            "language_valid": res.language_valid,
            "visualization_valid": res.visualization_valid,
            "phantom_fields": list(res.phantom_fields),
        })
    if args.max_candidates is not None:
        out = out[: args.max_candidates]

    for i, c in enumerate(out):
        lang = "lang+" if c["language_valid"] else "lang-"
        vis = "vis+" if c["visualization_valid"] else "vis-"
        ph = f" phantom={','.join(c['phantom_fields'])}" if c["phantom_fields"] else ""
        print(f"[{i}] score={c['score']:.4f} {lang} {vis}{ph}  {c['spec_text']}")
    if args.out:
        Path(args.out).write_text(json.dumps(out, indent=1), encoding="utf-8")
        print(f"wrote {len(out)} candidates to {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    model = load_checkpoint(args.checkpoint)
    if args.all:
        names = bundled.rdataset_names()
    elif args.datasets:
        names = [n.strip() for n in args.datasets.split(",") if n.strip()]
    else:
        raise UsageError("provide --datasets or --all")
    try:
        sets = [bundled.rdataset(n) for n in names]
    except bundled.UnknownDataset as e:
        raise DataError(f"unknown bundled dataset {e.args[0]!r}") from None
    try:
        widths = [int(w) for w in args.widths.split(",") if w.strip()]
    except ValueError:
        raise UsageError(f"--widths must be comma-separated integers, got {args.widths!r}") from None

    ckpt_id = checkpoint_digest(args.checkpoint)
    try:
        report = evaluate(model, sets, widths, per_dataset_rows=args.rows,
                          max_len=args.max_len, seed=args.seed, checkpoint_id=ckpt_id)
    except EmptyConfiguration as e:
        raise UsageError(str(e)) from e
    print(render_report(report, json_path=args.out), end="")
    if args.out:
        print(f"report written to {args.out}")
    if args.diagnostics:
        with open(args.diagnostics, "w", encoding="utf-8") as fh:
            for entry in report.diagnostics:
                fh.write(json.dumps(entry) + "\n")
        print(f"diagnostics written to {args.diagnostics}")

    if args.thresholds:
        limits = _read_json(args.thresholds, "thresholds file")
        failures = []
        for row in report.rows:
            if row.language_rate < limits.get("min_language_rate", 0.0):
                failures.append(f"k={row.beam_width} language {row.language_rate:.3f}")
            if row.visualization_rate < limits.get("min_visualization_rate", 0.0):
                failures.append(f"k={row.beam_width} visualization {row.visualization_rate:.3f}")
            if row.phantom_rate > limits.get("max_phantom_rate", 1.0):
                failures.append(f"k={row.beam_width} phantom {row.phantom_rate:.3f}")
        if failures:
            print("thresholds missed: " + "; ".join(failures), file=sys.stderr)
            return EXIT_THRESHOLD
    return EXIT_OK


def _cmd_validate(args) -> int:
    if (args.spec is None) == (args.text is None):
        raise UsageError("provide exactly one of --spec or --text")
    text = args.text if args.text is not None else None
    if text is None:
        try:
            text = Path(args.spec).read_text(encoding="utf-8")
        except OSError as e:
            raise DataError(f"cannot read {args.spec}: {e}") from e
    schema = None
    if args.data:
        obj = _read_json(args.data, "data file")
        records = obj.get("data") if isinstance(obj, dict) else obj
        if not isinstance(records, list) or not records:
            raise DataError(f"{args.data}: expected a non-empty JSON array of records")
        try:
            schema = infer_schema(Dataset(records=records, name=Path(args.data).stem))
        except CorpusError as e:
            raise DataError(str(e)) from e
    res = validate_text(text, schema=schema)
    print(json.dumps(res.to_dict(), indent=1))
    return EXIT_OK


def _cmd_attention(args) -> int:
    model = load_checkpoint(args.checkpoint)
    ds = _load_records(args)
    max_len = model.params.hyper.max_len
    schema, source, mapping, ids = _transform_row(ds, args.row, model, max_len)

    if args.target is not None:
        try:
            tgt_ids = encode(args.target, model.tgt_vocab, max_len)
        except TooLong as e:
            raise DataError(str(e)) from e
        total, steps, alignment = model_forward(ids, tgt_ids, model.params)
        hyp = Hypothesis(tokens=tuple(tgt_ids), cum_logp=-total,
                         score=-total / len(tgt_ids), alignment=alignment,
                         finished=True)
        target_text = args.target
    else:
        hyp = greedy_decode(ids, model.params, max_len)
        target_text = decode_ids(hyp.tokens, model.tgt_vocab)

    labeled = export_attention(hyp, source, target_text)
    tsv = labeled.to_tsv()
    if args.out:
        Path(args.out).write_text(tsv, encoding="utf-8")
        print(f"attention matrix ({len(labeled.row_labels)}x{len(labeled.col_labels)}) "
              f"written to {args.out}")
    else:
        print(tsv, end="")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    app = create_app(args.checkpoint)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


_COMMANDS = {
    "train": _cmd_train,
    "generate": _cmd_generate,
    "evaluate": _cmd_evaluate,
    "validate": _cmd_validate,
    "attention": _cmd_attention,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return EXIT_USAGE
        return _COMMANDS[args.command](args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (CorruptCheckpoint, FileNotFoundError) as e:
        print(f"checkpoint error: {e}", file=sys.stderr)
        return EXIT_CHECKPOINT


if __name__ == "__main__":
    sys.exit(main())
