"""Command-line entry points.

Subcommands: train-embeddings, train, generate, serve, export-heatmap,
eval. Exit code 0 on success; errors print to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import SongsmithError


def _add_corpus_arg(p):
    p.add_argument("--corpus", required=True, help="JSONL corpus path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="songsmith",
                                     description="lyrics-conditioned melody studio")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-embeddings",
                       help="train syllable/word embeddings and export CSVs")
    _add_corpus_arg(p)
    p.add_argument("--csv-dir", help="directory for syllable.csv / word.csv")
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--window", type=int, default=2)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="run adversarial training, write a checkpoint")
    _add_corpus_arg(p)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--metrics", help="CSV metrics log path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--lr-g", type=float, default=1e-3)
    p.add_argument("--lr-d", type=float, default=1e-3)
    p.add_argument("--lr-q", type=float, default=1e-3)
    p.add_argument("--lambda-mi", type=float, default=0.5)
    p.add_argument("--tau-start", type=float, default=1.0)
    p.add_argument("--tau-end", type=float, default=0.2)
    p.add_argument("--d-steps", type=int, default=1)
    p.add_argument("--checkpoint-interval", type=int, default=200)
    p.add_argument("--pretrain-steps", type=int, default=0)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--layers", type=int, default=2)

    p = sub.add_parser("generate", help="generate a melody and write a MIDI file")
    p.add_argument("--lyrics", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output .mid path")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--json", dest="json_out", help="also write the full result JSON here")

    p = sub.add_parser("serve", help="serve the HTTP API (and UI when built)")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--static", help="directory of built UI assets to mount at /")

    p = sub.add_parser("export-heatmap", help="syllable similarity heatmap (CSV + PGM)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--syllables", required=True,
                   help="comma-separated syllables, e.g. 'twin,kle,star'")
    p.add_argument("--source", choices=["embedding", "interpretable"],
                   default="embedding")
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-pgm")
    p.add_argument("--probe-file", help="JSONL corpus whose lyrics serve as probes")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval", help="evaluate a checkpoint against a corpus")
    p.add_argument("--checkpoint", required=True)
    _add_corpus_arg(p)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)

    return parser


def cmd_train_embeddings(args) -> int:
    from .lyrics import SkipgramConfig, embedding_csv, train_skipgram
    from .training import load_corpus

    corpus = load_corpus(args.corpus)
    seqs = [e.seq for e in corpus.entries]
    for level, seed in (("syllable", args.seed * 2 + 1), ("word", args.seed * 2 + 2)):
        cfg = SkipgramConfig(dim=args.dim, window=args.window,
                             negatives=args.negatives, epochs=args.epochs,
                             lr=args.lr, seed=seed)
        table = train_skipgram(seqs, level, cfg)
        print(f"trained {level} embeddings: {len(table.vocab)} tokens, dim {table.dim}")
        if args.csv_dir:
            out = Path(args.csv_dir)
            out.mkdir(parents=True, exist_ok=True)
            path = out / f"{level}.csv"
            path.write_text(embedding_csv(table), encoding="utf-8")
            print(f"wrote {path}")
    return 0


def cmd_train(args) -> int:
    from .training import TrainConfig, load_corpus, train

    corpus = load_corpus(args.corpus)
    config = TrainConfig(seed=args.seed, batch_size=args.batch_size, steps=args.steps,
                         lr_g=args.lr_g, lr_d=args.lr_d, lr_q=args.lr_q,
                         lambda_mi=args.lambda_mi, tau_start=args.tau_start,
                         tau_end=args.tau_end, d_steps_per_g_step=args.d_steps,
                         checkpoint_interval=args.checkpoint_interval,
                         pretrain_steps=args.pretrain_steps,
                         hidden_size=args.hidden, lstm_layers=args.layers)
    train(corpus, config, metrics_path=args.metrics, checkpoint_path=args.out)
    print(f"wrote checkpoint {args.out}")
    return 0


def cmd_generate(args) -> int:
    from .service import generate_melody
    from .score import write_midi
    from .training import load_checkpoint

    ckpt = load_checkpoint(args.checkpoint)
    result = generate_melody(args.lyrics, ckpt, seed=args.seed, k=args.k)
    Path(args.out).write_bytes(write_midi(result.score))
    print(f"wrote {args.out} ({len(result.score.notes)} notes)")
    if args.json_out:
        Path(args.json_out).write_text(result.to_json(), encoding="utf-8")
        print(f"wrote {args.json_out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    from .training import load_checkpoint

    static = args.static
    if static is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        static = str(bundled) if bundled.is_dir() else None
    app = create_app(load_checkpoint(args.checkpoint), static_dir=static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_export_heatmap(args) -> int:
    from .mi import heatmap_csv, heatmap_pgm, syllable_heatmap
    from .training import load_checkpoint, load_corpus

    ckpt = load_checkpoint(args.checkpoint)
    syllables = [s.strip() for s in args.syllables.split(",") if s.strip()]
    probe_texts = None
    if args.probe_file:
        corpus = load_corpus(args.probe_file, ckpt.attr_vocab)
        probe_texts = [" ".join(e.seq.words) for e in corpus.entries]
    sim = syllable_heatmap(ckpt, syllables, source=args.source,
                           probe_texts=probe_texts, seed=args.seed)
    Path(args.out_csv).write_text(heatmap_csv(sim), encoding="utf-8")
    print(f"wrote {args.out_csv}")
    if args.out_pgm:
        Path(args.out_pgm).write_bytes(heatmap_pgm(sim))
        print(f"wrote {args.out_pgm}")
    return 0


def cmd_eval(args) -> int:
    from .training import evaluate, load_checkpoint, load_corpus

    ckpt = load_checkpoint(args.checkpoint)
    corpus = load_corpus(args.corpus, ckpt.attr_vocab)
    metrics = evaluate(ckpt, corpus, seed=args.seed, samples=args.samples)
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return 0


COMMANDS = {
    "train-embeddings": cmd_train_embeddings,
    "train": cmd_train,
    "generate": cmd_generate,
    "serve": cmd_serve,
    "export-heatmap": cmd_export_heatmap,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except SongsmithError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
