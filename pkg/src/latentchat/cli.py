"""Command-line entry points: corpus generation, training, evaluation,
batch generation, a terminal chat loop, and the HTTP service."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import Config, load_config
from .corpus import generate_corpus, load_personachat, write_corpus
from .evalharness import evaluate_model, format_report, report_tsv
from .model import generate_candidates
from .corpus import Turn
from .training import load_model, save_model, train


def _parse_args(argv):
    parser = argparse.ArgumentParser(
        prog="latentchat",
        description="Dual-latent personalized dialogue generator",
    )
    parser.add_argument("command",
                        choices=["corpus", "train", "eval", "generate", "chat", "serve"])
    parser.add_argument("--config", help="plain-text key = value config file")
    parser.add_argument("checkpoints", nargs="*",
                        help="checkpoint paths (eval accepts several)")
    args, overrides = parser.parse_known_args(argv)

    cfg = load_config(args.config) if args.config else Config()
    for ov in overrides:
        if not ov.startswith("--") or "=" not in ov:
            parser.error(f"unrecognized argument {ov!r} (use --key=value)")
        key, _, val = ov[2:].partition("=")
        if not hasattr(cfg, key):
            parser.error(f"unknown config key {key!r}")
        default = getattr(Config(), key)
        setattr(cfg, key, type(default)(val))
    return args, cfg


def _load_test_examples(cfg):
    path = os.path.join(cfg.corpus_dir, "test.txt")
    if not os.path.exists(path):
        raise FileNotFoundError(f"test corpus not found at {path}; run 'corpus' first")
    return load_personachat(path)


def cmd_corpus(cfg: Config):
    os.makedirs(cfg.corpus_dir, exist_ok=True)
    corpus = generate_corpus(cfg.n_personas, cfg.n_dialogues, cfg.seed)
    write_corpus(corpus,
                 os.path.join(cfg.corpus_dir, "train.txt"),
                 os.path.join(cfg.corpus_dir, "test.txt"),
                 os.path.join(cfg.corpus_dir, "manifest.json"))
    print(f"wrote {len(corpus.train)} train / {len(corpus.test)} test dialogues "
          f"to {cfg.corpus_dir}")
    return 0


def cmd_train(cfg: Config):
    corpus = generate_corpus(cfg.n_personas, cfg.n_dialogues, cfg.seed)
    os.makedirs(os.path.dirname(cfg.checkpoint) or ".", exist_ok=True)
    os.makedirs(os.path.dirname(cfg.log_path) or ".", exist_ok=True)

    def progress(epoch, bd, test_recon):
        print(f"epoch {epoch}: total {bd.total:.4f} recon {bd.recon_nll:.4f} "
              f"test_recon {test_recon:.4f}")

    with open(cfg.log_path, "w", encoding="utf-8") as log_file:
        result = train(corpus, cfg, log_file=log_file,
                       checkpoint_path=cfg.checkpoint, progress=progress)
    result.vocab.save(cfg.vocab_path)
    print(f"checkpoint: {cfg.checkpoint}")
    return 0


def cmd_eval(cfg: Config, checkpoints):
    paths = checkpoints or [cfg.checkpoint]
    examples = _load_test_examples(cfg)
    if not examples:
        raise ValueError("eval: empty test set")
    rows = []
    for path in paths:
        model, nets, head, mcfg, vocab = load_model(path)
        res = evaluate_model(model, nets, head, mcfg, vocab, examples, seed=cfg.seed)
        rows.extend(res.rows)
    text_table = format_report(rows)
    print(text_table, end="")
    os.makedirs(os.path.dirname(cfg.report_path) or ".", exist_ok=True)
    with open(cfg.report_path + ".txt", "w", encoding="utf-8") as f:
        f.write(text_table)
    with open(cfg.report_path + ".tsv", "w", encoding="utf-8") as f:
        f.write(report_tsv(rows))
    print(f"report written to {cfg.report_path}.txt / .tsv")
    return 0


def cmd_generate(cfg: Config, checkpoints):
    path = checkpoints[0] if checkpoints else cfg.checkpoint
    model, nets, head, mcfg, vocab = load_model(path)
    examples = _load_test_examples(cfg)
    out_path = cfg.report_path + ".responses.tsv"
    os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as f:
        f.write("context_id\tcandidate\tselected\tmtld\tmattr\tcombined\ttext\n")
        for idx, ex in enumerate(examples):
            rng = np.random.default_rng([cfg.seed, idx])
            cs = generate_candidates(model, nets, vocab, ex.context, mcfg, rng,
                                     n=cfg.n_candidates)
            for ci, c in enumerate(cs.candidates):
                flag = "1" if ci == cs.selected_index else "0"
                f.write(f"{idx}\t{ci}\t{flag}\t{c.mtld:.3f}\t{c.mattr:.3f}"
                        f"\t{c.combined:.3f}\t{c.text}\n")
    print(f"responses written to {out_path}")
    return 0


def cmd_chat(cfg: Config, checkpoints):
    path = checkpoints[0] if checkpoints else cfg.checkpoint
    model, nets, head, mcfg, vocab = load_model(path)
    turns = []
    print("latentchat REPL. Empty line or Ctrl-D exits.")
    turn_idx = 0
    while True:
        try:
            line = input("you> ").strip()
        except EOFError:
            break
        if not line:
            break
        turns.append(Turn("user", line))
        rng = np.random.default_rng([cfg.seed, turn_idx])
        cs = generate_candidates(model, nets, vocab, turns, mcfg, rng,
                                 n=cfg.n_candidates)
        for ci, c in enumerate(cs.candidates):
            marker = "*" if ci == cs.selected_index else " "
            print(f" {marker} [{ci}] mtld={c.mtld:.3f} mattr={c.mattr:.3f} "
                  f"combined={c.combined:.3f}  {c.text}")
        reply = cs.selected.text
        print(f"bot> {reply}")
        turns.append(Turn("agent", reply))
        turn_idx += 1
    return 0


def cmd_serve(cfg: Config, checkpoints):
    import uvicorn

    from .server import build_app

    path = checkpoints[0] if checkpoints else cfg.checkpoint
    app = build_app(path, cfg)
    uvicorn.run(app, host=cfg.host, port=cfg.port)
    return 0


def main(argv=None):
    args, cfg = _parse_args(sys.argv[1:] if argv is None else argv)
    try:
        if args.command == "corpus":
            return cmd_corpus(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoints)
        if args.command == "generate":
            return cmd_generate(cfg, args.checkpoints)
        if args.command == "chat":
            return cmd_chat(cfg, args.checkpoints)
        if args.command == "serve":
            return cmd_serve(cfg, args.checkpoints)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
