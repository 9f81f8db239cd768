"""Command-line entry point: gen-data, train, translate, evaluate."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import shutil
import sys
from pathlib import Path

from .data import (
    TASKS,
    Vocab,
    build_vocab,
    read_lines,
    read_parallel,
    split_pairs,
    gen_synthetic,
    write_corpus,
    write_lines,
)
from .decoding import beam_search, greedy
from .evaluation import evaluate, format_keyvalue, format_text
from .model import ModelConfig, Seq2Seq
from .training import TrainConfig, restore_best, train

log = logging.getLogger("acanmt")


class CliError(Exception):
    """A user-facing failure; the message is printed on one line."""


# -- run configuration --------------------------------------------------------

_MODEL_KEYS = {f.name: f for f in dataclasses.fields(ModelConfig)}
_TRAIN_KEYS = {f.name: f for f in dataclasses.fields(TrainConfig)}
_DERIVED = {"src_vocab", "tgt_vocab"}
_PATH_KEYS = {"data_dir": None, "out_dir": None, "max_vocab": 50000}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _coerce(key: str, text: str):
    if key in ("data_dir", "out_dir"):
        return text
    if key == "max_vocab":
        return int(text)
    field = _MODEL_KEYS.get(key) or _TRAIN_KEYS.get(key)
    kind = str(field.type)
    if text.strip().lower() in ("none", "") and "None" in kind:
        return None
    if "bool" in kind:
        return _parse_bool(text)
    if "int" in kind:
        return int(text)
    if "float" in kind:
        return float(text)
    return text


def load_run_config(path: str | None, overrides: dict[str, str]) -> dict:
    """Merge defaults < config file < flag overrides; unknown keys are errors."""
    allowed = (set(_MODEL_KEYS) - _DERIVED) | set(_TRAIN_KEYS) | set(_PATH_KEYS)
    raw: dict[str, str] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise CliError(f"config file not found: {path}")
        for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            raw[key.replace("-", "_")] = value
    raw.update({k: v for k, v in overrides.items() if v is not None})
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise CliError(f"unknown config key(s): {', '.join(unknown)}")
    cfg: dict = dict(_PATH_KEYS)
    for key, value in raw.items():
        try:
            cfg[key] = _coerce(key, value)
        except ValueError as exc:
            raise CliError(f"bad value for {key}: {exc}") from None
    return cfg


# -- subcommands --------------------------------------------------------------


def cmd_gen_data(args) -> int:
    pairs = gen_synthetic(args.task, args.count, args.vocab_size, (args.min_len, args.max_len), seed=args.seed)
    write_corpus(args.out, split_pairs(pairs))
    print(f"wrote {len(pairs)} {args.task} pairs to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(
        args.config,
        {
            "seed": args.seed,
            "use_aca": args.use_aca,
            "data_dir": args.data,
            "out_dir": args.out,
            "epochs": args.epochs,
            "max_decode_len": args.max_len,
        },
    )
    if not cfg.get("data_dir") or not cfg.get("out_dir"):
        raise CliError("train needs data_dir and out_dir (config keys or --data/--out)")
    data = Path(cfg["data_dir"])
    for split in ("train", "valid"):
        for side in ("src", "tgt"):
            if not (data / f"{split}.{side}").is_file():
                raise CliError(f"missing corpus file {data / f'{split}.{side}'}")
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)

    train_text = read_parallel(data / "train.src", data / "train.tgt")
    valid_text = read_parallel(data / "valid.src", data / "valid.tgt")
    vs = build_vocab((s for s, _ in train_text), cfg["max_vocab"])
    vt = build_vocab((t for _, t in train_text), cfg["max_vocab"])
    vs.save(out / "src.vocab")
    vt.save(out / "tgt.vocab")

    def ids(pairs):
        return [(vs.encode(s.split()), vt.encode(t.split())) for s, t in pairs]

    model_kw = {k: v for k, v in cfg.items() if k in _MODEL_KEYS}
    train_kw = {k: v for k, v in cfg.items() if k in _TRAIN_KEYS}
    model_cfg = ModelConfig(src_vocab=len(vs), tgt_vocab=len(vt), **model_kw)
    result = train(model_cfg, TrainConfig(**train_kw), ids(train_text), ids(valid_text), out_dir=out, tgt_vocab=vt)
    if result.best_checkpoint is not None:
        tmp = out / "model.best.ckpt.tmp"
        shutil.copyfile(result.best_checkpoint, tmp)
        tmp.replace(out / "model.best.ckpt")
    restore_best(result)
    print(f"best valid BLEU {result.best_bleu:.2f} ({result.best_checkpoint})")
    return 0


def _load_for_translate(ckpt: Path) -> tuple[Seq2Seq, Vocab, Vocab]:
    if not ckpt.is_file():
        raise CliError(f"checkpoint not found: {ckpt}")
    try:
        model = Seq2Seq.load(ckpt)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    paths = [ckpt.parent / "src.vocab", ckpt.parent / "tgt.vocab"]
    for p in paths:
        if not p.is_file():
            raise CliError(f"vocabulary file {p} not found next to the checkpoint")
    vs, vt = Vocab.load(paths[0]), Vocab.load(paths[1])
    if (len(vs), len(vt)) != (model.cfg.src_vocab, model.cfg.tgt_vocab):
        raise CliError(
            f"checkpoint expects vocabularies of {model.cfg.src_vocab}/{model.cfg.tgt_vocab}, "
            f"files hold {len(vs)}/{len(vt)}"
        )
    return model, vs, vt


def cmd_translate(args) -> int:
    model, vs, vt = _load_for_translate(Path(args.ckpt))
    if not Path(args.src).is_file():
        raise CliError(f"source file not found: {args.src}")
    lines = []
    for line in read_lines(args.src):
        ids = vs.encode(line.split())
        if not ids:
            lines.append("")
            continue
        out = greedy(ids, model, args.max_len) if args.greedy else beam_search(ids, model, args.beam, args.max_len)
        lines.append(" ".join(vt.decode(out)))
    if args.out:
        write_lines(args.out, lines)
    else:
        sys.stdout.write("".join(line + "\n" for line in lines))
    return 0


def cmd_evaluate(args) -> int:
    for p in (args.hyp, args.ref):
        if not Path(p).is_file():
            raise CliError(f"file not found: {p}")
    hyps, refs = read_lines(args.hyp), read_lines(args.ref)
    if len(hyps) != len(refs):
        raise CliError(f"{args.hyp} has {len(hyps)} lines but {args.ref} has {len(refs)}")
    metrics = evaluate(hyps, refs)
    sys.stdout.write(format_text(metrics))
    if args.out:
        out = Path(args.out)
        tmp = out.with_name(out.name + ".tmp")
        tmp.write_text(format_keyvalue(metrics), encoding="utf-8")
        tmp.replace(out)
    return 0


# -- parser -------------------------------------------------------------------


def _bool_flag(text: str) -> str:
    _parse_bool(text)
    return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acanmt", description="Attention seq2seq with adaptive attention control.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic parallel corpus split into train/valid/test")
    g.add_argument("--task", choices=TASKS, required=True, help="synthetic task")
    g.add_argument("--count", type=int, default=10000, help="number of pairs before splitting (default 10000)")
    g.add_argument("--vocab-size", type=int, default=20, help="distinct content tokens (default 20)")
    g.add_argument("--min-len", type=int, default=5, help="shortest source length (default 5)")
    g.add_argument("--max-len", type=int, default=10, help="longest source length (default 10)")
    g.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    g.add_argument("--out", required=True, help="output directory for {train,valid,test}.{src,tgt}")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model; writes vocabularies, checkpoints and metrics.tsv")
    t.add_argument("--config", help="key = value file (model, training and path keys)")
    t.add_argument("--seed", help="random seed, overrides the config")
    t.add_argument("--use-aca", type=_bool_flag, metavar="true|false", help="enable adaptive attention control")
    t.add_argument("--data", help="directory with train/valid .src/.tgt files (config key data_dir)")
    t.add_argument("--out", help="output directory (config key out_dir)")
    t.add_argument("--epochs", help="number of epochs")
    t.add_argument("--max-len", help="decoding length limit used for validation")
    t.set_defaults(func=cmd_train)

    tr = sub.add_parser("translate", help="decode a source file with a trained checkpoint")
    tr.add_argument("--ckpt", required=True, help="checkpoint; src.vocab and tgt.vocab must sit beside it")
    tr.add_argument("--src", required=True, help="tokenised source file, one sentence per line")
    tr.add_argument("--out", help="output file (default stdout)")
    tr.add_argument("--beam", type=int, default=10, help="beam width (default 10)")
    tr.add_argument("--greedy", action="store_true", help="greedy decoding instead of beam search")
    tr.add_argument("--max-len", type=int, help="decoding length limit (default 2 x source length + 10)")
    tr.set_defaults(func=cmd_translate)

    e = sub.add_parser("evaluate", help="BLEU, duplicate n-gram rates and length-bucketed BLEU")
    e.add_argument("--hyp", required=True, help="hypothesis file")
    e.add_argument("--ref", required=True, help="reference file")
    e.add_argument("--out", help="also write key=value metrics to this file")
    e.set_defaults(func=cmd_evaluate)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
