"""Command-line entry point: ``nrplm {preprocess,train,eval,ri-stats,sweep,synth}``.

Diagnostics go to stderr; results are written to files under ``output_dir``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from importlib import resources
from pathlib import Path

from . import checkpoint
from .config import ConfigError, ExperimentConfig, parse_flat
from .corpus import Vocabulary, build_vocabulary, read_tokens, window_matrix
from .errors import FormatError, NRPLMError, NumericError
from .evaluation import load_sweep, perplexity, run_sweep
from .random_index import MODES, histogram_stats, inner_product_histogram, write_histogram

log = logging.getLogger("nrplm")

EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    g = p.add_argument_group("config overrides")
    for f in fields(ExperimentConfig):
        g.add_argument("--" + f.name.replace("_", "-"), dest=f"cfg_{f.name}", default=None,
                       metavar=type(f.default).__name__.upper())


def _overrides(args) -> dict[str, str]:
    return {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}


def _config(args) -> ExperimentConfig:
    values = parse_flat(Path(args.config).read_text()) if args.config else {}
    values.update(_overrides(args))
    return ExperimentConfig.from_mapping(values)


def _out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    return out


def _vocab_path(cfg: ExperimentConfig) -> Path:
    return Path(cfg.vocab_cache) if cfg.vocab_cache else Path(cfg.output_dir) / "vocab.bin"


def _load_data(cfg: ExperimentConfig):
    from .experiment import load_dataset

    for split in ("train", "valid", "test"):
        path = getattr(cfg, f"{split}_path")
        if not path or not Path(path).is_file():
            raise FileNotFoundError(f"{split}_path: file not found: {path!r}")
    vp = _vocab_path(cfg)
    vocab = Vocabulary.load(vp) if vp.is_file() else None
    return load_dataset(cfg, vocab=vocab)


def cmd_preprocess(args) -> int:
    cfg = _config(args)
    eos = cfg.eos_token or None
    tokens = {}
    for split in ("train", "valid", "test"):
        path = getattr(cfg, f"{split}_path")
        if not path or not Path(path).is_file():
            log.error("%s_path: file not found: %r", split, path)
            return 1
        tokens[split] = read_tokens(path, eos=eos)
    out = _out(cfg)
    vocab = build_vocabulary(tokens["train"], cfg.vocab_size)
    vp = _vocab_path(cfg)
    vocab.save(vp)
    lines = ["split,tokens,windows"]
    for split, toks in tokens.items():
        ids = vocab.encode_all(toks)
        wins = len(window_matrix(ids, cfg.n, pad_start=cfg.pad_start))
        if wins == 0:
            log.warning("%s split yields no %d-gram windows", split, cfg.n)
        lines.append(f"{split},{len(toks)},{wins}")
    report = "\n".join(lines) + "\n"
    (out / "preprocess.csv").write_text(report)
    print(f"vocabulary: {len(vocab)} entries -> {vp}")
    print(report, end="")
    return 0


def cmd_train(args) -> int:
    from .experiment import run_experiment

    cfg = _config(args)
    data = _load_data(cfg)
    out = _out(cfg)
    data.vocab.save(_vocab_path(cfg))
    try:
        res = run_experiment(cfg, data, checkpoint_path=out / "best.ckpt",
                             log_path=out / "train_log.csv")
    except NumericError as exc:
        log.error("training aborted: %s", exc)
        return EXIT_NUMERIC
    summary = {"best_val_ppl": res.train.state.best_val_ppl,
               "best_epoch": res.train.state.best_epoch, "epochs": res.train.state.epoch,
               "converged": res.train.state.converged, **res.test.as_dict()}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return 0


def cmd_eval(args) -> int:
    from .experiment import snapshot

    cfg = _config(args)
    data = _load_data(cfg)
    try:
        model = checkpoint.load(args.checkpoint)
    except (OSError, FormatError) as exc:
        log.error("cannot read checkpoint: %s", exc)
        return 1
    if model.vocab_size != len(data.vocab) or model.n != cfg.n:
        log.error("checkpoint (|V|=%d, n=%d) does not match data/config (|V|=%d, n=%d)",
                  model.vocab_size, model.n, len(data.vocab), cfg.n)
        return EXIT_USAGE
    windows = data.windows(args.split, cfg.n, cfg.pad_start)
    report = perplexity(model, windows, batch_size=cfg.batch_size, config=snapshot(cfg))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = json.dumps({"split": args.split, **report.as_dict()}, indent=2)
    (out / f"eval_{args.split}.json").write_text(text + "\n")
    print(text)
    return 0


def cmd_ri_stats(args) -> int:
    hist = inner_product_histogram(args.k, args.s, args.mode, args.pairs, args.seed)
    write_histogram(args.out, hist)
    stats = histogram_stats(hist)
    log.info("k=%d s=%d %s: %s", args.k, args.s, args.mode,
             ", ".join(f"{k}={v:.6g}" for k, v in stats.items()))
    return 0


def bundled_sweeps() -> dict[str, Path]:
    """Sweep files shipped with the package, by stem."""
    root = resources.files("nrplm") / "data"
    return {p.name[:-4]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".ini")}


def _resolve_spec(spec: str) -> Path:
    path = Path(spec)
    if path.is_file():
        return path
    bundled = bundled_sweeps()
    name = path.name[:-4] if path.name.endswith(".ini") else path.name
    if name in bundled and not path.parent.parts:
        return bundled[name]
    raise FileNotFoundError(f"sweep file not found: {spec!r} (bundled: {', '.join(sorted(bundled))})")


def cmd_sweep(args) -> int:
    overrides = _overrides(args)
    specs = load_sweep(_resolve_spec(args.spec), overrides)
    base = specs[0].base
    data = _load_data(base)
    out = Path(base.output_dir)
    res = run_sweep(specs, data, out_dir=out, jobs=args.jobs)
    print(f"{len(res.rows)} result rows -> {out / 'results.csv'}")
    if res.failed:
        log.error("some sweep cells failed; see %s", out / "runs.csv")
        return 1
    return 0


def cmd_synth(args) -> int:
    from .synthetic import write_corpus

    paths = write_corpus(args.out_dir, args.train_tokens, args.valid_tokens, args.test_tokens,
                         seed=args.seed, n_types=args.types)
    for split, p in paths.items():
        print(f"{split}: {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nrplm", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="build the vocabulary cache and count windows")
    _add_config_flags(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train one model to convergence")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="perplexity of a checkpoint on a split")
    _add_config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ri-stats", help="inner-product histogram of random indices")
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--s", type=int, default=2)
    p.add_argument("--mode", choices=MODES, default="ternary")
    p.add_argument("--pairs", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ri_stats)

    p = sub.add_parser("sweep", help="run a hyper-parameter grid")
    p.add_argument("spec", help="sweep file (INI: [DEFAULT] plus one section per grid) "
                                "or the name of a bundled one: table1..table4, trend")
    p.add_argument("--jobs", type=int, default=1)
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="write a synthetic train/valid/test corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--train-tokens", type=int, default=50_000)
    p.add_argument("--valid-tokens", type=int, default=5_000)
    p.add_argument("--test-tokens", type=int, default=5_000)
    p.add_argument("--types", type=int, default=2500)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "ri-stats":
        logging.getLogger("nrplm").setLevel(logging.INFO)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return 1
    except NRPLMError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
