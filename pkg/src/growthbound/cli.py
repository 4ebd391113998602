"""Command line front end.

Every subcommand builds a request payload and hands it to the service
client (in-process by default, remote with ``--server``).  This module
imports no numeric code at module scope on purpose: ``--threads`` must pin
the BLAS/OpenMP pool sizes through environment variables before numpy is
first imported, which is what makes ``--threads 1`` bitwise deterministic.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Errors are printed to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import DataError, DimensionError, NumericError, UsageError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)

_REQUIRED = {
    "train": ("model", "train", "embeddings", "out"),
    "gbm": ("checkpoint", "out"),
    "certify": ("checkpoint", "data", "embeddings", "out"),
    "synonyms": ("embeddings", "out"),
    "synth": ("out",),
}


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(part) for part in str(text).split(",") if part]


def _build_parser() -> tuple[_Parser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(
        prog="growthbound",
        description="Train, bound and certify small text classifiers.",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    registry: dict[str, argparse.ArgumentParser] = {}

    def sub(name: str, help_text: str) -> argparse.ArgumentParser:
        p = subs.add_parser(name, help=help_text)
        p.add_argument("--config", help="TOML file of option defaults; explicit flags win")
        p.add_argument("--out", help="output directory")
        p.add_argument(
            "--threads",
            type=int,
            help="pin BLAS/OpenMP thread counts; 1 forces bitwise determinism",
        )
        p.add_argument("--server", help="service base URL (default: in-process)")
        registry[name] = p
        return p

    p = sub("train", "train a classifier, write checkpoint + history CSV")
    p.add_argument("--model", choices=("lstm", "bilstm", "s4", "cnn"))
    p.add_argument("--train", help="training dataset path")
    p.add_argument("--val", help="validation dataset path")
    p.add_argument("--embeddings", help="embedding table path")
    p.add_argument("--format", choices=("tsv", "csv"), default="tsv")
    p.add_argument("--beta", type=float, default=0.0, help="bound-penalty weight in [0, 1]")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--max-length", type=int)
    p.add_argument("--kernel-sizes", type=_int_list, help="comma separated, e.g. 3,4,5")
    p.add_argument("--cnn-activation", choices=("relu", "tanh"))
    p.add_argument("--early-stopping", type=int)
    p.add_argument("--recalibrate-every", type=int)
    p.add_argument("--s4-core-lr", type=float)
    p.add_argument("--s4-core-wd", type=float)

    p = sub("gbm", "export a checkpoint's growth bound matrix as CSV + summary")
    p.add_argument("--checkpoint")
    p.add_argument("--data", help="calibration dataset (recurrent models)")
    p.add_argument("--embeddings", help="embedding table (recurrent models)")
    p.add_argument("--format", choices=("tsv", "csv"), default="tsv")
    p.add_argument("--max-length", type=int, default=64)
    p.add_argument("--calibration-examples", type=int, default=256)
    p.add_argument("--n-words", type=int, help="evaluation sentence length (cnn)")
    p.add_argument("--bins", type=int, default=20, help="histogram bin count")

    p = sub("certify", "certify every sentence of a dataset, write JSONL + aggregate")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--embeddings")
    p.add_argument("--format", choices=("tsv", "csv"), default="tsv")
    p.add_argument("--max-length", type=int, default=64)
    p.add_argument("--synonyms", help="prebuilt synonym cache (else built from --k/--d-e)")
    p.add_argument("--k", type=int, default=8, help="synonyms per word")
    p.add_argument("--d-e", type=float, default=0.5, help="synonym distance cutoff")
    p.add_argument("--mode", choices=("chained", "final_cell"), default="chained")
    p.add_argument("--oov", choices=("zero", "reject"), default="zero")
    p.add_argument("--limit", type=int, help="certify only the first N sentences")

    p = sub("synonyms", "build and cache the synonym table for an embedding file")
    p.add_argument("--embeddings")
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--d-e", type=float, default=0.5)

    p = sub("synth", "generate a planted two-class corpus + embeddings")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--words-per-class", type=int, default=25)
    p.add_argument("--neutral-words", type=int, default=50)
    p.add_argument("--variants-per-word", type=int, default=3)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--indicative-prob", type=float, default=0.55)
    p.add_argument("--min-length", type=int, default=8)
    p.add_argument("--max-length", type=int, default=14)
    p.add_argument("--spread", type=float, default=0.1)
    p.add_argument("--base-noise", type=float, default=0.3)

    return parser, registry


def _load_config(path: str, command: str, sub: argparse.ArgumentParser) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # 3.10
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file does not exist: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from None
    merged = {k: v for k, v in raw.items() if not isinstance(v, dict)}
    section = raw.get(command, {})
    if not isinstance(section, dict):
        raise UsageError(f"{path}: [{command}] must be a table")
    merged.update(section)
    merged = {str(k).replace("-", "_"): v for k, v in merged.items()}
    known = {a.dest for a in sub._actions} - {"help", "config"}
    unknown = sorted(set(merged) - known)
    if unknown:
        raise UsageError(f"{path}: unknown option(s) for '{command}': {', '.join(unknown)}")
    return merged


def _check_required(args: argparse.Namespace) -> None:
    missing = [
        f"--{name.replace('_', '-')}"
        for name in _REQUIRED[args.command]
        if getattr(args, name) is None
    ]
    if missing:
        raise UsageError(f"{args.command}: missing required option(s): {', '.join(missing)}")


def _set_thread_env(n: int) -> None:
    if n < 1:
        raise UsageError(f"--threads must be >= 1, got {n}")
    for var in _THREAD_ENV_VARS:
        os.environ[var] = str(n)


def _drop_none(payload: dict) -> dict:
    return {k: v for k, v in payload.items() if v is not None}


def _cmd_train(client, args) -> dict:
    return client.train(
        _drop_none(
            {
                "kind": args.model,
                "train_path": args.train,
                "val_path": args.val,
                "embeddings_path": args.embeddings,
                "out_dir": args.out,
                "dataset_format": args.format,
                "beta": args.beta,
                "seed": args.seed,
                "epochs": args.epochs,
                "learning_rate": args.lr,
                "weight_decay": args.weight_decay,
                "batch_size": args.batch_size,
                "hidden_size": args.hidden,
                "max_length": args.max_length,
                "kernel_sizes": args.kernel_sizes,
                "cnn_activation": args.cnn_activation,
                "early_stopping_patience": args.early_stopping,
                "recalibrate_every": args.recalibrate_every,
                "s4_core_lr": args.s4_core_lr,
                "s4_core_wd": args.s4_core_wd,
            }
        )
    )


def _cmd_gbm(client, args) -> dict:
    return client.gbm(
        _drop_none(
            {
                "checkpoint_path": args.checkpoint,
                "out_dir": args.out,
                "calibration_path": args.data,
                "embeddings_path": args.embeddings,
                "dataset_format": args.format,
                "max_length": args.max_length,
                "calibration_examples": args.calibration_examples,
                "n_words": args.n_words,
                "bins": args.bins,
            }
        )
    )


def _cmd_certify(client, args) -> dict:
    return client.certify(
        _drop_none(
            {
                "checkpoint_path": args.checkpoint,
                "dataset_path": args.data,
                "embeddings_path": args.embeddings,
                "out_dir": args.out,
                "dataset_format": args.format,
                "max_length": args.max_length,
                "synonyms_path": args.synonyms,
                "k": args.k,
                "d_e": args.d_e,
                "mode": args.mode,
                "oov_policy": args.oov,
                "limit": args.limit,
            }
        )
    )


def _cmd_synonyms(client, args) -> dict:
    return client.synonyms(
        {
            "embeddings_path": args.embeddings,
            "out_dir": args.out,
            "k": args.k,
            "d_e": args.d_e,
        }
    )


def _cmd_synth(client, args) -> dict:
    return client.synth(
        {
            "out_dir": args.out,
            "seed": args.seed,
            "dim": args.dim,
            "n_train": args.n_train,
            "n_test": args.n_test,
            "words_per_class": args.words_per_class,
            "neutral_words": args.neutral_words,
            "variants_per_word": args.variants_per_word,
            "margin": args.margin,
            "indicative_prob": args.indicative_prob,
            "min_length": args.min_length,
            "max_length": args.max_length,
            "spread": args.spread,
            "base_noise": args.base_noise,
        }
    )


_DISPATCH = {
    "train": _cmd_train,
    "gbm": _cmd_gbm,
    "certify": _cmd_certify,
    "synonyms": _cmd_synonyms,
    "synth": _cmd_synth,
}


def _run(argv: list[str]) -> dict:
    parser, registry = _build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        registry[args.command].set_defaults(
            **_load_config(args.config, args.command, registry[args.command])
        )
        args = parser.parse_args(argv)
    _check_required(args)
    if args.threads is not None:
        _set_thread_env(args.threads)

    from .client import ServiceClient  # first numpy import happens in here

    client = ServiceClient(server=args.server)
    return _DISPATCH[args.command](client, args)


def _fail(kind: str, exc: Exception, code: int) -> int:
    print(json.dumps({"error": {"type": kind, "message": str(exc)}}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        response = _run(argv)
    except SystemExit as exc:  # argparse --help or usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except (DataError, DimensionError) as exc:
        return _fail("data", exc, EXIT_DATA)
    except NumericError as exc:
        return _fail("numeric", exc, EXIT_NUMERIC)
    print(json.dumps(response, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
