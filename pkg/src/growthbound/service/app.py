"""FastAPI service exposing train / gbm / certify / synonyms / synth.

Each endpoint body is a plain function over the schema types, so the CLI
(through an in-process ASGI transport) and a remote deployment hit exactly
the same code path.  Library errors map onto the transport as:

* caller mistakes (missing file, bad request field)  -> 422
* malformed data discovered while working            -> 400
* numeric failure (divergence, NaN loss)             -> 500
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..certify import aggregate_certificates, certify_dataset, write_certificates_jsonl
from ..data import (
    EmbeddingTable,
    SynonymTable,
    SyntheticConfig,
    TextDataset,
    build_synonyms,
    load_dataset,
    load_embeddings,
    make_synthetic,
    save_dataset,
    save_embeddings,
)
from ..errors import DataError, GrowthBoundError, NumericError, UsageError
from ..gbm import Gbm
from ..lstm import gbm_lstm
from ..s4 import gbm_s4
from ..cnn import gbm_cnn
from ..models import (
    SequenceClassifier,
    calibrate_lstm_domain,
    load_checkpoint,
    logits_batch,
    pack_batch,
    save_checkpoint,
)
from ..training import (
    default_train_config,
    history_metadata,
    train,
    write_history,
)
from . import schemas


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} does not exist: {path}")
    return p


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _accuracy(model: SequenceClassifier, ds: TextDataset, emb: EmbeddingTable, max_length: int) -> float:
    seqs = [emb.embed_sequence(tokens[:max_length]) for tokens, _ in ds.examples]
    labels = ds.labels()
    hits = 0
    params = model.numpy_params()
    for start in range(0, len(seqs), 256):
        x, mask = pack_batch(seqs[start : start + 256])
        logits = np.asarray(logits_batch(model.config, params, x, mask))
        hits += int((logits.argmax(axis=1) == labels[start : start + 256]).sum())
    return hits / len(seqs)


def run_train(req: schemas.TrainRequest) -> schemas.TrainResponse:
    emb = load_embeddings(_require_file(req.embeddings_path, "embeddings file"))
    overrides = {
        name: getattr(req, name)
        for name in (
            "epochs",
            "learning_rate",
            "weight_decay",
            "batch_size",
            "hidden_size",
            "max_length",
            "cnn_activation",
            "early_stopping_patience",
            "recalibrate_every",
            "s4_core_lr",
            "s4_core_wd",
        )
        if getattr(req, name) is not None
    }
    if req.kernel_sizes is not None:
        overrides["kernel_sizes"] = tuple(req.kernel_sizes)
    cfg = default_train_config(
        req.kind, beta_weight=req.beta, seed=req.seed, **overrides
    )
    ds = load_dataset(
        _require_file(req.train_path, "training dataset"),
        req.dataset_format,
        max_length=cfg.max_length,
    )
    val_ds = None
    if req.val_path is not None:
        val_ds = load_dataset(
            _require_file(req.val_path, "validation dataset"),
            req.dataset_format,
            max_length=cfg.max_length,
            num_classes=ds.num_classes,
            split="val",
        )
    result = train(req.kind, ds, emb, cfg, val_dataset=val_ds)
    out = _out_dir(req.out_dir)
    checkpoint_path = out / "model.ckpt"
    history_path = out / "history.csv"
    save_checkpoint(result.model, checkpoint_path)
    meta = history_metadata(cfg, req.kind)
    write_history(result.history, history_path, meta)
    last = result.history[-1]
    val_accuracy = (
        _accuracy(result.model, val_ds, emb, cfg.max_length) if val_ds else None
    )
    return schemas.TrainResponse(
        checkpoint_path=str(checkpoint_path),
        history_path=str(history_path),
        kind=req.kind,
        label=meta["label"],
        epochs_run=len(result.history),
        stopped_early=result.stopped_early,
        final=schemas.EpochRow(
            epoch=last.epoch,
            loss=last.loss,
            ce=last.ce,
            l_gbm=last.l_gbm,
            clean_acc=last.clean_acc,
            sum_m=last.sum_m,
        ),
        val_accuracy=val_accuracy,
    )


def _calibration_batch(req: schemas.GbmRequest, emb: EmbeddingTable):
    ds = load_dataset(
        _require_file(req.calibration_path, "calibration dataset"),
        req.dataset_format,
        max_length=req.max_length,
    )
    seqs = [
        emb.embed_sequence(tokens)
        for tokens, _ in ds.examples[: req.calibration_examples]
    ]
    return pack_batch(seqs)


def _model_gbm(model: SequenceClassifier, req: schemas.GbmRequest) -> Gbm:
    kind = model.config.kind
    if kind in ("lstm", "bilstm"):
        if req.calibration_path is None or req.embeddings_path is None:
            raise UsageError(
                f"{kind} bound export needs calibration_path and embeddings_path"
                " to fix the state boxes"
            )
        emb = load_embeddings(_require_file(req.embeddings_path, "embeddings file"))
        x, mask = _calibration_batch(req, emb)
        if kind == "lstm":
            dom = calibrate_lstm_domain(model.params, "", x, mask)
            return gbm_lstm(model.lstm_cell(), dom)
        fw = gbm_lstm(
            model.lstm_cell("fw"), calibrate_lstm_domain(model.params, "fw_", x, mask)
        )
        bw = gbm_lstm(
            model.lstm_cell("bw"),
            calibrate_lstm_domain(model.params, "bw_", x, mask, reverse=True),
        )
        # one matrix for the stacked map (fw_h, bw_h) of (v, fw state, bw state)
        d0 = model.config.embed_dim
        d = model.config.hidden
        top = np.concatenate(
            [fw.block("v"), fw.block("h"), fw.block("c"), np.zeros((d, 2 * d))], axis=1
        )
        bottom = np.concatenate(
            [bw.block("v"), np.zeros((d, 2 * d)), bw.block("h"), bw.block("c")], axis=1
        )
        return Gbm(
            np.concatenate([top, bottom], axis=0),
            (
                ("v", 0, d0),
                ("fw_h", d0, d0 + d),
                ("fw_c", d0 + d, d0 + 2 * d),
                ("bw_h", d0 + 2 * d, d0 + 3 * d),
                ("bw_c", d0 + 3 * d, d0 + 4 * d),
            ),
        )
    if kind == "s4":
        return gbm_s4(model.s4_discrete())
    n_words = req.n_words if req.n_words is not None else model.config.min_words
    return gbm_cnn(model.cnn_cell(), n_words)


def _write_matrix_csv(g: Gbm, path: Path) -> None:
    col_block = []
    for name, start, stop in g.blocks:
        col_block.extend([name] * (stop - start))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("row,col,value,block\n")
        for i in range(g.n_out):
            row = g.matrix[i]
            for j in range(g.n_in):
                fh.write(f"{i},{j},{row[j]:.17g},{col_block[j]}\n")


def _write_histogram_csv(g: Gbm, bins: int, path: Path) -> None:
    counts, edges = np.histogram(g.matrix.ravel(), bins=bins)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bin_lo,bin_hi,count\n")
        for lo, hi, count in zip(edges[:-1], edges[1:], counts):
            fh.write(f"{lo:.17g},{hi:.17g},{int(count)}\n")


def run_gbm(req: schemas.GbmRequest) -> schemas.GbmResponse:
    model = load_checkpoint(_require_file(req.checkpoint_path, "checkpoint"))
    g = _model_gbm(model, req)
    out = _out_dir(req.out_dir)
    matrix_path = out / "gbm_matrix.csv"
    histogram_path = out / "gbm_histogram.csv"
    summary_path = out / "gbm_summary.json"
    _write_matrix_csv(g, matrix_path)
    _write_histogram_csv(g, req.bins, histogram_path)
    summary = {
        "kind": model.config.kind,
        "rows": g.n_out,
        "cols": g.n_in,
        "blocks": list(g.block_names()),
        "total": g.total(),
        "lipschitz": g.max_entry(),
    }
    summary_path.write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return schemas.GbmResponse(
        matrix_path=str(matrix_path),
        histogram_path=str(histogram_path),
        summary_path=str(summary_path),
        **summary,
    )


def run_certify(req: schemas.CertifyRequest) -> schemas.CertifyResponse:
    model = load_checkpoint(_require_file(req.checkpoint_path, "checkpoint"))
    emb = load_embeddings(_require_file(req.embeddings_path, "embeddings file"))
    if emb.dim != model.config.embed_dim:
        raise DataError(
            f"embedding dim {emb.dim} does not match model embed_dim"
            f" {model.config.embed_dim}"
        )
    if req.synonyms_path is not None:
        syn = SynonymTable.load(_require_file(req.synonyms_path, "synonym cache"))
        if syn.dim != emb.dim:
            raise DataError(
                f"synonym radius dim {syn.dim} does not match embedding dim {emb.dim}"
            )
    else:
        syn = build_synonyms(emb, k=req.k, d_e=req.d_e)
    ds = load_dataset(
        _require_file(req.dataset_path, "dataset"),
        req.dataset_format,
        max_length=req.max_length,
    )
    examples = ds.examples[: req.limit] if req.limit is not None else ds.examples
    min_words = model.config.min_words
    for i, (tokens, _) in enumerate(examples):
        if len(tokens) < min_words:
            raise DataError(
                f"sentence {i} has {len(tokens)} tokens; this model needs"
                f" at least {min_words}"
            )
    subset = TextDataset(
        examples=list(examples), num_classes=ds.num_classes, split=ds.split
    )
    certs = certify_dataset(
        model, subset, emb, syn, mode=req.mode, oov_policy=req.oov_policy
    )
    labels = [y for _, y in subset.examples]
    aggregate = aggregate_certificates(certs, labels)
    out = _out_dir(req.out_dir)
    certificates_path = out / "certificates.jsonl"
    aggregate_path = out / "aggregate.json"
    write_certificates_jsonl(certs, certificates_path)
    aggregate_path.write_text(
        json.dumps(aggregate, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return schemas.CertifyResponse(
        certificates_path=str(certificates_path),
        aggregate_path=str(aggregate_path),
        aggregate=schemas.CertifyAggregate(**aggregate),
    )


def run_synonyms(req: schemas.SynonymsRequest) -> schemas.SynonymsResponse:
    emb = load_embeddings(_require_file(req.embeddings_path, "embeddings file"))
    syn = build_synonyms(emb, k=req.k, d_e=req.d_e)
    out = _out_dir(req.out_dir)
    synonyms_path = out / "synonyms.json"
    syn.save(synonyms_path)
    with_synonyms = sum(1 for e in syn.entries.values() if e.synonyms)
    return schemas.SynonymsResponse(
        synonyms_path=str(synonyms_path),
        vocab_size=emb.size,
        words_with_synonyms=with_synonyms,
        k=req.k,
        d_e=req.d_e,
    )


def run_synth(req: schemas.SynthRequest) -> schemas.SynthResponse:
    cfg = SyntheticConfig(
        dim=req.dim,
        n_train=req.n_train,
        n_test=req.n_test,
        words_per_class=req.words_per_class,
        neutral_words=req.neutral_words,
        variants_per_word=req.variants_per_word,
        margin=req.margin,
        indicative_prob=req.indicative_prob,
        min_length=req.min_length,
        max_length=req.max_length,
        spread=req.spread,
        base_noise=req.base_noise,
    )
    train_ds, test_ds, emb = make_synthetic(cfg, seed=req.seed)
    out = _out_dir(req.out_dir)
    train_path = out / "train.tsv"
    test_path = out / "test.tsv"
    embeddings_path = out / "embeddings.txt"
    save_dataset(train_ds, train_path)
    save_dataset(test_ds, test_path)
    save_embeddings(emb, embeddings_path)
    return schemas.SynthResponse(
        train_path=str(train_path),
        test_path=str(test_path),
        embeddings_path=str(embeddings_path),
        vocab_size=emb.size,
        n_train=len(train_ds),
        n_test=len(test_ds),
    )


def create_app() -> FastAPI:
    app = FastAPI(title="growthbound", version=__version__)

    @app.exception_handler(GrowthBoundError)
    async def _library_error(request: Request, exc: GrowthBoundError):
        if isinstance(exc, UsageError):
            status, kind = 422, "usage"
        elif isinstance(exc, NumericError):
            status, kind = 500, "numeric"
        else:
            status, kind = 400, "data"
        return JSONResponse(
            status_code=status,
            content={"error": {"type": kind, "message": str(exc)}},
        )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(version=__version__)

    @app.post("/train", response_model=schemas.TrainResponse)
    def train_endpoint(req: schemas.TrainRequest) -> schemas.TrainResponse:
        return run_train(req)

    @app.post("/gbm", response_model=schemas.GbmResponse)
    def gbm_endpoint(req: schemas.GbmRequest) -> schemas.GbmResponse:
        return run_gbm(req)

    @app.post("/certify", response_model=schemas.CertifyResponse)
    def certify_endpoint(req: schemas.CertifyRequest) -> schemas.CertifyResponse:
        return run_certify(req)

    @app.post("/synonyms", response_model=schemas.SynonymsResponse)
    def synonyms_endpoint(req: schemas.SynonymsRequest) -> schemas.SynonymsResponse:
        return run_synonyms(req)

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth_endpoint(req: schemas.SynthRequest) -> schemas.SynthResponse:
        return run_synth(req)

    return app
