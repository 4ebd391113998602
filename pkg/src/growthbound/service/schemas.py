"""Request and response bodies for the HTTP service.

Every endpoint works on files: requests name input paths and an output
directory, responses name the artifacts written plus a small summary.  That
keeps large arrays out of the transport and makes the CLI a thin shell
around the same payloads.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

ModelKind = Literal["lstm", "bilstm", "s4", "cnn"]
DatasetFormat = Literal["tsv", "csv"]


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str


class TrainRequest(BaseModel):
    """Train a classifier; ``None`` fields fall back to per-kind defaults."""

    kind: ModelKind
    train_path: str
    embeddings_path: str
    out_dir: str
    val_path: Optional[str] = None
    dataset_format: DatasetFormat = "tsv"
    beta: float = Field(0.0, ge=0.0, le=1.0)
    seed: int = 42
    epochs: Optional[int] = Field(None, ge=1)
    learning_rate: Optional[float] = Field(None, gt=0.0)
    weight_decay: Optional[float] = Field(None, ge=0.0)
    batch_size: Optional[int] = Field(None, ge=1)
    hidden_size: Optional[int] = Field(None, ge=1)
    max_length: Optional[int] = Field(None, ge=1)
    kernel_sizes: Optional[list[int]] = None
    cnn_activation: Optional[Literal["relu", "tanh"]] = None
    early_stopping_patience: Optional[int] = Field(None, ge=0)
    recalibrate_every: Optional[int] = Field(None, ge=1)
    s4_core_lr: Optional[float] = Field(None, gt=0.0)
    s4_core_wd: Optional[float] = Field(None, ge=0.0)


class EpochRow(BaseModel):
    epoch: int
    loss: float
    ce: float
    l_gbm: float
    clean_acc: float
    sum_m: float


class TrainResponse(BaseModel):
    checkpoint_path: str
    history_path: str
    kind: ModelKind
    label: str
    epochs_run: int
    stopped_early: bool
    final: EpochRow
    val_accuracy: Optional[float] = None


class GbmRequest(BaseModel):
    """Export the growth bound matrix of a trained checkpoint.

    Recurrent kinds need ``calibration_path`` + ``embeddings_path`` to fix
    the state boxes; the CNN needs ``n_words`` (defaults to the smallest
    admissible sentence length).
    """

    checkpoint_path: str
    out_dir: str
    calibration_path: Optional[str] = None
    embeddings_path: Optional[str] = None
    dataset_format: DatasetFormat = "tsv"
    max_length: int = Field(64, ge=1)
    calibration_examples: int = Field(256, ge=1)
    n_words: Optional[int] = Field(None, ge=1)
    bins: int = Field(20, ge=1)


class GbmResponse(BaseModel):
    matrix_path: str
    histogram_path: str
    summary_path: str
    kind: ModelKind
    rows: int
    cols: int
    blocks: list[str]
    total: float
    lipschitz: float


class CertifyRequest(BaseModel):
    checkpoint_path: str
    dataset_path: str
    embeddings_path: str
    out_dir: str
    dataset_format: DatasetFormat = "tsv"
    max_length: int = Field(64, ge=1)
    synonyms_path: Optional[str] = None
    k: int = Field(8, ge=1)
    d_e: float = Field(0.5, gt=0.0)
    mode: Literal["chained", "final_cell"] = "chained"
    oov_policy: Literal["zero", "reject"] = "zero"
    limit: Optional[int] = Field(None, ge=1)


class CertifyAggregate(BaseModel):
    n: int
    mode: str
    certified_fraction: float
    mean_margin: float
    clean_accuracy: float
    certified_correct_fraction: float


class CertifyResponse(BaseModel):
    certificates_path: str
    aggregate_path: str
    aggregate: CertifyAggregate


class SynonymsRequest(BaseModel):
    embeddings_path: str
    out_dir: str
    k: int = Field(8, ge=1)
    d_e: float = Field(0.5, gt=0.0)


class SynonymsResponse(BaseModel):
    synonyms_path: str
    vocab_size: int
    words_with_synonyms: int
    k: int
    d_e: float


class SynthRequest(BaseModel):
    out_dir: str
    seed: int = 42
    dim: int = Field(16, ge=1)
    n_train: int = Field(2000, ge=1)
    n_test: int = Field(500, ge=1)
    words_per_class: int = Field(25, ge=1)
    neutral_words: int = Field(50, ge=0)
    variants_per_word: int = Field(3, ge=0)
    margin: float = 1.0
    indicative_prob: float = Field(0.55, gt=0.0, le=1.0)
    min_length: int = Field(8, ge=1)
    max_length: int = Field(14, ge=1)
    spread: float = Field(0.1, ge=0.0)
    base_noise: float = Field(0.3, ge=0.0)


class SynthResponse(BaseModel):
    train_path: str
    test_path: str
    embeddings_path: str
    vocab_size: int
    n_train: int
    n_test: int
