"""Pydantic request/response models for the HTTP service.

Request models mirror the run-layer configs with optional fields; omitted
fields fall back to the package defaults server-side, and every response
echoes the artifacts written so clients can verify completion.
"""

from __future__ import annotations

from pydantic import BaseModel

from ..runs import RunConfig, make_run_config


class HealthResponse(BaseModel):
    status: str
    version: str


class GenerateRequest(BaseModel):
    out_dir: str
    n_speakers: int = 32
    instances_per_speaker: int = 20
    latent_dim: int = 16
    face_dim: int = 64
    voice_dim: int = 64
    noise_sigma: float = 0.3
    seed: int = 0
    tag: str | None = None


class GenerateResponse(BaseModel):
    dataset_dir: str
    dataset_digest: str
    n_records: int
    n_speakers: int
    outputs: list[str]


class RunOverrides(BaseModel):
    """Optional RunConfig overrides shared by train and ablate requests."""

    dataset_dir: str
    out_dir: str
    seed: int | None = None
    split_mode: str | None = None
    split_ratios: list[float] | None = None
    split_seed: int | None = None
    tag: str | None = None
    variant: str | None = None
    embed_dim: int | None = None
    alpha: float | None = None
    dropout_rate: float | None = None
    oc_normalization: str | None = None
    oc_pair_scope: str | None = None
    renormalize_fused: bool | None = None
    epochs: int | None = None
    batch_size: int | None = None
    base_lr: float | None = None
    decay_rate: float | None = None
    n_valid_trials: int | None = None
    valid_trial_seed: int | None = None
    n_verify_trials: int | None = None
    verify_trial_seed: int | None = None
    gallery_sizes: list[int] | None = None
    n_match_trials: int | None = None
    match_trial_seed: int | None = None
    probe_modality: str | None = None

    def to_run_config(self) -> RunConfig:
        overrides = {
            key: value
            for key, value in self.model_dump().items()
            if value is not None
        }
        return make_run_config(overrides)


class TrainRequest(RunOverrides):
    pass


class TrainResponse(BaseModel):
    checkpoint_path: str
    history_path: str
    run_doc_path: str
    best_epoch: int | None
    best_valid_eer: float | None
    final_train_loss: float | None
    dataset_digest: str
    config_digest: str
    outputs: list[str]


class VerifyEvalRequest(BaseModel):
    checkpoint_path: str
    dataset_dir: str
    out_dir: str
    trials_path: str | None = None
    split_mode: str = "seen_heard"
    split_ratios: list[float] = [0.7, 0.15, 0.15]
    split_seed: int = 0
    tag: str | None = None
    n_trials: int = 2000
    trial_seed: int = 202


class VerifyEvalResponse(BaseModel):
    eer: float
    auc: float
    eer_threshold: float
    n_trials: int
    report_json_path: str
    report_csv_path: str
    trials_path: str
    trials_digest: str
    outputs: list[str]


class MatchEvalRequest(BaseModel):
    checkpoint_path: str
    dataset_dir: str
    out_dir: str
    trials_path: str | None = None
    split_mode: str = "seen_heard"
    split_ratios: list[float] = [0.7, 0.15, 0.15]
    split_seed: int = 0
    tag: str | None = None
    gallery_sizes: list[int] = [2, 4, 6, 8, 10]
    n_trials: int = 1000
    trial_seed: int = 300
    probe_modality: str = "voice"


class MatchEvalResponse(BaseModel):
    accuracy_by_gallery_size: dict[int, float]
    curve_csv_path: str
    report_json_path: str
    trials_digests: dict[int, str]
    outputs: list[str]


class AblateRequest(RunOverrides):
    variants: list[str] = ["CE", "MSM", "FOP", "OURS"]
    seeds: list[int] = [0, 1, 2, 3, 4]


class AblationCellModel(BaseModel):
    variant: str
    seed: int
    eer: float
    auc: float
    accuracy_by_gallery_size: dict[int, float]


class AblateResponse(BaseModel):
    cells: list[AblationCellModel]
    csv_path: str
    report_json_path: str
    trials_digest: str
    outputs: list[str]


class ScoreRequest(BaseModel):
    checkpoint_path: str
    face: list[float]
    voice: list[float]


class ScoreResponse(BaseModel):
    score: float


class MatchRequest(BaseModel):
    checkpoint_path: str
    probe: list[float]
    probe_modality: str
    gallery: list[list[float]]


class MatchResponse(BaseModel):
    best_index: int
    scores: list[float]
