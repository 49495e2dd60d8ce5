"""Run orchestration: reproducible train/eval/ablation runs with file artifacts.

Every run resolves one RunConfig, and every artifact it emits embeds that
config plus sha256 digests of the dataset and trial lists it consumed, so two
runs with equal configs produce byte-identical CSVs. Nothing here writes
timestamps for that reason.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import data as datamod
from . import model as modelmod
from .errors import InvalidArgumentError
from .metrics import (
    MetricsReport,
    ScoredTrials,
    auc,
    eer,
    matching_accuracy,
    write_matching_curve_csv,
    write_report_csv,
    write_report_json,
)

CHECKPOINT_NAME = "checkpoint.ckpt"
HISTORY_NAME = "history.csv"
RUN_DOC_NAME = "run.json"


@dataclass(frozen=True)
class RunConfig:
    """Everything a training or evaluation run depends on."""

    dataset_dir: str
    out_dir: str
    seed: int = 0
    split_mode: str = datamod.SEEN_HEARD
    split_ratios: tuple[float, float, float] = (0.7, 0.15, 0.15)
    split_seed: int = 0
    tag: str | None = None
    variant: str = modelmod.OURS
    embed_dim: int | None = None
    alpha: float = 1.0
    dropout_rate: float = 0.0
    oc_normalization: str = modelmod.MEAN
    oc_pair_scope: str = modelmod.MODALITY_POOLED
    renormalize_fused: bool = False
    epochs: int = 50
    batch_size: int = 64
    base_lr: float = 2e-3
    decay_rate: float = 0.85
    n_valid_trials: int = 2000
    valid_trial_seed: int = 101
    n_verify_trials: int = 2000
    verify_trial_seed: int = 202
    gallery_sizes: tuple[int, ...] = (2, 4, 6, 8, 10)
    n_match_trials: int = 1000
    match_trial_seed: int = 300
    probe_modality: str = datamod.VOICE

    def __post_init__(self) -> None:
        object.__setattr__(self, "split_ratios", tuple(float(r) for r in self.split_ratios))
        object.__setattr__(self, "gallery_sizes", tuple(int(g) for g in self.gallery_sizes))
        if self.split_mode not in datamod.SPLIT_MODES:
            raise InvalidArgumentError(f"split_mode must be one of {datamod.SPLIT_MODES}")
        if self.variant not in modelmod.VARIANTS:
            raise InvalidArgumentError(f"variant must be one of {modelmod.VARIANTS}")
        if self.probe_modality not in datamod.MODALITIES:
            raise InvalidArgumentError(f"probe_modality must be one of {datamod.MODALITIES}")
        if self.epochs < 0:
            raise InvalidArgumentError("epochs must be >= 0")
        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size must be >= 1")
        if not self.base_lr > 0:
            raise InvalidArgumentError("base_lr must be > 0")
        if not (0.0 < self.decay_rate <= 1.0):
            raise InvalidArgumentError("decay_rate must be in (0, 1]")
        if any(g < 2 for g in self.gallery_sizes) or not self.gallery_sizes:
            raise InvalidArgumentError("gallery_sizes must be a nonempty list of ints >= 2")
        if self.n_valid_trials < 0 or self.n_verify_trials < 2 or self.n_match_trials < 1:
            raise InvalidArgumentError("trial counts out of range")

    def to_json_dict(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["split_ratios"] = list(self.split_ratios)
        doc["gallery_sizes"] = list(self.gallery_sizes)
        return doc

    def digest(self) -> str:
        blob = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def make_run_config(overrides: dict[str, Any]) -> RunConfig:
    """Build a RunConfig from explicit overrides; unknown keys are an error."""
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(overrides) - known
    if unknown:
        raise InvalidArgumentError(f"unknown run config fields: {sorted(unknown)}")
    return RunConfig(**overrides)


def _float_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class RunData:
    """A dataset resolved for one run: split plan plus label indexing."""

    dataset: datamod.Dataset
    plan: datamod.SplitPlan
    speaker_ids: list[str]
    speaker_index: dict[str, int]


def load_run_data(cfg: RunConfig) -> RunData:
    dataset = datamod.load_dataset(cfg.dataset_dir)
    plan = datamod.make_splits(
        dataset, cfg.split_mode, cfg.split_ratios, seed=cfg.split_seed, tag=cfg.tag
    )
    speakers = dataset.speaker_ids
    return RunData(
        dataset=dataset,
        plan=plan,
        speaker_ids=speakers,
        speaker_index={s: i for i, s in enumerate(speakers)},
    )


def records_batch(run_data: RunData, instance_ids) -> modelmod.Batch:
    index = run_data.dataset.by_instance()
    recs = [index[i] for i in instance_ids]
    return modelmod.Batch(
        faces=np.stack([r.face for r in recs]).astype(np.float64),
        voices=np.stack([r.voice for r in recs]).astype(np.float64),
        labels=np.array([run_data.speaker_index[r.speaker_id] for r in recs]),
    )


def resolve_verification_trials(
    dataset: datamod.Dataset, trials: datamod.VerificationTrialList
) -> modelmod.TrialArrays:
    index = dataset.by_instance()
    for face_id, voice_id, _ in trials.pairs:
        if face_id not in index or voice_id not in index:
            raise InvalidArgumentError(
                f"trial references unknown instance {face_id!r}/{voice_id!r}"
            )
    return modelmod.TrialArrays(
        faces=np.stack([index[a].face for a, _, _ in trials.pairs]).astype(np.float64),
        voices=np.stack([index[b].voice for _, b, _ in trials.pairs]).astype(np.float64),
        labels=np.array([label for _, _, label in trials.pairs]),
    )


def _model_config(cfg: RunConfig, dataset: datamod.Dataset) -> modelmod.ModelConfig:
    return modelmod.make_config(
        n_speakers=len(dataset.speaker_ids),
        face_in_dim=dataset.face_dim,
        voice_in_dim=dataset.voice_dim,
        variant=cfg.variant,
        embed_dim=cfg.embed_dim,
        alpha=cfg.alpha,
        dropout_rate=cfg.dropout_rate,
        oc_normalization=cfg.oc_normalization,
        oc_pair_scope=cfg.oc_pair_scope,
        renormalize_fused=cfg.renormalize_fused,
    )


@dataclass
class GenerateResult:
    dataset_dir: str
    dataset_digest: str
    n_records: int
    n_speakers: int
    outputs: list[str]


def run_generate(spec: datamod.SyntheticSpec, out_dir: str) -> GenerateResult:
    dataset = datamod.gen_synthetic(spec)
    datamod.write_dataset(dataset, out_dir)
    root = Path(out_dir)
    return GenerateResult(
        dataset_dir=str(root),
        dataset_digest=datamod.dataset_digest(root),
        n_records=len(dataset),
        n_speakers=len(dataset.speaker_ids),
        outputs=[str(root / n) for n in ("manifest.json", "faces.f32le", "voices.f32le")],
    )


def history_csv(history: list[modelmod.EpochStats]) -> str:
    lines = ["epoch,train_loss,valid_eer,lr"]
    for row in history:
        lines.append(
            f"{row.epoch},{_float_cell(row.train_loss)},"
            f"{_float_cell(row.valid_eer)},{_float_cell(row.learning_rate)}"
        )
    return "\n".join(lines) + "\n"


@dataclass
class TrainRunResult:
    checkpoint_path: str
    history_path: str
    run_doc_path: str
    best_epoch: int | None
    best_valid_eer: float | None
    final_train_loss: float | None
    dataset_digest: str
    config_digest: str
    outputs: list[str]


def run_train(cfg: RunConfig) -> TrainRunResult:
    """Train per the config and write checkpoint + history + run document.

    Artifacts are written only after training finishes, so a failed run leaves
    no partial checkpoint behind.
    """
    run_data = load_run_data(cfg)
    model_config = _model_config(cfg, run_data.dataset)
    train_batch = records_batch(run_data, list(run_data.plan.train))

    valid_trials = None
    if cfg.n_valid_trials >= 2 and len(run_data.plan.valid) > 0:
        trial_list = datamod.make_verification_trials(
            run_data.dataset,
            list(run_data.plan.valid),
            cfg.n_valid_trials,
            seed=cfg.valid_trial_seed,
        )
        valid_trials = resolve_verification_trials(run_data.dataset, trial_list)

    result = modelmod.train(
        model_config,
        train_batch,
        valid_trials,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        seed=cfg.seed,
        base_lr=cfg.base_lr,
        decay_rate=cfg.decay_rate,
    )

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint_path = out / CHECKPOINT_NAME
    tmp = checkpoint_path.with_suffix(".tmp")
    modelmod.save_checkpoint(model_config, result.params, tmp)
    os.replace(tmp, checkpoint_path)

    history_path = out / HISTORY_NAME
    history_path.write_text(history_csv(result.history), encoding="utf-8")

    best_valid = None
    if result.best_epoch is not None:
        best_valid = result.history[result.best_epoch].valid_eer
    doc = {
        "run_config": cfg.to_json_dict(),
        "config_digest": cfg.digest(),
        "dataset_digest": datamod.dataset_digest(cfg.dataset_dir),
        "best_epoch": result.best_epoch,
        "best_valid_eer": best_valid,
        "checkpoint": checkpoint_path.name,
        "history": history_path.name,
    }
    run_doc_path = out / RUN_DOC_NAME
    run_doc_path.write_text(
        json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    return TrainRunResult(
        checkpoint_path=str(checkpoint_path),
        history_path=str(history_path),
        run_doc_path=str(run_doc_path),
        best_epoch=result.best_epoch,
        best_valid_eer=best_valid,
        final_train_loss=result.history[-1].train_loss if result.history else None,
        dataset_digest=doc["dataset_digest"],
        config_digest=doc["config_digest"],
        outputs=[str(checkpoint_path), str(history_path), str(run_doc_path)],
    )


@dataclass
class VerifyEvalResult:
    eer: float
    auc: float
    eer_threshold: float
    n_trials: int
    report_json_path: str
    report_csv_path: str
    trials_path: str
    trials_digest: str
    outputs: list[str]


def run_eval_verify(
    checkpoint_path: str,
    dataset_dir: str,
    out_dir: str,
    trials_path: str | None = None,
    split_mode: str = datamod.SEEN_HEARD,
    split_ratios: tuple[float, float, float] = (0.7, 0.15, 0.15),
    split_seed: int = 0,
    tag: str | None = None,
    n_trials: int = 2000,
    trial_seed: int = 202,
) -> VerifyEvalResult:
    """Score verification trials with a checkpoint and write the report.

    With no trials file, balanced trials are built from the dataset's test
    split (deterministically from the seeds) and written next to the report.
    """
    _, params = modelmod.load_checkpoint(checkpoint_path)
    dataset = datamod.load_dataset(dataset_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    outputs = []
    if trials_path is None:
        plan = datamod.make_splits(dataset, split_mode, split_ratios, seed=split_seed, tag=tag)
        trial_list = datamod.make_verification_trials(
            dataset, list(plan.test), n_trials, seed=trial_seed
        )
        trials_file = out / "verify_trials.csv"
        datamod.write_verification_trials(trial_list, trials_file)
        outputs.append(str(trials_file))
    else:
        trials_file = Path(trials_path)
        trial_list = datamod.load_verification_trials(trials_file)

    arrays = resolve_verification_trials(dataset, trial_list)
    scored = ScoredTrials(
        scores=modelmod.score_pairs(params, arrays.faces, arrays.voices),
        labels=arrays.labels,
    )
    eer_value, threshold = eer(scored)
    auc_value = auc(scored)

    args_echo = {
        "checkpoint": str(checkpoint_path),
        "dataset_dir": str(dataset_dir),
        "trials": str(trials_file),
        "split_mode": split_mode,
        "split_ratios": list(split_ratios),
        "split_seed": split_seed,
        "tag": tag,
        "n_trials": n_trials,
        "trial_seed": trial_seed,
    }
    # digest identifies what was evaluated (content, not filesystem layout),
    # so repeated runs into different directories emit byte-identical CSVs
    identity = {
        "checkpoint_digest": datamod.file_digest(checkpoint_path),
        "dataset_digest": datamod.dataset_digest(dataset_dir),
        "trials_digest": datamod.file_digest(trials_file),
        "split_mode": split_mode,
        "split_ratios": list(split_ratios),
        "split_seed": split_seed,
        "tag": tag,
        "n_trials": n_trials,
        "trial_seed": trial_seed,
    }
    config_digest = hashlib.sha256(
        json.dumps(identity, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()
    report = MetricsReport(
        eer=eer_value,
        auc=auc_value,
        eer_threshold=threshold,
        n_trials={"verification": len(trial_list.pairs)},
        seed=trial_seed,
        config_digest=config_digest,
        metadata={
            "eval_args": args_echo,
            "dataset_digest": identity["dataset_digest"],
            "trials_digest": identity["trials_digest"],
        },
    )
    report_json_path = out / "verify_report.json"
    report_csv_path = out / "verify_report.csv"
    write_report_json(report, report_json_path)
    write_report_csv(report, report_csv_path)
    outputs.extend([str(report_json_path), str(report_csv_path)])
    return VerifyEvalResult(
        eer=eer_value,
        auc=auc_value,
        eer_threshold=threshold,
        n_trials=len(trial_list.pairs),
        report_json_path=str(report_json_path),
        report_csv_path=str(report_csv_path),
        trials_path=str(trials_file),
        trials_digest=report.metadata["trials_digest"],
        outputs=outputs,
    )


def _match_outcomes(
    params: modelmod.ModelParams,
    dataset: datamod.Dataset,
    trials: datamod.MatchingTrialList,
) -> list[tuple[int, int]]:
    index = dataset.by_instance()
    outcomes = []
    for t in trials.trials:
        probe_rec = index.get(t.probe_id)
        if probe_rec is None:
            raise InvalidArgumentError(f"trial references unknown instance {t.probe_id!r}")
        if t.probe_modality == datamod.VOICE:
            probe = probe_rec.voice.astype(np.float64)
            gallery = np.stack([index[g].face for g in t.gallery_ids]).astype(np.float64)
        else:
            probe = probe_rec.face.astype(np.float64)
            gallery = np.stack([index[g].voice for g in t.gallery_ids]).astype(np.float64)
        predicted = modelmod.match_probe(params, probe, t.probe_modality, gallery)
        outcomes.append((predicted, t.answer))
    return outcomes


@dataclass
class MatchEvalResult:
    accuracy_by_gallery_size: dict[int, float]
    curve_csv_path: str
    report_json_path: str
    trials_digests: dict[int, str]
    outputs: list[str]


def run_eval_match(
    checkpoint_path: str,
    dataset_dir: str,
    out_dir: str,
    trials_path: str | None = None,
    split_mode: str = datamod.SEEN_HEARD,
    split_ratios: tuple[float, float, float] = (0.7, 0.15, 0.15),
    split_seed: int = 0,
    tag: str | None = None,
    gallery_sizes: tuple[int, ...] = (2, 4, 6, 8, 10),
    n_trials: int = 1000,
    trial_seed: int = 300,
    probe_modality: str = datamod.VOICE,
) -> MatchEvalResult:
    """Gallery-matching evaluation producing the accuracy-vs-gallery-size curve.

    With an explicit trials file only that list (one gallery size) is scored;
    otherwise one trial list per requested gallery size is built from the test
    split, written next to the report, and scored.
    """
    _, params = modelmod.load_checkpoint(checkpoint_path)
    dataset = datamod.load_dataset(dataset_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    outputs = []
    accuracy: dict[int, float] = {}
    digests: dict[int, str] = {}
    if trials_path is not None:
        trials = datamod.load_matching_trials(trials_path)
        accuracy[trials.n_c] = matching_accuracy(
            _match_outcomes(params, dataset, trials), trials.n_c
        )
        digests[trials.n_c] = datamod.file_digest(trials_path)
    else:
        plan = datamod.make_splits(dataset, split_mode, split_ratios, seed=split_seed, tag=tag)
        for n_c in sorted(set(gallery_sizes)):
            trials = datamod.make_matching_trials(
                dataset,
                list(plan.test),
                n_c,
                n_trials,
                probe_modality=probe_modality,
                seed=trial_seed + n_c,
            )
            trials_file = out / f"match_trials_nc{n_c}.jsonl"
            datamod.write_matching_trials(trials, trials_file)
            outputs.append(str(trials_file))
            accuracy[n_c] = matching_accuracy(
                _match_outcomes(params, dataset, trials), n_c
            )
            digests[n_c] = datamod.file_digest(trials_file)

    curve_path = out / "matching_curve.csv"
    write_matching_curve_csv(accuracy, curve_path)

    args_echo = {
        "checkpoint": str(checkpoint_path),
        "dataset_dir": str(dataset_dir),
        "trials": trials_path,
        "split_mode": split_mode,
        "split_ratios": list(split_ratios),
        "split_seed": split_seed,
        "tag": tag,
        "gallery_sizes": sorted(set(int(g) for g in gallery_sizes)),
        "n_trials": n_trials,
        "trial_seed": trial_seed,
        "probe_modality": probe_modality,
    }
    identity = dict(args_echo)
    del identity["checkpoint"], identity["dataset_dir"], identity["trials"]
    identity["checkpoint_digest"] = datamod.file_digest(checkpoint_path)
    identity["dataset_digest"] = datamod.dataset_digest(dataset_dir)
    identity["trials_digests"] = {str(k): v for k, v in sorted(digests.items())}
    config_digest = hashlib.sha256(
        json.dumps(identity, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()
    report = MetricsReport(
        matching_accuracy=accuracy,
        n_trials={f"matching_{n_c}": n_trials for n_c in accuracy},
        seed=trial_seed,
        config_digest=config_digest,
        metadata={
            "eval_args": args_echo,
            "dataset_digest": datamod.dataset_digest(dataset_dir),
            "trials_digests": {str(k): v for k, v in sorted(digests.items())},
        },
    )
    report_path = out / "match_report.json"
    write_report_json(report, report_path)
    outputs.extend([str(curve_path), str(report_path)])
    return MatchEvalResult(
        accuracy_by_gallery_size=accuracy,
        curve_csv_path=str(curve_path),
        report_json_path=str(report_path),
        trials_digests=digests,
        outputs=outputs,
    )


@dataclass
class AblationCell:
    variant: str
    seed: int
    eer: float
    auc: float
    accuracy_by_gallery_size: dict[int, float]


@dataclass
class AblateResult:
    cells: list[AblationCell]
    csv_path: str
    report_json_path: str
    trials_digest: str
    outputs: list[str]


def ablation_csv(cells: list[AblationCell], variants: list[str], gallery_sizes) -> str:
    sizes = sorted(set(int(g) for g in gallery_sizes))
    header = "variant,seed,eer,auc," + ",".join(f"acc_{n}" for n in sizes)
    lines = [header]
    for cell in cells:
        accs = ",".join(_float_cell(cell.accuracy_by_gallery_size[n]) for n in sizes)
        lines.append(f"{cell.variant},{cell.seed},{_float_cell(cell.eer)},{_float_cell(cell.auc)},{accs}")
    for variant in variants:
        rows = [c for c in cells if c.variant == variant]
        eers = np.array([c.eer for c in rows])
        aucs = np.array([c.auc for c in rows])
        acc_mat = {n: np.array([c.accuracy_by_gallery_size[n] for c in rows]) for n in sizes}
        for stat, fn in (("mean", np.mean), ("std", np.std)):
            accs = ",".join(_float_cell(float(fn(acc_mat[n]))) for n in sizes)
            lines.append(
                f"{variant},{stat},{_float_cell(float(fn(eers)))},{_float_cell(float(fn(aucs)))},{accs}"
            )
    return "\n".join(lines) + "\n"


def run_ablate(
    cfg: RunConfig,
    variants: list[str],
    seeds: list[int],
) -> AblateResult:
    """Train and evaluate every (variant, seed) cell on one shared split and
    shared trial lists, then emit per-run plus mean/std rows.

    Unless the config pins embed_dim explicitly, every variant runs at
    n_speakers - 1 so the comparison isolates the fixed separation matrix and
    the pair loss rather than head width.
    """
    for v in variants:
        if v not in modelmod.VARIANTS:
            raise InvalidArgumentError(f"unknown variant {v!r}")
    if not variants or not seeds:
        raise InvalidArgumentError("need at least one variant and one seed")

    run_data = load_run_data(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_batch = records_batch(run_data, list(run_data.plan.train))

    valid_list = datamod.make_verification_trials(
        run_data.dataset, list(run_data.plan.valid), cfg.n_valid_trials, seed=cfg.valid_trial_seed
    )
    valid_trials = resolve_verification_trials(run_data.dataset, valid_list)

    verify_list = datamod.make_verification_trials(
        run_data.dataset, list(run_data.plan.test), cfg.n_verify_trials, seed=cfg.verify_trial_seed
    )
    verify_file = out / "verify_trials.csv"
    datamod.write_verification_trials(verify_list, verify_file)
    verify_arrays = resolve_verification_trials(run_data.dataset, verify_list)

    match_lists: dict[int, datamod.MatchingTrialList] = {}
    match_files: list[str] = []
    for n_c in sorted(set(cfg.gallery_sizes)):
        trials = datamod.make_matching_trials(
            run_data.dataset,
            list(run_data.plan.test),
            n_c,
            cfg.n_match_trials,
            probe_modality=cfg.probe_modality,
            seed=cfg.match_trial_seed + n_c,
        )
        path = out / f"match_trials_nc{n_c}.jsonl"
        datamod.write_matching_trials(trials, path)
        match_files.append(str(path))
        match_lists[n_c] = trials

    n_speakers = len(run_data.speaker_ids)
    cells: list[AblationCell] = []
    for variant in variants:
        embed = cfg.embed_dim if cfg.embed_dim is not None else n_speakers - 1
        model_config = modelmod.make_config(
            n_speakers=n_speakers,
            face_in_dim=run_data.dataset.face_dim,
            voice_in_dim=run_data.dataset.voice_dim,
            variant=variant,
            embed_dim=embed,
            alpha=cfg.alpha,
            dropout_rate=cfg.dropout_rate,
            oc_normalization=cfg.oc_normalization,
            oc_pair_scope=cfg.oc_pair_scope,
            renormalize_fused=cfg.renormalize_fused,
        )
        for seed in seeds:
            result = modelmod.train(
                model_config,
                train_batch,
                valid_trials,
                epochs=cfg.epochs,
                batch_size=cfg.batch_size,
                seed=seed,
                base_lr=cfg.base_lr,
                decay_rate=cfg.decay_rate,
            )
            scored = ScoredTrials(
                scores=modelmod.score_pairs(result.params, verify_arrays.faces, verify_arrays.voices),
                labels=verify_arrays.labels,
            )
            eer_value, _ = eer(scored)
            accuracy = {
                n_c: matching_accuracy(
                    _match_outcomes(result.params, run_data.dataset, match_lists[n_c]), n_c
                )
                for n_c in match_lists
            }
            cells.append(
                AblationCell(
                    variant=variant,
                    seed=seed,
                    eer=eer_value,
                    auc=auc(scored),
                    accuracy_by_gallery_size=accuracy,
                )
            )

    csv_path = out / "ablation.csv"
    csv_path.write_text(ablation_csv(cells, variants, cfg.gallery_sizes), encoding="utf-8")

    doc = {
        "run_config": cfg.to_json_dict(),
        "config_digest": cfg.digest(),
        "variants": variants,
        "seeds": seeds,
        "dataset_digest": datamod.dataset_digest(cfg.dataset_dir),
        "verify_trials_digest": datamod.file_digest(verify_file),
        "match_trials_digests": {
            str(n_c): datamod.file_digest(out / f"match_trials_nc{n_c}.jsonl")
            for n_c in match_lists
        },
        "cells": [
            {
                "variant": c.variant,
                "seed": c.seed,
                "eer": c.eer,
                "auc": c.auc,
                "matching_accuracy": {str(k): v for k, v in sorted(c.accuracy_by_gallery_size.items())},
            }
            for c in cells
        ],
    }
    report_path = out / "ablation.json"
    report_path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return AblateResult(
        cells=cells,
        csv_path=str(csv_path),
        report_json_path=str(report_path),
        trials_digest=doc["verify_trials_digest"],
        outputs=[str(verify_file), *match_files, str(csv_path), str(report_path)],
    )
