"""FastAPI service exposing dataset generation, runs, and live scoring.

The run endpoints execute synchronously (desk-scale jobs take seconds to
minutes) and write their artifacts on the server's filesystem; responses list
every file written. Paths in requests are resolved on the server host.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from .. import data as datamod
from .. import model as modelmod
from .. import runs
from ..errors import FaceVoiceError, NumericFailureError
from . import schemas


_CHECKPOINT_CACHE: dict[tuple[str, int, int], tuple[modelmod.ModelConfig, modelmod.ModelParams]] = {}
_CHECKPOINT_CACHE_LIMIT = 4


def _load_checkpoint_cached(path: str):
    stat = os.stat(path)
    key = (os.path.abspath(path), stat.st_mtime_ns, stat.st_size)
    if key not in _CHECKPOINT_CACHE:
        if len(_CHECKPOINT_CACHE) >= _CHECKPOINT_CACHE_LIMIT:
            _CHECKPOINT_CACHE.pop(next(iter(_CHECKPOINT_CACHE)))
        _CHECKPOINT_CACHE[key] = modelmod.load_checkpoint(path)
    return _CHECKPOINT_CACHE[key]


def create_app() -> FastAPI:
    app = FastAPI(
        title="facevoice",
        version=__version__,
        description="Face-voice association: training, evaluation, and scoring.",
    )

    @app.exception_handler(FaceVoiceError)
    async def facevoice_error(request: Request, exc: FaceVoiceError):
        status = 500 if isinstance(exc, NumericFailureError) else 400
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.exception_handler(FileNotFoundError)
    async def missing_file(request: Request, exc: FileNotFoundError):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/datasets/generate", response_model=schemas.GenerateResponse)
    def generate(req: schemas.GenerateRequest):
        spec = datamod.SyntheticSpec(
            n_speakers=req.n_speakers,
            instances_per_speaker=req.instances_per_speaker,
            latent_dim=req.latent_dim,
            face_dim=req.face_dim,
            voice_dim=req.voice_dim,
            noise_sigma=req.noise_sigma,
            seed=req.seed,
            tag=req.tag,
        )
        result = runs.run_generate(spec, req.out_dir)
        return schemas.GenerateResponse(**result.__dict__)

    @app.post("/runs/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest):
        result = runs.run_train(req.to_run_config())
        return schemas.TrainResponse(**result.__dict__)

    @app.post("/runs/eval-verify", response_model=schemas.VerifyEvalResponse)
    def eval_verify(req: schemas.VerifyEvalRequest):
        result = runs.run_eval_verify(
            checkpoint_path=req.checkpoint_path,
            dataset_dir=req.dataset_dir,
            out_dir=req.out_dir,
            trials_path=req.trials_path,
            split_mode=req.split_mode,
            split_ratios=tuple(req.split_ratios),
            split_seed=req.split_seed,
            tag=req.tag,
            n_trials=req.n_trials,
            trial_seed=req.trial_seed,
        )
        return schemas.VerifyEvalResponse(**result.__dict__)

    @app.post("/runs/eval-match", response_model=schemas.MatchEvalResponse)
    def eval_match(req: schemas.MatchEvalRequest):
        result = runs.run_eval_match(
            checkpoint_path=req.checkpoint_path,
            dataset_dir=req.dataset_dir,
            out_dir=req.out_dir,
            trials_path=req.trials_path,
            split_mode=req.split_mode,
            split_ratios=tuple(req.split_ratios),
            split_seed=req.split_seed,
            tag=req.tag,
            gallery_sizes=tuple(req.gallery_sizes),
            n_trials=req.n_trials,
            trial_seed=req.trial_seed,
            probe_modality=req.probe_modality,
        )
        return schemas.MatchEvalResponse(**result.__dict__)

    @app.post("/runs/ablate", response_model=schemas.AblateResponse)
    def ablate(req: schemas.AblateRequest):
        cfg = schemas.TrainRequest(
            **req.model_dump(exclude={"variants", "seeds"})
        ).to_run_config()
        result = runs.run_ablate(cfg, list(req.variants), list(req.seeds))
        return schemas.AblateResponse(
            cells=[
                schemas.AblationCellModel(
                    variant=c.variant,
                    seed=c.seed,
                    eer=c.eer,
                    auc=c.auc,
                    accuracy_by_gallery_size=c.accuracy_by_gallery_size,
                )
                for c in result.cells
            ],
            csv_path=result.csv_path,
            report_json_path=result.report_json_path,
            trials_digest=result.trials_digest,
            outputs=result.outputs,
        )

    @app.post("/score", response_model=schemas.ScoreResponse)
    def score(req: schemas.ScoreRequest):
        _, params = _load_checkpoint_cached(req.checkpoint_path)
        value = modelmod.score_pair(
            params, np.asarray(req.face, dtype=np.float64), np.asarray(req.voice, dtype=np.float64)
        )
        return schemas.ScoreResponse(score=value)

    @app.post("/match", response_model=schemas.MatchResponse)
    def match(req: schemas.MatchRequest):
        _, params = _load_checkpoint_cached(req.checkpoint_path)
        gallery = np.asarray(req.gallery, dtype=np.float64)
        probe = np.asarray(req.probe, dtype=np.float64)
        best = modelmod.match_probe(params, probe, req.probe_modality, gallery)
        if req.probe_modality == "voice":
            probe_emb = modelmod.embed_voice(params, probe)
            items = modelmod.embed_face(params, gallery)
        else:
            probe_emb = modelmod.embed_face(params, probe)
            items = modelmod.embed_voice(params, gallery)
        scores = (items @ probe_emb).tolist()
        return schemas.MatchResponse(best_index=best, scores=scores)

    return app
