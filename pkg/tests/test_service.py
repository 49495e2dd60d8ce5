import numpy as np
import pytest

from facevoice import model as modelmod
from facevoice.model import CE, FOP, init_params, make_config, save_checkpoint

from conftest import SMALL_SPEC


@pytest.fixture()
def dataset_dir(client, tmp_path):
    payload = {
        "out_dir": str(tmp_path / "ds"),
        "n_speakers": SMALL_SPEC.n_speakers,
        "instances_per_speaker": SMALL_SPEC.instances_per_speaker,
        "latent_dim": SMALL_SPEC.latent_dim,
        "face_dim": SMALL_SPEC.face_dim,
        "voice_dim": SMALL_SPEC.voice_dim,
        "noise_sigma": SMALL_SPEC.noise_sigma,
        "seed": SMALL_SPEC.seed,
    }
    doc = client.post("/datasets/generate", json=payload).json()
    return doc["dataset_dir"]


@pytest.fixture()
def checkpoint(client, dataset_dir, tmp_path):
    payload = {
        "dataset_dir": dataset_dir,
        "out_dir": str(tmp_path / "run"),
        "variant": FOP,
        "embed_dim": 16,
        "epochs": 2,
        "batch_size": 16,
        "n_valid_trials": 40,
    }
    doc = client.post("/runs/train", json=payload).json()
    return doc["checkpoint_path"]


def test_health(client):
    doc = client.get("/health").json()
    assert doc["status"] == "ok"


def test_generate_is_deterministic(client, tmp_path):
    payload = {"out_dir": str(tmp_path / "a"), "seed": 4, "n_speakers": 4,
               "instances_per_speaker": 3, "latent_dim": 4, "face_dim": 8, "voice_dim": 8}
    first = client.post("/datasets/generate", json=payload).json()
    payload["out_dir"] = str(tmp_path / "b")
    second = client.post("/datasets/generate", json=payload).json()
    assert first["dataset_digest"] == second["dataset_digest"]


def test_generate_invalid_sigma_is_400(client, tmp_path):
    response = client.post(
        "/datasets/generate", json={"out_dir": str(tmp_path / "x"), "noise_sigma": -1.0}
    )
    assert response.status_code == 400
    assert "noise_sigma" in response.json()["detail"]


def test_train_then_eval_verify(client, dataset_dir, checkpoint, tmp_path):
    doc = client.post(
        "/runs/eval-verify",
        json={
            "checkpoint_path": checkpoint,
            "dataset_dir": dataset_dir,
            "out_dir": str(tmp_path / "ev"),
            "n_trials": 60,
        },
    ).json()
    assert 0.0 <= doc["eer"] <= 1.0
    assert 0.0 <= doc["auc"] <= 1.0
    assert doc["outputs"]


def test_eval_match_curve(client, dataset_dir, checkpoint, tmp_path):
    doc = client.post(
        "/runs/eval-match",
        json={
            "checkpoint_path": checkpoint,
            "dataset_dir": dataset_dir,
            "out_dir": str(tmp_path / "em"),
            "gallery_sizes": [2, 4],
            "n_trials": 30,
        },
    ).json()
    assert set(doc["accuracy_by_gallery_size"]) == {"2", "4"}


def test_ablate_single_cell(client, dataset_dir, tmp_path):
    doc = client.post(
        "/runs/ablate",
        json={
            "dataset_dir": dataset_dir,
            "out_dir": str(tmp_path / "ab"),
            "embed_dim": 16,
            "epochs": 1,
            "batch_size": 16,
            "n_valid_trials": 40,
            "n_verify_trials": 40,
            "gallery_sizes": [2],
            "n_match_trials": 20,
            "variants": ["CE"],
            "seeds": [0],
        },
    ).json()
    assert len(doc["cells"]) == 1
    assert doc["cells"][0]["variant"] == "CE"


def test_score_endpoint_matches_library(client, tmp_path):
    cfg = make_config(4, 6, 6, variant=CE, embed_dim=8)
    params = init_params(cfg, 13)
    path = tmp_path / "m.ckpt"
    save_checkpoint(cfg, params, path)
    rng = np.random.default_rng(3)
    face = np.abs(rng.standard_normal(6)) + 0.5
    voice = np.abs(rng.standard_normal(6)) + 0.5
    doc = client.post(
        "/score",
        json={"checkpoint_path": str(path), "face": face.tolist(), "voice": voice.tolist()},
    ).json()
    assert doc["score"] == pytest.approx(modelmod.score_pair(params, face, voice), abs=1e-12)


def test_match_endpoint_matches_library(client, tmp_path):
    cfg = make_config(4, 6, 6, variant=CE, embed_dim=8)
    params = init_params(cfg, 14)
    path = tmp_path / "m.ckpt"
    save_checkpoint(cfg, params, path)
    rng = np.random.default_rng(4)
    probe = np.abs(rng.standard_normal(6)) + 0.5
    gallery = np.abs(rng.standard_normal((5, 6))) + 0.5
    doc = client.post(
        "/match",
        json={
            "checkpoint_path": str(path),
            "probe": probe.tolist(),
            "probe_modality": "voice",
            "gallery": gallery.tolist(),
        },
    ).json()
    expected = modelmod.match_probe(params, probe, "voice", gallery)
    assert doc["best_index"] == expected
    assert len(doc["scores"]) == 5
    assert int(np.argmax(doc["scores"])) == expected


def test_missing_checkpoint_is_404(client, tmp_path):
    response = client.post(
        "/score",
        json={"checkpoint_path": str(tmp_path / "nope.ckpt"), "face": [1.0], "voice": [1.0]},
    )
    assert response.status_code == 404


def test_unknown_variant_is_400(client, dataset_dir, tmp_path):
    good = client.post(
        "/runs/train",
        json={"dataset_dir": dataset_dir, "out_dir": str(tmp_path / "r"),
              "epochs": 1, "variant": "FOP", "embed_dim": 16, "batch_size": 16,
              "n_valid_trials": 40},
    )
    assert good.status_code == 200
    bad = client.post(
        "/runs/train",
        json={"dataset_dir": dataset_dir, "out_dir": str(tmp_path / "r2"),
              "epochs": 1, "variant": "UNKNOWN"},
    )
    assert bad.status_code == 400


def test_single_class_trials_are_400(client, dataset_dir, checkpoint, tmp_path):
    trials = tmp_path / "pos.csv"
    trials.write_text("face_id,voice_id,label\nspk0000_i000,spk0000_i001,1\nspk0000_i002,spk0000_i003,1\n")
    response = client.post(
        "/runs/eval-verify",
        json={
            "checkpoint_path": checkpoint,
            "dataset_dir": dataset_dir,
            "out_dir": str(tmp_path / "ev"),
            "trials_path": str(trials),
        },
    )
    assert response.status_code == 400
