import numpy as np
import pytest
from hypothesis import settings

from facevoice import data as datamod
from facevoice import model as modelmod

settings.register_profile("suite", deadline=None, max_examples=60)
settings.load_profile("suite")


SMALL_SPEC = datamod.SyntheticSpec(
    n_speakers=8,
    instances_per_speaker=10,
    latent_dim=8,
    face_dim=16,
    voice_dim=12,
    noise_sigma=0.3,
    seed=1,
)


@pytest.fixture(scope="session")
def small_dataset():
    return datamod.gen_synthetic(SMALL_SPEC)


@pytest.fixture(scope="session")
def small_dataset_dir(tmp_path_factory, small_dataset):
    root = tmp_path_factory.mktemp("smallds") / "data"
    datamod.write_dataset(small_dataset, root)
    return root


@pytest.fixture()
def client():
    from starlette.testclient import TestClient

    from facevoice.service import create_app

    return TestClient(create_app(), raise_server_exceptions=False)


def batch_from(dataset, instance_ids):
    index = dataset.by_instance()
    speakers = dataset.speaker_ids
    spk_idx = {s: i for i, s in enumerate(speakers)}
    recs = [index[i] for i in instance_ids]
    return modelmod.Batch(
        faces=np.stack([r.face for r in recs]).astype(np.float64),
        voices=np.stack([r.voice for r in recs]).astype(np.float64),
        labels=np.array([spk_idx[r.speaker_id] for r in recs]),
    )


def trials_from(dataset, instance_ids, n, seed):
    trial_list = datamod.make_verification_trials(dataset, instance_ids, n, seed=seed)
    index = dataset.by_instance()
    return modelmod.TrialArrays(
        faces=np.stack([index[a].face for a, _, _ in trial_list.pairs]).astype(np.float64),
        voices=np.stack([index[b].voice for _, b, _ in trial_list.pairs]).astype(np.float64),
        labels=np.array([label for _, _, label in trial_list.pairs]),
    )
