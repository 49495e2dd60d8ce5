"""Embedding datasets: ingestion, synthetic generation, splits, and trial lists.

A dataset is a list of records, each holding one instance's raw face vector,
raw voice vector, and speaker id. Raw vectors stand in for the outputs of
frozen upstream encoders and are stored as float32; all generators and split
or trial builders are pure functions of their inputs and a seed.

On-disk layout of a dataset directory:
    manifest.json   dims, record count, ordered instance/speaker id table, tags
    faces.f32le     row-major little-endian float32, one row per record
    voices.f32le    same, row order identical to the manifest
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetFormatError, InvalidArgumentError

SEEN_HEARD = "seen_heard"
UNSEEN_UNHEARD = "unseen_unheard"
SPLIT_MODES = (SEEN_HEARD, UNSEEN_UNHEARD)

FACE = "face"
VOICE = "voice"
MODALITIES = (FACE, VOICE)


@dataclass(frozen=True)
class EmbeddingRecord:
    """One instance: raw face vector, raw voice vector, speaker label."""

    instance_id: str
    speaker_id: str
    face: np.ndarray
    voice: np.ndarray
    tag: str | None = None


@dataclass
class Dataset:
    face_dim: int
    voice_dim: int
    records: list[EmbeddingRecord]

    def __post_init__(self) -> None:
        if not self.records:
            raise InvalidArgumentError("dataset must contain at least one record")
        seen: set[str] = set()
        for rec in self.records:
            if rec.instance_id in seen:
                raise InvalidArgumentError(f"duplicate instance id {rec.instance_id!r}")
            seen.add(rec.instance_id)
            if rec.face.shape != (self.face_dim,):
                raise InvalidArgumentError(
                    f"record {rec.instance_id!r}: face vector has shape "
                    f"{rec.face.shape}, expected ({self.face_dim},)"
                )
            if rec.voice.shape != (self.voice_dim,):
                raise InvalidArgumentError(
                    f"record {rec.instance_id!r}: voice vector has shape "
                    f"{rec.voice.shape}, expected ({self.voice_dim},)"
                )

    def __len__(self) -> int:
        return len(self.records)

    @property
    def speaker_ids(self) -> list[str]:
        return sorted({rec.speaker_id for rec in self.records})

    def by_instance(self) -> dict[str, EmbeddingRecord]:
        return {rec.instance_id: rec for rec in self.records}

    def speakers_of(self, instance_ids: list[str]) -> set[str]:
        index = self.by_instance()
        return {index[i].speaker_id for i in instance_ids}


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic dataset standing in for frozen encoder outputs.

    Every speaker gets a unit latent identity vector; each instance observes
    that identity through independent per-modality Gaussian noise and a fixed
    random lifting map with orthonormal columns into the raw dimension.
    ``noise_sigma`` is the noise-to-signal ratio: the noise vector has expected
    norm ~ sigma times the unit identity norm (per-coordinate std is
    sigma / sqrt(latent_dim)).
    """

    n_speakers: int = 32
    instances_per_speaker: int = 20
    latent_dim: int = 16
    face_dim: int = 64
    voice_dim: int = 64
    noise_sigma: float = 0.3
    seed: int = 0
    tag: str | None = None

    def __post_init__(self) -> None:
        for name in ("n_speakers", "instances_per_speaker", "latent_dim", "face_dim", "voice_dim"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be positive, got {getattr(self, name)}")
        if self.noise_sigma < 0:
            raise InvalidArgumentError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.face_dim < self.latent_dim or self.voice_dim < self.latent_dim:
            raise InvalidArgumentError(
                "face_dim and voice_dim must be >= latent_dim so the lifting "
                "maps can have orthonormal columns"
            )


def _orthonormal_columns(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q


def gen_synthetic(spec: SyntheticSpec) -> Dataset:
    """Generate a dataset per the spec; deterministic per seed.

    Noise is drawn as standard normals scaled by sigma, so datasets generated
    from the same seed at different sigmas share identical speaker latents,
    lifting maps, and underlying noise draws.
    """
    rng = np.random.default_rng(spec.seed)
    latents = rng.standard_normal((spec.n_speakers, spec.latent_dim))
    latents /= np.linalg.norm(latents, axis=1, keepdims=True)
    lift_face = _orthonormal_columns(rng, spec.face_dim, spec.latent_dim)
    lift_voice = _orthonormal_columns(rng, spec.voice_dim, spec.latent_dim)
    shape = (spec.n_speakers, spec.instances_per_speaker, spec.latent_dim)
    coord_std = spec.noise_sigma / np.sqrt(spec.latent_dim)
    eps_face = coord_std * rng.standard_normal(shape)
    eps_voice = coord_std * rng.standard_normal(shape)

    records = []
    for s in range(spec.n_speakers):
        speaker_id = f"spk{s:04d}"
        for i in range(spec.instances_per_speaker):
            face = (lift_face @ (latents[s] + eps_face[s, i])).astype(np.float32)
            voice = (lift_voice @ (latents[s] + eps_voice[s, i])).astype(np.float32)
            records.append(
                EmbeddingRecord(
                    instance_id=f"{speaker_id}_i{i:03d}",
                    speaker_id=speaker_id,
                    face=face,
                    voice=voice,
                    tag=spec.tag,
                )
            )
    return Dataset(face_dim=spec.face_dim, voice_dim=spec.voice_dim, records=records)


def write_dataset(dataset: Dataset, path) -> None:
    """Write a dataset directory (manifest.json, faces.f32le, voices.f32le)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "face_dim": dataset.face_dim,
        "voice_dim": dataset.voice_dim,
        "n_records": len(dataset.records),
        "records": [
            {"instance": rec.instance_id, "speaker": rec.speaker_id, "tag": rec.tag}
            for rec in dataset.records
        ],
    }
    (root / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    faces = np.stack([rec.face for rec in dataset.records]).astype("<f4")
    voices = np.stack([rec.voice for rec in dataset.records]).astype("<f4")
    (root / "faces.f32le").write_bytes(faces.tobytes(order="C"))
    (root / "voices.f32le").write_bytes(voices.tobytes(order="C"))


def _read_rows(path: Path, n_records: int, dim: int, what: str) -> np.ndarray:
    if not path.is_file():
        raise DatasetFormatError(f"missing {what} file {path}")
    blob = path.read_bytes()
    expected = n_records * dim * 4
    if len(blob) != expected:
        have_floats = len(blob) // 4
        broken_record = min(have_floats // dim, n_records - 1)
        raise DatasetFormatError(
            f"{path.name}: expected {expected} bytes for {n_records} rows of "
            f"{dim} float32, got {len(blob)} (first incomplete record index "
            f"{broken_record})"
        )
    return np.frombuffer(blob, dtype="<f4").reshape(n_records, dim)


def load_dataset(path) -> Dataset:
    """Load a dataset directory; malformed input raises DatasetFormatError."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise DatasetFormatError(f"missing manifest {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"manifest is not valid JSON: {exc}") from exc

    for key in ("face_dim", "voice_dim", "n_records", "records"):
        if key not in manifest:
            raise DatasetFormatError(f"manifest missing key {key!r}")
    face_dim = int(manifest["face_dim"])
    voice_dim = int(manifest["voice_dim"])
    rows = manifest["records"]
    if len(rows) != manifest["n_records"]:
        raise DatasetFormatError(
            f"manifest n_records={manifest['n_records']} but {len(rows)} records listed"
        )
    if not rows:
        raise DatasetFormatError("dataset has no records (every speaker needs >= 1)")

    faces = _read_rows(root / "faces.f32le", len(rows), face_dim, "face")
    voices = _read_rows(root / "voices.f32le", len(rows), voice_dim, "voice")

    seen: set[str] = set()
    records = []
    for k, row in enumerate(rows):
        if "instance" not in row or "speaker" not in row:
            raise DatasetFormatError(f"record {k}: needs 'instance' and 'speaker'")
        if row["instance"] in seen:
            raise DatasetFormatError(f"record {k}: duplicate instance id {row['instance']!r}")
        seen.add(row["instance"])
        records.append(
            EmbeddingRecord(
                instance_id=row["instance"],
                speaker_id=row["speaker"],
                face=faces[k].copy(),
                voice=voices[k].copy(),
                tag=row.get("tag"),
            )
        )
    return Dataset(face_dim=face_dim, voice_dim=voice_dim, records=records)


def file_digest(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def dataset_digest(path) -> str:
    """Digest of a dataset directory (manifest + both vector files)."""
    root = Path(path)
    h = hashlib.sha256()
    for name in ("manifest.json", "faces.f32le", "voices.f32le"):
        h.update(name.encode())
        h.update((root / name).read_bytes())
    return h.hexdigest()


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint train/valid/test instance-id lists under a split discipline."""

    mode: str
    train: tuple[str, ...]
    valid: tuple[str, ...]
    test: tuple[str, ...]

    def validate(self, dataset: Dataset) -> None:
        groups = (set(self.train), set(self.valid), set(self.test))
        for a in range(3):
            for b in range(a + 1, 3):
                overlap = groups[a] & groups[b]
                if overlap:
                    raise InvalidArgumentError(
                        f"instance ids in two splits: {sorted(overlap)[:3]}"
                    )
        train_speakers = dataset.speakers_of(list(self.train))
        test_speakers = dataset.speakers_of(list(self.test))
        if self.mode == SEEN_HEARD and not test_speakers <= train_speakers:
            raise InvalidArgumentError("seen-heard: test speakers must appear in train")
        if self.mode == UNSEEN_UNHEARD and train_speakers & test_speakers:
            raise InvalidArgumentError("unseen-unheard: train and test speakers overlap")


def _check_ratios(ratios: tuple[float, float, float]) -> None:
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise InvalidArgumentError(f"ratios must be three non-negative reals, got {ratios}")
    if not math.isclose(sum(ratios), 1.0, abs_tol=1e-6):
        raise InvalidArgumentError(f"ratios must sum to 1, got {ratios}")
    if ratios[0] <= 0:
        raise InvalidArgumentError("train ratio must be positive")


def make_splits(
    dataset: Dataset,
    mode: str,
    ratios: tuple[float, float, float] = (0.7, 0.15, 0.15),
    seed: int = 0,
    tag: str | None = None,
) -> SplitPlan:
    """Build a split plan; deterministic per seed.

    seen-heard distributes each speaker's instances across the three splits
    (every speaker keeps at least one training instance); unseen-unheard
    assigns whole speakers to splits, so test speakers are never trained on.
    ``tag`` restricts the plan to records carrying that tag.
    """
    _check_ratios(ratios)
    if mode not in SPLIT_MODES:
        raise InvalidArgumentError(f"unknown split mode {mode!r}")
    records = [r for r in dataset.records if tag is None or r.tag == tag]
    if not records:
        raise InvalidArgumentError(f"no records with tag {tag!r}")
    rng = np.random.default_rng(seed)

    by_speaker: dict[str, list[str]] = {}
    for rec in records:
        by_speaker.setdefault(rec.speaker_id, []).append(rec.instance_id)
    speakers = sorted(by_speaker)

    train: list[str] = []
    valid: list[str] = []
    test: list[str] = []
    if mode == SEEN_HEARD:
        for spk in speakers:
            ids = sorted(by_speaker[spk])
            ids = [ids[k] for k in rng.permutation(len(ids))]
            n = len(ids)
            n_test = int(n * ratios[2])
            n_valid = int(n * ratios[1])
            n_train = n - n_test - n_valid
            if n_train < 1:  # keep each speaker seen during training
                deficit = 1 - n_train
                take = min(deficit, n_valid)
                n_valid -= take
                n_test -= deficit - take
                n_train = 1
            train.extend(ids[:n_train])
            valid.extend(ids[n_train : n_train + n_valid])
            test.extend(ids[n_train + n_valid :])
    else:
        if len(speakers) < 3:
            raise InvalidArgumentError(
                f"unseen-unheard needs >= 3 speakers, got {len(speakers)}"
            )
        order = [speakers[k] for k in rng.permutation(len(speakers))]
        n_s = len(order)
        n_test = max(1, int(n_s * ratios[2]))
        n_valid = max(1, int(n_s * ratios[1]))
        n_train = n_s - n_test - n_valid
        if n_train < 1:
            raise InvalidArgumentError(
                f"ratios {ratios} leave no training speakers out of {n_s}"
            )
        for k, spk in enumerate(order):
            target = train if k < n_train else valid if k < n_train + n_valid else test
            target.extend(sorted(by_speaker[spk]))

    plan = SplitPlan(mode=mode, train=tuple(train), valid=tuple(valid), test=tuple(test))
    plan.validate(dataset)
    return plan


@dataclass(frozen=True)
class VerificationTrialList:
    """Labeled face/voice instance pairs; label True means same speaker."""

    pairs: tuple[tuple[str, str, bool], ...]

    def __post_init__(self) -> None:
        labels = [label for _, _, label in self.pairs]
        if not any(labels) or all(labels):
            raise InvalidArgumentError(
                "verification trials need at least one positive and one negative"
            )


@dataclass(frozen=True)
class MatchingTrial:
    probe_id: str
    probe_modality: str
    gallery_ids: tuple[str, ...]
    answer: int


@dataclass(frozen=True)
class MatchingTrialList:
    trials: tuple[MatchingTrial, ...]
    n_c: int

    def __post_init__(self) -> None:
        if self.n_c < 2:
            raise InvalidArgumentError(f"gallery size must be >= 2, got {self.n_c}")
        for t in self.trials:
            if len(t.gallery_ids) != self.n_c or not (0 <= t.answer < self.n_c):
                raise InvalidArgumentError(
                    f"trial for probe {t.probe_id!r} inconsistent with n_c={self.n_c}"
                )


def _speaker_table(dataset: Dataset, instance_ids) -> dict[str, list[str]]:
    index = dataset.by_instance()
    table: dict[str, list[str]] = {}
    for iid in sorted(instance_ids):
        if iid not in index:
            raise InvalidArgumentError(f"unknown instance id {iid!r}")
        table.setdefault(index[iid].speaker_id, []).append(iid)
    return table


def make_verification_trials(
    dataset: Dataset,
    instance_ids,
    n_trials: int,
    seed: int = 0,
    same_instance: bool = False,
) -> VerificationTrialList:
    """Balanced verification pairs drawn (with replacement) from one split.

    floor(n_trials/2) positives pair a face and a voice of one speaker, by
    default from independently chosen instances; negatives pair distinct
    speakers. Deterministic per seed.
    """
    if n_trials < 2:
        raise InvalidArgumentError(f"need n_trials >= 2, got {n_trials}")
    table = _speaker_table(dataset, instance_ids)
    speakers = sorted(table)
    if len(speakers) < 2:
        raise InvalidArgumentError(
            f"need >= 2 speakers to form negative pairs, got {len(speakers)}"
        )
    rng = np.random.default_rng(seed)
    n_pos = n_trials // 2
    pairs: list[tuple[str, str, bool]] = []
    for _ in range(n_pos):
        spk = speakers[rng.integers(len(speakers))]
        ids = table[spk]
        face_id = ids[rng.integers(len(ids))]
        voice_id = face_id if same_instance else ids[rng.integers(len(ids))]
        pairs.append((face_id, voice_id, True))
    for _ in range(n_trials - n_pos):
        a = int(rng.integers(len(speakers)))
        b = int(rng.integers(len(speakers) - 1))
        if b >= a:
            b += 1
        face_ids = table[speakers[a]]
        voice_ids = table[speakers[b]]
        pairs.append(
            (
                face_ids[rng.integers(len(face_ids))],
                voice_ids[rng.integers(len(voice_ids))],
                False,
            )
        )
    return VerificationTrialList(pairs=tuple(pairs))


def make_matching_trials(
    dataset: Dataset,
    instance_ids,
    n_c: int,
    n_trials: int,
    probe_modality: str = VOICE,
    seed: int = 0,
) -> MatchingTrialList:
    """Probe-plus-gallery trials with exactly one same-speaker gallery member.

    The matching item comes from a different instance of the probe's speaker
    when one exists; the n_c - 1 distractors come from distinct other speakers.
    The answer position is uniform. Deterministic per seed.
    """
    if probe_modality not in MODALITIES:
        raise InvalidArgumentError(f"probe modality must be one of {MODALITIES}")
    if n_c < 2:
        raise InvalidArgumentError(f"gallery size must be >= 2, got {n_c}")
    if n_trials < 1:
        raise InvalidArgumentError(f"need n_trials >= 1, got {n_trials}")
    table = _speaker_table(dataset, instance_ids)
    speakers = sorted(table)
    if len(speakers) < n_c:
        raise InvalidArgumentError(
            f"gallery size {n_c} needs >= {n_c} speakers, split has {len(speakers)}"
        )
    rng = np.random.default_rng(seed)
    trials = []
    for _ in range(n_trials):
        s = int(rng.integers(len(speakers)))
        ids = table[speakers[s]]
        probe = ids[rng.integers(len(ids))]
        candidates = [i for i in ids if i != probe] or [probe]
        target = candidates[rng.integers(len(candidates))]
        others = rng.choice(len(speakers) - 1, size=n_c - 1, replace=False)
        others = [o + 1 if o >= s else o for o in others.tolist()]
        gallery = []
        for o in others:
            other_ids = table[speakers[o]]
            gallery.append(other_ids[rng.integers(len(other_ids))])
        answer = int(rng.integers(n_c))
        gallery.insert(answer, target)
        trials.append(
            MatchingTrial(
                probe_id=probe,
                probe_modality=probe_modality,
                gallery_ids=tuple(gallery),
                answer=answer,
            )
        )
    return MatchingTrialList(trials=tuple(trials), n_c=n_c)


def write_verification_trials(trials: VerificationTrialList, path) -> None:
    lines = ["face_id,voice_id,label"]
    for face_id, voice_id, label in trials.pairs:
        lines.append(f"{face_id},{voice_id},{1 if label else 0}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_verification_trials(path) -> VerificationTrialList:
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not text or text[0].strip() != "face_id,voice_id,label":
        raise DatasetFormatError(f"{path}: expected header 'face_id,voice_id,label'")
    pairs = []
    for lineno, line in enumerate(text[1:], start=2):
        parts = line.strip().split(",")
        if len(parts) != 3 or parts[2] not in ("0", "1"):
            raise DatasetFormatError(f"{path}:{lineno}: malformed trial line {line!r}")
        pairs.append((parts[0], parts[1], parts[2] == "1"))
    return VerificationTrialList(pairs=tuple(pairs))


def write_matching_trials(trials: MatchingTrialList, path) -> None:
    lines = []
    for t in trials.trials:
        lines.append(
            json.dumps(
                {
                    "probe": t.probe_id,
                    "modality": t.probe_modality,
                    "gallery": list(t.gallery_ids),
                    "answer": t.answer,
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_matching_trials(path) -> MatchingTrialList:
    trials = []
    n_c = None
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            trial = MatchingTrial(
                probe_id=doc["probe"],
                probe_modality=doc["modality"],
                gallery_ids=tuple(doc["gallery"]),
                answer=int(doc["answer"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DatasetFormatError(f"{path}:{lineno}: malformed trial: {exc}") from exc
        if n_c is None:
            n_c = len(trial.gallery_ids)
        trials.append(trial)
    if n_c is None:
        raise DatasetFormatError(f"{path}: no matching trials found")
    return MatchingTrialList(trials=tuple(trials), n_c=n_c)
