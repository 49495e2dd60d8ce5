"""The trainable face-voice association pipeline.

Two projection heads (linear -> ReLU -> dropout -> L2 normalization) map raw
face and voice vectors to unit embeddings; a trainable scalar gate fuses them
into one multimodal vector per instance. Speaker logits come either from the
fixed separation matrix (variants MSM and OURS) or from a trainable bias-free
linear classifier (variants CE and FOP). The objective is mean cross-entropy
plus, for FOP and OURS, alpha times the pair alignment/orthogonality loss.

Verification and matching always score the cosine between the face and voice
embeddings themselves, never the fused vector.
"""

from __future__ import annotations

import copy
import io
import json
import zipfile
from dataclasses import asdict, dataclass

import numpy as np

from .diffcore import (
    AdamState,
    ParamTensor,
    adam_step,
    apply_dropout,
    apply_linear,
    apply_relu,
    cosine_similarity,
    l2_normalize,
    softmax_cross_entropy,
)
from .errors import (
    DegenerateInputError,
    InvalidArgumentError,
    NumericFailureError,
    ShapeError,
)
from .metrics import ScoredTrials, eer
from .simplex import SeparationMatrix, build_separation_matrix

CE = "CE"
MSM = "MSM"
FOP = "FOP"
OURS = "OURS"
VARIANTS = (CE, MSM, FOP, OURS)

MEAN = "MEAN"
SUM = "SUM"
OC_NORMALIZATIONS = (MEAN, SUM)

FUSED_ONLY = "FUSED_ONLY"
MODALITY_POOLED = "MODALITY_POOLED"
OC_PAIR_SCOPES = (FUSED_ONLY, MODALITY_POOLED)

DEFAULT_EMBED_DIM = 128  # head width when no fixed matrix pins it


def _sigmoid(x: float) -> float:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class ModelConfig:
    n_speakers: int
    face_in_dim: int
    voice_in_dim: int
    embed_dim: int
    dropout_rate: float = 0.0
    alpha: float = 1.0
    variant: str = OURS
    oc_normalization: str = MEAN
    oc_pair_scope: str = MODALITY_POOLED
    renormalize_fused: bool = False

    def __post_init__(self) -> None:
        if self.n_speakers < 2:
            raise InvalidArgumentError(f"need >= 2 speakers, got {self.n_speakers}")
        for name in ("face_in_dim", "voice_in_dim", "embed_dim"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be positive")
        if self.variant not in VARIANTS:
            raise InvalidArgumentError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.oc_normalization not in OC_NORMALIZATIONS:
            raise InvalidArgumentError(f"oc_normalization must be one of {OC_NORMALIZATIONS}")
        if self.oc_pair_scope not in OC_PAIR_SCOPES:
            raise InvalidArgumentError(f"oc_pair_scope must be one of {OC_PAIR_SCOPES}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise InvalidArgumentError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.alpha < 0:
            raise InvalidArgumentError(f"alpha must be >= 0, got {self.alpha}")
        if self.variant in (MSM, OURS) and self.embed_dim != self.n_speakers - 1:
            raise InvalidArgumentError(
                f"variant {self.variant} requires embed_dim = n_speakers - 1 "
                f"({self.n_speakers - 1}), got {self.embed_dim}"
            )
        if self.variant in (CE, MSM) and self.alpha != 0.0:
            raise InvalidArgumentError(f"variant {self.variant} trains without the pair loss; alpha must be 0")

    @property
    def uses_matrix(self) -> bool:
        return self.variant in (MSM, OURS)


def make_config(
    n_speakers: int,
    face_in_dim: int,
    voice_in_dim: int,
    variant: str = OURS,
    embed_dim: int | None = None,
    alpha: float = 1.0,
    dropout_rate: float = 0.0,
    oc_normalization: str = MEAN,
    oc_pair_scope: str = MODALITY_POOLED,
    renormalize_fused: bool = False,
) -> ModelConfig:
    """Resolve the per-variant dimension and loss-weight rules into a config.

    MSM and OURS pin embed_dim to n_speakers - 1 (an explicit conflicting value
    is an error); CE and FOP default to 128. CE and MSM train on cross-entropy
    alone, so alpha is coerced to 0 for them.
    """
    if variant not in VARIANTS:
        raise InvalidArgumentError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if variant in (MSM, OURS):
        forced = n_speakers - 1
        if embed_dim is not None and embed_dim != forced:
            raise InvalidArgumentError(
                f"variant {variant} requires embed_dim {forced}, got {embed_dim}"
            )
        embed_dim = forced
    elif embed_dim is None:
        embed_dim = DEFAULT_EMBED_DIM
    if variant in (CE, MSM):
        alpha = 0.0
    return ModelConfig(
        n_speakers=n_speakers,
        face_in_dim=face_in_dim,
        voice_in_dim=voice_in_dim,
        embed_dim=embed_dim,
        dropout_rate=dropout_rate,
        alpha=alpha,
        variant=variant,
        oc_normalization=oc_normalization,
        oc_pair_scope=oc_pair_scope,
        renormalize_fused=renormalize_fused,
    )


@dataclass
class ModelParams:
    """All trainable tensors. ``classifier`` exists only for CE and FOP."""

    face_w: ParamTensor
    face_b: ParamTensor
    voice_w: ParamTensor
    voice_b: ParamTensor
    fusion_logit: ParamTensor
    classifier: ParamTensor | None = None

    def tensors(self) -> list[ParamTensor]:
        out = [self.face_w, self.face_b, self.voice_w, self.voice_b, self.fusion_logit]
        if self.classifier is not None:
            out.append(self.classifier)
        return out

    @property
    def fusion_weight(self) -> float:
        return _sigmoid(float(self.fusion_logit.values))

    def clone(self) -> "ModelParams":
        return copy.deepcopy(self)


@dataclass(frozen=True)
class InstanceEmbeddings:
    face: np.ndarray
    voice: np.ndarray
    fused: np.ndarray


@dataclass(frozen=True)
class Batch:
    """Training minibatch: raw vectors row-per-instance plus speaker indices."""

    faces: np.ndarray
    voices: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        faces = np.asarray(self.faces, dtype=np.float64)
        voices = np.asarray(self.voices, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if faces.ndim != 2 or voices.ndim != 2 or labels.ndim != 1:
            raise ShapeError("batch needs 2-D faces/voices and 1-D labels")
        if not (faces.shape[0] == voices.shape[0] == labels.shape[0]):
            raise ShapeError(
                f"batch row counts differ: {faces.shape[0]}, {voices.shape[0]}, {labels.shape[0]}"
            )
        if faces.shape[0] < 1:
            raise InvalidArgumentError("batch must be nonempty")
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "voices", voices)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Seeded init: uniform weights bounded by 1/sqrt(fan_in), zero biases,
    fusion gate at 0.5."""
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    d = config.embed_dim
    params = ModelParams(
        face_w=ParamTensor("face_w", uniform((d, config.face_in_dim), config.face_in_dim)),
        face_b=ParamTensor("face_b", np.zeros(d)),
        voice_w=ParamTensor("voice_w", uniform((d, config.voice_in_dim), config.voice_in_dim)),
        voice_b=ParamTensor("voice_b", np.zeros(d)),
        fusion_logit=ParamTensor("fusion_logit", np.zeros(())),
    )
    if not config.uses_matrix:
        params.classifier = ParamTensor(
            "classifier", uniform((config.n_speakers, d), d)
        )
    return params


def _head_forward(
    w: ParamTensor,
    b: ParamTensor,
    x: np.ndarray,
    dropout_rate: float,
    training: bool,
    rng,
    which: str,
):
    pre, lin_vjp = apply_linear(x, w.values, b.values)
    act, relu_vjp = apply_relu(pre)
    dropped, drop_vjp = apply_dropout(act, dropout_rate, rng, training)
    try:
        unit, norm_vjp = l2_normalize(dropped)
    except DegenerateInputError:
        norms = np.atleast_1d(np.linalg.norm(np.atleast_2d(dropped), axis=-1))
        bad = int(np.argmin(norms))
        raise DegenerateInputError(
            f"{which} embedding collapsed to zero after ReLU/dropout "
            f"(instance {bad} of the batch)"
        ) from None

    def backward(g: np.ndarray) -> None:
        g = relu_vjp(drop_vjp(norm_vjp(g)))
        _, g_w, g_b = lin_vjp(g)
        w.grad += g_w
        b.grad += g_b

    return unit, backward


def embed_face(params: ModelParams, face_raw: np.ndarray) -> np.ndarray:
    """Eval-mode face embedding (unit rows). Accepts one vector or a batch."""
    out, _ = _head_forward(params.face_w, params.face_b, face_raw, 0.0, False, None, "face")
    return out


def embed_voice(params: ModelParams, voice_raw: np.ndarray) -> np.ndarray:
    out, _ = _head_forward(params.voice_w, params.voice_b, voice_raw, 0.0, False, None, "voice")
    return out


def forward_instance(
    params: ModelParams,
    face_raw: np.ndarray,
    voice_raw: np.ndarray,
    config: ModelConfig,
    training: bool = False,
    rng=None,
) -> InstanceEmbeddings:
    """Project one instance to unit face/voice embeddings and their fusion."""
    drop = config.dropout_rate if training else 0.0
    face, _ = _head_forward(params.face_w, params.face_b, face_raw, drop, training, rng, "face")
    voice, _ = _head_forward(params.voice_w, params.voice_b, voice_raw, drop, training, rng, "voice")
    w = params.fusion_weight
    fused = w * face + (1.0 - w) * voice
    if config.renormalize_fused:
        fused, _ = l2_normalize(fused)
    return InstanceEmbeddings(face=face, voice=voice, fused=fused)


def _oc_terms(items: np.ndarray, labels: np.ndarray, normalization: str):
    """Pair loss over unit-normalized items and its gradient w.r.t. the items.

    Same-speaker pairs are pushed toward cosine 1, different-speaker pairs
    toward cosine 0: loss = 1 - S_pos + |S_neg| over unordered distinct pairs,
    each aggregate divided by its pair count under MEAN (an empty pair set
    contributes 0); SUM leaves the raw sums.
    """
    items = np.asarray(items, dtype=np.float64)
    labels = np.asarray(labels)
    k = items.shape[0]
    if k < 2:
        return 1.0, np.zeros_like(items)  # no pairs: constant loss, zero gradient
    unit, norm_vjp = l2_normalize(items)
    cos = unit @ unit.T
    same = labels[:, None] == labels[None, :]
    upper = np.triu(np.ones((k, k), dtype=bool), k=1)
    pos_mask = same & upper
    neg_mask = ~same & upper
    n_pos = int(pos_mask.sum())
    n_neg = int(neg_mask.sum())
    s_pos = float(cos[pos_mask].sum())
    s_neg = float(cos[neg_mask].sum())
    if normalization == MEAN:
        pos_den = n_pos if n_pos else 1
        neg_den = n_neg if n_neg else 1
    else:
        pos_den = neg_den = 1
    pos_term = s_pos / pos_den
    neg_term = s_neg / neg_den
    loss = 1.0 - pos_term + abs(neg_term)

    weights = np.zeros((k, k))
    weights[pos_mask] = -1.0 / pos_den
    weights[neg_mask] = np.sign(neg_term) / neg_den
    g_unit = (weights + weights.T) @ unit
    return loss, norm_vjp(g_unit)


def oc_loss(embeddings, labels, normalization: str = MEAN) -> float:
    """Alignment/orthogonality loss over fused embeddings (value only)."""
    if normalization not in OC_NORMALIZATIONS:
        raise InvalidArgumentError(f"normalization must be one of {OC_NORMALIZATIONS}")
    items = np.stack([np.asarray(e, dtype=np.float64) for e in embeddings])
    labels = np.asarray(labels)
    if items.shape[0] < 2:
        raise InvalidArgumentError("need at least 2 embeddings")
    if labels.shape != (items.shape[0],):
        raise InvalidArgumentError("need one label per embedding")
    loss, _ = _oc_terms(items, labels, normalization)
    return loss


def batch_loss(
    params: ModelParams,
    batch: Batch,
    matrix: SeparationMatrix | None,
    config: ModelConfig,
    training: bool = True,
    rng=None,
) -> float:
    """Total objective over a minibatch; accumulates gradients into the params.

    The cross-entropy term is averaged over the batch; the fixed separation
    matrix receives no gradient.
    """
    if config.uses_matrix:
        if matrix is None:
            raise InvalidArgumentError(f"variant {config.variant} requires the separation matrix")
        if matrix.n_classes != config.n_speakers:
            raise InvalidArgumentError(
                f"matrix built for {matrix.n_classes} classes, config has {config.n_speakers}"
            )
    else:
        if matrix is not None:
            raise InvalidArgumentError(f"variant {config.variant} must not use the separation matrix")
        if params.classifier is None:
            raise InvalidArgumentError(f"variant {config.variant} needs the classifier head")
    if np.any(batch.labels < 0) or np.any(batch.labels >= config.n_speakers):
        raise InvalidArgumentError("speaker index out of range for this config")

    b = len(batch)
    drop = config.dropout_rate if training else 0.0
    face, face_backward = _head_forward(
        params.face_w, params.face_b, batch.faces, drop, training, rng, "face"
    )
    voice, voice_backward = _head_forward(
        params.voice_w, params.voice_b, batch.voices, drop, training, rng, "voice"
    )
    w = params.fusion_weight
    fused_raw = w * face + (1.0 - w) * voice
    if config.renormalize_fused:
        fused, renorm_vjp = l2_normalize(fused_raw)
    else:
        fused, renorm_vjp = fused_raw, None

    if config.uses_matrix:
        logits = fused @ matrix.entries
    else:
        logits = fused @ params.classifier.values.T
    ce_losses, ce_vjp = softmax_cross_entropy(logits, batch.labels)
    total = float(np.mean(ce_losses))

    g_logits = ce_vjp(np.full(b, 1.0 / b))
    if config.uses_matrix:
        g_fused = g_logits @ matrix.entries.T
    else:
        g_fused = g_logits @ params.classifier.values
        params.classifier.grad += g_logits.T @ fused

    g_face_extra = np.zeros_like(face)
    g_voice_extra = np.zeros_like(voice)
    if config.alpha > 0.0:
        if config.oc_pair_scope == FUSED_ONLY:
            loss_oc, g_items = _oc_terms(fused, batch.labels, config.oc_normalization)
            g_fused = g_fused + config.alpha * g_items
        else:
            items = np.vstack([face, voice])
            pair_labels = np.concatenate([batch.labels, batch.labels])
            loss_oc, g_items = _oc_terms(items, pair_labels, config.oc_normalization)
            g_face_extra += config.alpha * g_items[:b]
            g_voice_extra += config.alpha * g_items[b:]
        total += config.alpha * loss_oc

    if renorm_vjp is not None:
        g_fused = renorm_vjp(g_fused)
    g_face = w * g_fused + g_face_extra
    g_voice = (1.0 - w) * g_fused + g_voice_extra
    g_gate = float(np.sum(g_fused * (face - voice)))
    params.fusion_logit.grad += g_gate * w * (1.0 - w)
    face_backward(g_face)
    voice_backward(g_voice)
    return total


def score_pair(params: ModelParams, face_raw: np.ndarray, voice_raw: np.ndarray) -> float:
    """Verification score: cosine of the projected face and voice embeddings."""
    f = embed_face(params, np.asarray(face_raw, dtype=np.float64))
    v = embed_voice(params, np.asarray(voice_raw, dtype=np.float64))
    score, _ = cosine_similarity(f, v)
    return score


def score_pairs(params: ModelParams, faces: np.ndarray, voices: np.ndarray) -> np.ndarray:
    """Vectorized score_pair over aligned rows of raw face/voice vectors."""
    faces = np.asarray(faces, dtype=np.float64)
    voices = np.asarray(voices, dtype=np.float64)
    if faces.ndim != 2 or voices.ndim != 2 or faces.shape[0] != voices.shape[0]:
        raise ShapeError("score_pairs expects aligned 2-D face and voice batches")
    f = embed_face(params, faces)
    v = embed_voice(params, voices)
    return np.clip(np.sum(f * v, axis=1), -1.0, 1.0)


def match_probe(
    params: ModelParams,
    probe_raw: np.ndarray,
    probe_modality: str,
    gallery_raws: np.ndarray,
) -> int:
    """Index of the gallery item most similar to the probe; first index wins ties.

    The gallery holds raw vectors of the other modality.
    """
    if probe_modality not in ("face", "voice"):
        raise InvalidArgumentError(f"probe modality must be 'face' or 'voice', got {probe_modality!r}")
    gallery = np.asarray(gallery_raws, dtype=np.float64)
    if gallery.ndim != 2 or gallery.shape[0] < 1:
        raise InvalidArgumentError("gallery must be a nonempty 2-D array")
    if probe_modality == "voice":
        probe = embed_voice(params, np.asarray(probe_raw, dtype=np.float64))
        items = embed_face(params, gallery)
    else:
        probe = embed_face(params, np.asarray(probe_raw, dtype=np.float64))
        items = embed_voice(params, gallery)
    scores = items @ probe
    return int(np.argmax(scores))


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    valid_eer: float | None
    learning_rate: float


@dataclass
class TrainResult:
    params: ModelParams
    history: list[EpochStats]
    best_epoch: int | None


@dataclass(frozen=True)
class TrialArrays:
    """Verification trials resolved to raw vectors, ready to score."""

    faces: np.ndarray
    voices: np.ndarray
    labels: np.ndarray


def evaluate_eer(params: ModelParams, trials: TrialArrays) -> tuple[float, float]:
    scored = ScoredTrials(
        scores=score_pairs(params, trials.faces, trials.voices),
        labels=trials.labels,
    )
    return eer(scored)


def train(
    config: ModelConfig,
    train_set: Batch,
    valid_trials: TrialArrays | None,
    epochs: int,
    batch_size: int,
    seed: int,
    base_lr: float = 2e-3,
    decay_rate: float = 0.85,
) -> TrainResult:
    """Seeded minibatch training; returns the epoch with the best validation EER.

    Shuffles per epoch, applies one Adam step per batch with the exponentially
    decaying schedule, and records per-epoch mean loss, validation EER, and
    learning rate. Without validation trials (or with 0 epochs) the final
    (or initial) parameters are returned.
    """
    if epochs < 0:
        raise InvalidArgumentError(f"epochs must be >= 0, got {epochs}")
    if batch_size < 1:
        raise InvalidArgumentError(f"batch_size must be >= 1, got {batch_size}")
    params = init_params(config, seed)
    matrix = build_separation_matrix(config.n_speakers) if config.uses_matrix else None
    state = AdamState(base_lr=base_lr, decay_rate=decay_rate)
    rng_order = np.random.default_rng([seed, 1])
    rng_dropout = np.random.default_rng([seed, 2])

    n = len(train_set)
    history: list[EpochStats] = []
    best_epoch: int | None = None
    best_eer = np.inf
    best_params: ModelParams | None = None
    for epoch in range(epochs):
        order = rng_order.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            minibatch = Batch(
                faces=train_set.faces[idx],
                voices=train_set.voices[idx],
                labels=train_set.labels[idx],
            )
            try:
                losses.append(
                    batch_loss(params, minibatch, matrix, config, training=True, rng=rng_dropout)
                )
                adam_step(params.tensors(), state, epoch)
            except NumericFailureError as exc:
                raise NumericFailureError(
                    f"epoch {epoch}, batch at offset {start}: {exc}"
                ) from exc
        valid_eer = None
        if valid_trials is not None:
            valid_eer, _ = evaluate_eer(params, valid_trials)
            if valid_eer < best_eer:
                best_eer = valid_eer
                best_epoch = epoch
                best_params = params.clone()
        history.append(
            EpochStats(
                epoch=epoch,
                train_loss=float(np.mean(losses)),
                valid_eer=valid_eer,
                learning_rate=state.learning_rate(epoch),
            )
        )
    final = best_params if best_params is not None else params
    return TrainResult(params=final, history=history, best_epoch=best_epoch)


# --- checkpoint archive -----------------------------------------------------
#
# A checkpoint is a zip holding config.json plus one .npy entry per tensor
# (shape header + row-major little-endian float64). Entries use a fixed
# timestamp so identical runs produce identical archives.

_CHECKPOINT_EPOCH = (1980, 1, 1, 0, 0, 0)


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr, dtype="<f8"))
    return buf.getvalue()


def save_checkpoint(config: ModelConfig, params: ModelParams, path) -> None:
    doc = {"format": 1, "config": asdict(config)}
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        def put(name: str, payload: bytes) -> None:
            info = zipfile.ZipInfo(name, date_time=_CHECKPOINT_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, payload)

        put("config.json", json.dumps(doc, sort_keys=True, indent=1).encode() + b"\n")
        for tensor in params.tensors():
            put(f"params/{tensor.name}.npy", _npy_bytes(tensor.values))


def load_checkpoint(path) -> tuple[ModelConfig, ModelParams]:
    with zipfile.ZipFile(path, "r") as zf:
        doc = json.loads(zf.read("config.json"))
        if doc.get("format") != 1:
            raise InvalidArgumentError(f"unsupported checkpoint format {doc.get('format')!r}")
        config = ModelConfig(**doc["config"])

        def read(name: str) -> np.ndarray:
            return np.lib.format.read_array(io.BytesIO(zf.read(f"params/{name}.npy")))

        params = ModelParams(
            face_w=ParamTensor("face_w", read("face_w")),
            face_b=ParamTensor("face_b", read("face_b")),
            voice_w=ParamTensor("voice_w", read("voice_w")),
            voice_b=ParamTensor("voice_b", read("voice_b")),
            fusion_logit=ParamTensor("fusion_logit", read("fusion_logit")),
        )
        if not config.uses_matrix:
            params.classifier = ParamTensor("classifier", read("classifier"))
    return config, params
