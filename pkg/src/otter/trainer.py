"""Training loop: SGD with momentum, cosine-annealed learning rate, EMA teacher."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from .errors import EmptyDataset, FormatError, NumericError, ShapeMismatch, StepOutOfRange, TrainingDiverged
from .losses import LossBreakdown, loss_and_gradients
from .state import EncoderState, GradientBundle, PairBatch, TeacherState, TrainConfig

log = logging.getLogger(__name__)

Batches = Union[Sequence[PairBatch], Callable[[int], Sequence[PairBatch]]]

CHECKPOINT_FORMAT = "otter-checkpoint"
CHECKPOINT_VERSION = 1


def ema_update(teacher: TeacherState, student: EncoderState) -> TeacherState:
    """Return ``m * teacher + (1 - m) * student`` for every parameter."""
    if teacher.w_image.shape != student.w_image.shape or teacher.w_text.shape != student.w_text.shape:
        raise ShapeMismatch("teacher and student parameter shapes differ")
    m = teacher.momentum
    if not 0.0 <= m <= 1.0:
        raise ValueError(f"momentum must lie in [0, 1], got {m}")
    return TeacherState(
        m * teacher.w_image + (1.0 - m) * student.w_image,
        m * teacher.w_text + (1.0 - m) * student.w_text,
        m * teacher.log_inv_temp + (1.0 - m) * student.log_inv_temp,
        m,
    )


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    if total_steps < 1 or not 0 <= step <= total_steps:
        raise StepOutOfRange(f"step {step} outside [0, {total_steps}]")
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


def sgd_step(
    state: EncoderState,
    grads: GradientBundle,
    velocity: GradientBundle,
    lr: float,
    momentum: float,
    weight_decay: float = 0.0,
) -> tuple[EncoderState, GradientBundle]:
    """Heavy-ball update: ``v = momentum * v + g + wd * p``; ``p = p - lr * v``.

    Weight decay applies to the encoder weights only, not the temperature.
    """
    for p, g, v in (
        (state.w_image, grads.d_weights_image, velocity.d_weights_image),
        (state.w_text, grads.d_weights_text, velocity.d_weights_text),
    ):
        if not p.shape == g.shape == v.shape:
            raise ShapeMismatch(f"parameter {p.shape}, gradient {g.shape}, velocity {v.shape}")
    v_img = momentum * velocity.d_weights_image + (grads.d_weights_image + weight_decay * state.w_image)
    v_txt = momentum * velocity.d_weights_text + (grads.d_weights_text + weight_decay * state.w_text)
    v_tmp = momentum * velocity.d_log_inv_temp + grads.d_log_inv_temp
    new_state = EncoderState(
        state.w_image - lr * v_img,
        state.w_text - lr * v_txt,
        state.log_inv_temp - lr * v_tmp,
    )
    return new_state, GradientBundle(v_img, v_txt, v_tmp)


@dataclass
class TrainResult:
    state: EncoderState
    teacher: TeacherState
    velocity: GradientBundle
    steps: int
    log: list[dict] = field(default_factory=list)


def _epoch_batches(batches: Batches, epoch: int, batch_size: int) -> list[PairBatch]:
    seq = batches(epoch) if callable(batches) else batches
    return [b for b in seq if b.n == batch_size]


def train(
    config: TrainConfig,
    batches: Batches,
    init: EncoderState | None = None,
) -> TrainResult:
    """Run ``config.epochs`` passes over ``batches``.

    ``batches`` is either a fixed sequence reused every epoch or a callable
    mapping the epoch index to that epoch's sequence. Batches whose size is
    not ``config.batch_size`` are dropped. Each step computes the loss, takes
    an SGD step, then updates the EMA teacher.
    """
    first = _epoch_batches(batches, 0, config.batch_size)
    if not first:
        raise EmptyDataset(f"no batch of size {config.batch_size} in the dataset")
    d_img_in = first[0].image_features.shape[1]
    d_txt_in = first[0].text_features.shape[1]
    state = init.copy() if init is not None else EncoderState.initialize(
        d_img_in, d_txt_in, config.d_emb, config.seed, config.init_inv_temp
    )
    teacher = TeacherState.from_student(state, config.ema_momentum)
    velocity = GradientBundle.zeros_like(state)

    total_steps = config.epochs * len(first)
    records: list[dict] = []
    step = 0
    for epoch in range(config.epochs):
        epoch_batches = first if epoch == 0 else _epoch_batches(batches, epoch, config.batch_size)
        for batch in epoch_batches:
            lr = cosine_lr(step, total_steps, config.lr)
            target_net = teacher if config.use_ema_teacher else state
            try:
                breakdown, grads = loss_and_gradients(state, target_net, batch, config)
            except NumericError as exc:
                raise TrainingDiverged(step, exc) from exc
            state, velocity = sgd_step(state, grads, velocity, lr, config.sgd_momentum, config.weight_decay)
            if config.use_ema_teacher:
                teacher = ema_update(teacher, state)
            else:
                teacher = TeacherState.from_student(state, config.ema_momentum)
            if not (np.all(np.isfinite(state.w_image)) and np.all(np.isfinite(state.w_text))):
                raise TrainingDiverged(step, NumericError("weights became non-finite"))
            records.append(_log_record(step, epoch, lr, breakdown, state.inv_temp))
            step += 1
        log.debug("epoch %d done, last loss %.6f", epoch, records[-1]["total"] if records else float("nan"))
    return TrainResult(state, teacher, velocity, step, records)


def _log_record(step: int, epoch: int, lr: float, b: LossBreakdown, inv_temp: float) -> dict:
    rec = {"step": step, "epoch": epoch, "lr": lr}
    rec.update(asdict(b))
    rec["inv_temp"] = inv_temp
    return rec


# ----------------------------------------------------------------------------
# Checkpoints
#
# A checkpoint is a UTF-8 JSON document:
#   {"format": "otter-checkpoint", "version": 1, "step": int,
#    "config": {TrainConfig fields},
#    "student": {"w_image": [[...]], "w_text": [[...]], "log_inv_temp": float},
#    "teacher": {... same keys ..., "momentum": float},
#    "velocity": {"w_image": [[...]], "w_text": [[...]], "log_inv_temp": float}}
# Floats are written with Python's shortest round-trip repr, so loading
# reproduces every float64 bit-for-bit.


def _pack(w_image: np.ndarray, w_text: np.ndarray, scalar: float) -> dict:
    return {"w_image": w_image.tolist(), "w_text": w_text.tolist(), "log_inv_temp": float(scalar)}


def save_checkpoint(path: str | Path, result: TrainResult, config: TrainConfig) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "step": result.steps,
        "config": config.to_dict(),
        "student": _pack(result.state.w_image, result.state.w_text, result.state.log_inv_temp),
        "teacher": dict(
            _pack(result.teacher.w_image, result.teacher.w_text, result.teacher.log_inv_temp),
            momentum=result.teacher.momentum,
        ),
        "velocity": _pack(
            result.velocity.d_weights_image, result.velocity.d_weights_text, result.velocity.d_log_inv_temp
        ),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def _unpack(d: dict, key: str) -> tuple[np.ndarray, np.ndarray, float]:
    try:
        part = d[key]
        w_image = np.array(part["w_image"], dtype=np.float64)
        w_text = np.array(part["w_text"], dtype=np.float64)
        scalar = float(part["log_inv_temp"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"checkpoint block {key!r} is malformed: {exc}") from exc
    if w_image.ndim != 2 or w_text.ndim != 2:
        raise FormatError(f"checkpoint block {key!r} has non-matrix weights")
    return w_image, w_text, scalar


def load_checkpoint(path: str | Path) -> tuple[TrainResult, TrainConfig]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"checkpoint is not valid JSON: {exc.msg}", exc.pos) from exc
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path} is not a version-{CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} file")
    config = TrainConfig.from_dict(doc["config"])
    state = EncoderState(*_unpack(doc, "student"))
    teacher = TeacherState(*_unpack(doc, "teacher"), float(doc["teacher"]["momentum"]))
    velocity = GradientBundle(*_unpack(doc, "velocity"))
    return TrainResult(state, teacher, velocity, int(doc["step"])), config
