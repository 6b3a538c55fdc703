"""Parameter containers and the training configuration record."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .errors import ConfigInvalid, MethodUnknown, ShapeMismatch

Method = Literal["infonce", "ls", "kd", "otter"]
METHODS: tuple[str, ...] = ("infonce", "ls", "kd", "otter")

# Loss coefficient used when none is given; label smoothing works better with a
# confident prior.
DEFAULT_ALPHA = {"infonce": 1.0, "ls": 0.9, "kd": 0.5, "otter": 0.5}


@dataclass
class EncoderState:
    """Two bias-free linear encoders and the log of the inverse temperature."""

    w_image: np.ndarray
    w_text: np.ndarray
    log_inv_temp: float

    def __post_init__(self):
        if self.w_image.shape[1] != self.w_text.shape[1]:
            raise ShapeMismatch(
                f"encoders disagree on embedding width: {self.w_image.shape[1]} vs {self.w_text.shape[1]}"
            )

    @property
    def inv_temp(self) -> float:
        return math.exp(self.log_inv_temp)

    @property
    def d_emb(self) -> int:
        return self.w_image.shape[1]

    def copy(self) -> "EncoderState":
        return EncoderState(self.w_image.copy(), self.w_text.copy(), self.log_inv_temp)

    @classmethod
    def initialize(
        cls, d_img_in: int, d_txt_in: int, d_emb: int, seed: int, inv_temp: float = 1 / 0.07
    ) -> "EncoderState":
        """Uniform(-1/sqrt(d_in), 1/sqrt(d_in)) weights drawn from ``seed``."""
        rng = np.random.default_rng(seed)
        bv = 1.0 / math.sqrt(d_img_in)
        bt = 1.0 / math.sqrt(d_txt_in)
        w_image = rng.uniform(-bv, bv, size=(d_img_in, d_emb))
        w_text = rng.uniform(-bt, bt, size=(d_txt_in, d_emb))
        return cls(w_image, w_text, math.log(inv_temp))


@dataclass
class TeacherState(EncoderState):
    """EMA shadow of an :class:`EncoderState`."""

    momentum: float = 0.999

    @classmethod
    def from_student(cls, student: EncoderState, momentum: float = 0.999) -> "TeacherState":
        return cls(student.w_image.copy(), student.w_text.copy(), student.log_inv_temp, momentum)

    def copy(self) -> "TeacherState":
        return TeacherState(self.w_image.copy(), self.w_text.copy(), self.log_inv_temp, self.momentum)


@dataclass
class GradientBundle:
    """Gradients with respect to every field of :class:`EncoderState`."""

    d_weights_image: np.ndarray
    d_weights_text: np.ndarray
    d_log_inv_temp: float

    @classmethod
    def zeros_like(cls, state: EncoderState) -> "GradientBundle":
        return cls(np.zeros_like(state.w_image), np.zeros_like(state.w_text), 0.0)


@dataclass
class PairBatch:
    image_features: np.ndarray
    text_features: np.ndarray
    latent_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.image_features.shape[0] != self.text_features.shape[0]:
            raise ShapeMismatch(
                f"image/text batch sizes differ: {self.image_features.shape[0]} vs {self.text_features.shape[0]}"
            )

    @property
    def n(self) -> int:
        return self.image_features.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    method: Method = "otter"
    alpha: Optional[float] = None  # None: per-method default from DEFAULT_ALPHA
    gamma_v: float = 1.0
    gamma_t: float = 1.0
    eta: float = 100.0
    lam: float = 0.15
    sinkhorn_iters: int = 5
    use_ema_teacher: bool = True
    ema_momentum: float = 0.999
    batch_size: int = 64
    epochs: int = 10
    lr: float = 3e-3
    sgd_momentum: float = 0.9
    weight_decay: float = 0.0
    seed: int = 0
    d_emb: int = 16
    init_inv_temp: float = 1 / 0.07

    def __post_init__(self):
        if self.method not in METHODS:
            raise MethodUnknown(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", DEFAULT_ALPHA[self.method])
        checks = [
            (0.0 <= self.alpha <= 1.0, "alpha must lie in [0, 1]"),
            (self.gamma_v >= 0 and self.gamma_t >= 0, "gamma_v and gamma_t must be non-negative"),
            (self.eta >= 0, "eta must be non-negative"),
            (self.lam > 0, "lambda must be positive"),
            (self.sinkhorn_iters >= 0, "sinkhorn_iters must be non-negative"),
            (0.0 <= self.ema_momentum < 1.0, "ema_momentum must lie in [0, 1)"),
            (self.batch_size >= 2, "batch_size must be at least 2"),
            (self.epochs >= 0, "epochs must be non-negative"),
            (self.lr >= 0, "lr must be non-negative"),
            (0.0 <= self.sgd_momentum < 1.0, "sgd_momentum must lie in [0, 1)"),
            (self.weight_decay >= 0, "weight_decay must be non-negative"),
            (self.d_emb >= 1, "d_emb must be positive"),
            (self.init_inv_temp > 0, "init_inv_temp must be positive"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigInvalid(msg)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigInvalid(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)
