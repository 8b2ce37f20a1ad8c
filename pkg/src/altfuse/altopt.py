"""Alternating unimodal training with RLS-maintained head-gradient modification.

One training step = one full epoch over the scheduled modality's present
samples. The head gradient is premultiplied by the modification matrix P
during the epoch; afterwards the epoch's modality is folded into P via the
rank-one RLS update, so P always encodes only previously seen feature
directions. Everything is bit-deterministic given (config, dataset).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import model as mdl
from .data import MultimodalDataset, minibatches, validate_dataset
from .errors import ContractViolation, NumericError
from .numkernel import mix_seed, outer

log = logging.getLogger("altfuse")

# sub-streams of TrainConfig.seed
_STREAM_INIT = 1
_STREAM_BATCH = 2


def init_seed(seed: int) -> int:
    """Sub-seed used for parameter initialization."""
    return mix_seed(seed, _STREAM_INIT)


def batch_seed(seed: int, step: int) -> int:
    """Sub-seed driving the minibatch shuffle of training step `step`."""
    return mix_seed(mix_seed(seed, _STREAM_BATCH), step)


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 60
    lr: float = 1e-3
    momentum: float = 0.9
    lr_decay: float = 0.1
    decay_steps: tuple[int, ...] = ()
    batch_size: int = 64
    alpha: float = 1.0
    hgm_enabled: bool = True
    seed: int = 0
    hidden: tuple[int, ...] = (32, 32)
    embed_dim: int = 32

    def __post_init__(self):
        if self.total_steps < 0:
            raise ContractViolation("total_steps must be >= 0")
        if self.lr <= 0:
            raise ContractViolation("lr must be positive")
        if self.alpha <= 0:
            raise ContractViolation("alpha must be positive")
        if self.batch_size < 1:
            raise ContractViolation("batch_size must be >= 1")


@dataclass
class ModMatrix:
    """Feature-space modification matrix with its regularizer.

    P starts as the identity, stays symmetric and positive definite, and
    after updates with vectors h_1..h_n equals (I + (1/alpha) sum h hᵀ)^-1.
    """

    p: np.ndarray
    alpha: float

    @classmethod
    def identity(cls, dim: int, alpha: float) -> "ModMatrix":
        if alpha <= 0:
            raise ContractViolation("alpha must be positive")
        return cls(np.eye(dim), alpha)


@dataclass
class StepRecord:
    step: int
    modality: int
    loss: float | None  # None when the modality had no present samples
    lr: float


@dataclass
class TrainState:
    step: int
    params: mdl.ModelParams
    mod_matrix: ModMatrix
    enc_velocities: list[list[np.ndarray]]
    head_velocity: list[np.ndarray]
    seed: int
    lr: float
    history: list[StepRecord] = field(default_factory=list)


def modality_at(t: int, modality_count: int) -> int:
    """Cyclic schedule: step t trains modality t mod M."""
    if modality_count < 1:
        raise ContractViolation("modality_count must be >= 1")
    if t < 0:
        raise ContractViolation("step must be >= 0")
    return t % modality_count


def average_feature(params: mdl.ModelParams, m: int, rows: np.ndarray) -> np.ndarray:
    """Mean encoder output over all given modality-m rows."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[0] == 0:
        raise ContractViolation("average_feature needs at least one row")
    return mdl.encode(params, m, rows).mean(axis=0)


def update_mod_matrix(mm: ModMatrix, hbar: np.ndarray) -> ModMatrix:
    """Rank-one RLS update folding `hbar` into P; symmetry re-imposed afterwards."""
    hbar = np.asarray(hbar, dtype=np.float64).ravel()
    if hbar.shape[0] != mm.p.shape[0]:
        raise ContractViolation(f"hbar length {hbar.shape[0]} vs P dim {mm.p.shape[0]}")
    k = mm.p @ hbar
    denom = mm.alpha + hbar @ k
    p_new = mm.p - outer(k, k) / denom
    p_new = 0.5 * (p_new + p_new.T)
    return ModMatrix(p_new, mm.alpha)


def modify_gradient(mm: ModMatrix, head_grad: mdl.HeadParams, t: int) -> mdl.HeadParams:
    """Premultiply the head weight gradient's feature dimension by P.

    The very first step (t = 0) passes through unmodified, as does the bias
    gradient (it has no feature direction).
    """
    if head_grad.weight.shape[0] != mm.p.shape[0]:
        raise ContractViolation(
            f"head gradient feature dim {head_grad.weight.shape[0]} vs P dim {mm.p.shape[0]}"
        )
    if t == 0:
        return head_grad
    return mdl.HeadParams(mm.p @ head_grad.weight, head_grad.bias.copy())


def init_state(config: TrainConfig, dataset: MultimodalDataset) -> TrainState:
    dims = mdl.ModelDims(
        modality_dims=dataset.modality_dims,
        hidden=config.hidden,
        embed_dim=config.embed_dim,
        class_count=dataset.class_count,
    )
    params = mdl.init_params(dims, init_seed(config.seed))
    return TrainState(
        step=0,
        params=params,
        mod_matrix=ModMatrix.identity(config.embed_dim, config.alpha),
        enc_velocities=[
            mdl.zeros_like_arrays(mdl.encoder_arrays(e)) for e in params.encoders
        ],
        head_velocity=mdl.zeros_like_arrays(mdl.head_arrays(params.head)),
        seed=config.seed,
        lr=config.lr,
    )


def train_step(state: TrainState, dataset: MultimodalDataset, config: TrainConfig) -> TrainState:
    """One alternation step: a full epoch over the scheduled modality.

    A modality with no present samples is skipped (logged, t still advances).
    """
    t = state.step
    m = modality_at(t, dataset.modality_count)
    batches = minibatches(dataset, m, config.batch_size, batch_seed(config.seed, t))

    if not batches:
        log.info("step %d: modality %d has no present samples, skipping", t, m)
        state.history.append(StepRecord(t, m, None, state.lr))
        state.step = t + 1
        return state

    params = state.params
    enc_arrays = mdl.encoder_arrays(params.encoders[m])
    head_arrays = mdl.head_arrays(params.head)
    total_loss = 0.0
    total_n = 0
    for idx in batches:
        bundle = mdl.loss_and_grads(params, m, dataset.tables[m][idx], dataset.labels[idx])
        head_grad = (
            modify_gradient(state.mod_matrix, bundle.head, t)
            if config.hgm_enabled
            else bundle.head
        )
        mdl.sgd_update(
            enc_arrays,
            mdl.encoder_arrays(bundle.encoder),
            state.enc_velocities[m],
            state.lr,
            config.momentum,
        )
        mdl.sgd_update(
            head_arrays,
            mdl.head_arrays(head_grad),
            state.head_velocity,
            state.lr,
            config.momentum,
        )
        total_loss += bundle.loss * idx.size
        total_n += idx.size

    mean_loss = total_loss / total_n
    if not np.isfinite(mean_loss):
        raise NumericError(f"non-finite loss at step {t} (modality {m})")

    if config.hgm_enabled:
        rows = dataset.tables[m][dataset.present_indices(m)]
        hbar = average_feature(params, m, rows)
        state.mod_matrix = update_mod_matrix(state.mod_matrix, hbar)

    state.history.append(StepRecord(t, m, mean_loss, state.lr))
    state.step = t + 1
    return state


def train(
    config: TrainConfig, dataset: MultimodalDataset
) -> tuple[mdl.ModelParams, list[StepRecord]]:
    """Run `total_steps` alternation steps with step decay at the configured steps."""
    validate_dataset(dataset)
    state = init_state(config, dataset)
    decay_at = set(config.decay_steps)
    for t in range(config.total_steps):
        if t in decay_at:
            state.lr *= config.lr_decay
        train_step(state, dataset, config)
    return state.params, state.history
