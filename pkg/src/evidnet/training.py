"""Losses, analytic gradients, and the semi-supervised training loop.

Two supervised losses are available on labeled instances: an evidential
cross-entropy on the unnormalized singleton masses (loss_mode
"evidential_ce") and a squared error on plausibilities against one-hot
targets ("mse_pl"). Unlabeled instances contribute a consistency term:
the squared difference between the singleton masses of an input and of
its Gaussian-perturbed copies. The total objective is

    mean_labeled(supervised) + consistency_weight * mean_unlabeled(consistency)
    + lam * sum_i alpha_i

where the last term discourages prototypes from claiming reliability.
Gradients are hand-derived for every parameter block and checked against
central finite differences (grad_check). The backward pass through the
fused masses uses leave-one-out products rather than division, so
saturated activations (s_i = 1, zero factors) stay exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .dataio import FeatureDataset
from .errors import (
    DimensionMismatchError,
    EmptyBatchError,
    EmptyListError,
    EmptyValidationError,
    FrameMismatchError,
    LengthMismatchError,
    NoLabeledDataError,
    NonFiniteGradientError,
    ShapeMismatchError,
)
from .model import (
    PARAM_FIELDS,
    EvidentialModel,
    OutputMass,
    _as_feature_matrix,
    _exclusive_prod,
    _forward_arrays,
    _sigmoid,
    forward_batch,
)

LOSS_MODES = ("mse_pl", "evidential_ce")
OPTIMIZERS = ("adam", "sgd")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; defaults are sane for small feature sets.

    lam is the reliability regularization weight. noise_sigma and
    t_perturb control the Gaussian perturbations behind the consistency
    loss. log_eps floors the arguments of logarithms.
    """

    loss_mode: str = "evidential_ce"
    lam: float = 0.01
    consistency_weight: float = 1.0
    noise_sigma: float = 0.1
    t_perturb: int = 2
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 5
    seed: int = 0
    log_eps: float = 1e-12
    optimizer: str = "adam"

    def __post_init__(self) -> None:
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.consistency_weight < 0:
            raise ValueError("consistency_weight must be >= 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.t_perturb < 1:
            raise ValueError("t_perturb must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.log_eps <= 0:
            raise ValueError("log_eps must be > 0")


@dataclass
class Batch:
    """One optimization step's data.

    labeled: (x, y) pairs with y = 1 meaning the first class. unlabeled:
    (x, perturbed copies of x) pairs. At least one list must be
    non-empty.
    """

    labeled: list = field(default_factory=list)
    unlabeled: list = field(default_factory=list)


@dataclass
class GradientVector:
    """Gradient blocks mirroring the model parameter blocks."""

    dw: np.ndarray
    db: np.ndarray
    dcenters: np.ndarray
    dbeta: np.ndarray
    dxi: np.ndarray
    deta: np.ndarray

    def blocks(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, "d" + name) for name in PARAM_FIELDS}


@dataclass(frozen=True)
class EpochRecord:
    epoch: int  # 1-based
    train_loss: float
    val_accuracy: float


@dataclass
class TrainHistory:
    records: list[EpochRecord]
    best_epoch: int
    stopped_early: bool

    @property
    def best_val_accuracy(self) -> float:
        return max(rec.val_accuracy for rec in self.records)


@dataclass
class OptimizerState:
    """Adaptive-moment accumulators; step counts completed updates."""

    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]


# ---------------------------------------------------------------------------
# losses on OutputMass values (per-instance forms)


def loss_supervised_ce(out: OutputMass, y: int, log_eps: float = 1e-12) -> float:
    """Cross-entropy on the unnormalized singleton masses, binary.

    y = 1 penalizes -log m({class 0}), y = 0 penalizes -log m({class 1});
    masses are floored at log_eps, so the value is finite and >= 0.
    """
    if y not in (0, 1):
        raise ValueError(f"y must be 0 or 1, got {y!r}")
    if out.frame.k != 2:
        raise ValueError("cross-entropy loss is defined for two classes")
    m = out.singleton_masses
    picked = m[0] if y == 1 else m[1]
    return float(-np.log(max(float(picked), log_eps)))


def loss_consistency(out: OutputMass, outs_t: Sequence[OutputMass]) -> float:
    """Sum over perturbed copies of squared singleton-mass differences."""
    if len(outs_t) == 0:
        raise EmptyListError("need at least one perturbed output")
    base = out.singleton_masses
    total = 0.0
    for other in outs_t:
        if other.frame != out.frame:
            raise FrameMismatchError("perturbed output on a different frame")
        d = base - other.singleton_masses
        total += float((d * d).sum())
    return total


def cost_mse_pl(
    outs: Sequence[OutputMass],
    labels: Sequence,
    lam: float,
    model: EvidentialModel,
) -> float:
    """Summed squared plausibility error plus reliability regularization.

    labels are one-hot target vectors; the regularizer is
    lam * sum_i alpha_i over the model's prototypes.
    """
    if len(outs) != len(labels):
        raise LengthMismatchError(f"{len(outs)} outputs vs {len(labels)} labels")
    if len(outs) == 0:
        raise EmptyListError("need at least one instance")
    total = 0.0
    for out, target in zip(outs, labels):
        target = np.asarray(target, dtype=float)
        if target.shape != out.pl.shape:
            raise DimensionMismatchError(
                f"target shape {target.shape} vs pl shape {out.pl.shape}"
            )
        resid = out.pl - target
        total += float((resid * resid).sum())
    alpha = _sigmoid(model.xi)
    return total + lam * float(alpha.sum())


# ---------------------------------------------------------------------------
# batched objective and analytic gradients


def _stack_batch(model: EvidentialModel, batch: Batch):
    """Flatten a batch into one matrix: labeled, then unlabeled bases,
    then all perturbed copies in (instance, copy) order."""
    n_lab = len(batch.labeled)
    n_unl = len(batch.unlabeled)
    if n_lab == 0 and n_unl == 0:
        raise EmptyBatchError("batch has neither labeled nor unlabeled instances")
    rows = []
    y = np.zeros(n_lab, dtype=int)
    for i, (x, yi) in enumerate(batch.labeled):
        if yi not in (0, 1):
            raise ValueError(f"labeled y must be 0 or 1, got {yi!r}")
        y[i] = int(yi)
        rows.append(np.atleast_1d(np.asarray(x, dtype=float)))
    t_per = 0
    for x, copies in batch.unlabeled:
        if len(copies) == 0:
            raise EmptyListError("unlabeled instance without perturbed copies")
        if t_per == 0:
            t_per = len(copies)
        elif len(copies) != t_per:
            raise DimensionMismatchError("unlabeled instances disagree on copy count")
        rows.append(np.atleast_1d(np.asarray(x, dtype=float)))
    for x, copies in batch.unlabeled:
        for xt in copies:
            rows.append(np.atleast_1d(np.asarray(xt, dtype=float)))
    try:
        stacked = np.vstack(rows)
    except ValueError as exc:
        raise DimensionMismatchError(f"batch rows disagree in dimension: {exc}") from exc
    x_all = _as_feature_matrix(stacked, model.config.d_in)
    return x_all, y, n_lab, n_unl, t_per


def _loss_and_grads(
    model: EvidentialModel, batch: Batch, cfg: TrainConfig, want_grads: bool
):
    if model.config.k != 2:
        raise ValueError("training is defined for binary models")
    x_all, y, n_lab, n_unl, t_per = _stack_batch(model, batch)
    cache = _forward_arrays(model, x_all)
    m = cache["m"]
    pl = cache["pl"]
    n_rows = x_all.shape[0]
    gm = np.zeros((n_rows, 2))
    gmo = np.zeros(n_rows)

    sup = 0.0
    if n_lab:
        m_lab = m[:n_lab]
        if cfg.loss_mode == "evidential_ce":
            picked = np.where(y == 1, m_lab[:, 0], m_lab[:, 1])
            sup = float(-np.log(np.maximum(picked, cfg.log_eps)).mean())
            if want_grads:
                live = picked > cfg.log_eps  # clamped masses get no pull
                coef = np.where(live, -1.0 / np.maximum(picked, cfg.log_eps), 0.0)
                coef /= n_lab
                gm[:n_lab, 0] = np.where(y == 1, coef, 0.0)
                gm[:n_lab, 1] = np.where(y == 0, coef, 0.0)
        else:
            target = np.zeros((n_lab, 2))
            target[y == 1, 0] = 1.0
            target[y == 0, 1] = 1.0
            resid = pl[:n_lab] - target
            sup = float((resid * resid).sum(axis=1).mean())
            if want_grads:
                gpl = 2.0 * resid / n_lab
                gm[:n_lab] += gpl
                gmo[:n_lab] += gpl.sum(axis=1)

    cons = 0.0
    if n_unl:
        base = m[n_lab : n_lab + n_unl]
        pert = m[n_lab + n_unl :].reshape(n_unl, t_per, 2)
        dif = base[:, None, :] - pert
        cons = float((dif * dif).sum(axis=(1, 2)).mean())
        if want_grads and cfg.consistency_weight:
            coef = 2.0 * cfg.consistency_weight / n_unl
            gm[n_lab : n_lab + n_unl] += coef * dif.sum(axis=1)
            gm[n_lab + n_unl :] += (-coef * dif).reshape(n_unl * t_per, 2)

    alpha = cache["alpha"]
    loss = sup + cfg.consistency_weight * cons + cfg.lam * float(alpha.sum())
    if not want_grads:
        return loss, None
    return loss, _backward_arrays(model, cache, gm, gmo, cfg.lam)


def _backward_arrays(
    model: EvidentialModel,
    cache: dict,
    gm: np.ndarray,
    gmo: np.ndarray,
    lam: float,
) -> GradientVector:
    """Chain rule from upstream mass gradients down to every parameter.

    gm is dLoss/d(singleton masses), gmo is dLoss/d(ignorance mass), per
    batch row. The normalizer's quotient rule folds into a single shared
    scalar per row; leave-one-out products replace division through the
    fused products so zero factors cannot poison the result.
    """
    k = model.config.k
    m, mo, norm = cache["m"], cache["m_omega"], cache["n"]
    cf, one_minus_s = cache["cf"], cache["one_minus_s"]
    u, s, e, d2 = cache["u"], cache["s"], cache["e"], cache["d2"]
    alpha, gamma = cache["alpha"], cache["gamma"]
    diff, x = cache["diff"], cache["x"]

    shared = (gm * m).sum(axis=1) + gmo * mo
    ga = (gm - shared[:, None]) / norm[:, None]
    gb = (gmo - gm.sum(axis=1) + (k - 1) * shared) / norm

    gcf = ga[:, None, :] * _exclusive_prod(cf, axis=1)
    g_oms = gb[:, None] * _exclusive_prod(one_minus_s, axis=1)

    gu = np.einsum("nik,ni->ik", gcf, s)
    gs = np.einsum("nik,ik->ni", gcf, u - 1.0) - g_oms

    ge = gs * alpha[None, :]
    galpha = (gs * e).sum(axis=0)
    gxi = (galpha + lam) * alpha * (1.0 - alpha)

    ggamma = -(ge * d2 * e).sum(axis=0)
    geta = 2.0 * model.eta * ggamma
    gd2 = -ge * gamma[None, :] * e

    gdiff = 2.0 * gd2[:, :, None] * diff
    gz = gdiff.sum(axis=1)
    gcenters = -gdiff.sum(axis=0)
    gw = gz.T @ x
    gb_vec = gz.sum(axis=0)

    ssum = (model.beta**2).sum(axis=1)
    gbeta = 2.0 * model.beta / ssum[:, None] * (gu - (gu * u).sum(axis=1)[:, None])

    return GradientVector(
        dw=gw, db=gb_vec, dcenters=gcenters, dbeta=gbeta, dxi=gxi, deta=geta
    )


def total_loss(model: EvidentialModel, batch: Batch, cfg: TrainConfig) -> float:
    """The scalar objective a training step descends."""
    loss, _ = _loss_and_grads(model, batch, cfg, want_grads=False)
    return loss


def gradients(model: EvidentialModel, batch: Batch, cfg: TrainConfig) -> GradientVector:
    """Analytic gradient of total_loss for every parameter block."""
    _, grads = _loss_and_grads(model, batch, cfg, want_grads=True)
    for name, block in grads.blocks().items():
        if not np.all(np.isfinite(block)):
            raise NonFiniteGradientError(f"non-finite gradient in {name}")
    return grads


def grad_check(
    model: EvidentialModel, batch: Batch, cfg: TrainConfig, step: float = 1e-5
) -> float:
    """Worst relative disagreement between analytic and numeric gradients.

    Central differences with the given step, compared as
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    analytic = gradients(model, batch, cfg)
    work = model.copy()
    worst = 0.0
    for name in PARAM_FIELDS:
        arr = getattr(work, name)
        ana = getattr(analytic, "d" + name)
        flat = arr.reshape(-1)
        ana_flat = ana.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = total_loss(work, batch, cfg)
            flat[j] = orig - step
            down = total_loss(work, batch, cfg)
            flat[j] = orig
            numeric = (up - down) / (2.0 * step)
            err = abs(float(ana_flat[j]) - numeric)
            rel = err / max(1e-8, abs(float(ana_flat[j])) + abs(numeric))
            worst = max(worst, rel)
    return worst


def perturb(x, sigma: float, t: int, seed: int) -> list[np.ndarray]:
    """t noisy copies of x (i.i.d. Gaussian, std sigma per coordinate)."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if t < 1:
        raise ValueError("t must be >= 1")
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    return [x + sigma * rng.standard_normal(x.shape) for _ in range(t)]


# ---------------------------------------------------------------------------
# optimizer


def init_optimizer(model: EvidentialModel) -> OptimizerState:
    zeros = {name: np.zeros_like(arr) for name, arr in model.params().items()}
    return OptimizerState(
        step=0,
        m={k: v.copy() for k, v in zeros.items()},
        v={k: v.copy() for k, v in zeros.items()},
    )


def optimizer_step(
    model: EvidentialModel,
    grads: GradientVector,
    cfg: TrainConfig,
    state: OptimizerState,
) -> tuple[EvidentialModel, OptimizerState]:
    """One parameter update; returns a new model and advanced state.

    Adaptive-moment mode keeps exponential first/second moment averages
    (decay 0.9 / 0.999, epsilon 1e-8) with bias correction; plain mode
    is vanilla gradient descent.
    """
    step = state.step + 1
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name in PARAM_FIELDS:
        param = getattr(model, name)
        g = getattr(grads, "d" + name)
        if g.shape != param.shape:
            raise ShapeMismatchError(
                f"gradient {name} has shape {g.shape}, parameter {param.shape}"
            )
        if cfg.optimizer == "sgd":
            new_params[name] = param - cfg.learning_rate * g
            new_m[name] = state.m[name]
            new_v[name] = state.v[name]
        else:
            m1 = ADAM_BETA1 * state.m[name] + (1.0 - ADAM_BETA1) * g
            v1 = ADAM_BETA2 * state.v[name] + (1.0 - ADAM_BETA2) * g * g
            m_hat = m1 / (1.0 - ADAM_BETA1**step)
            v_hat = v1 / (1.0 - ADAM_BETA2**step)
            new_params[name] = param - cfg.learning_rate * m_hat / (
                np.sqrt(v_hat) + ADAM_EPS
            )
            new_m[name] = m1
            new_v[name] = v1
    new_model = replace(model, **new_params)
    return new_model, OptimizerState(step=step, m=new_m, v=new_v)


# ---------------------------------------------------------------------------
# training loop


def _validation_accuracy(model: EvidentialModel, val_set: FeatureDataset) -> float:
    if val_set.n == 0:
        raise EmptyValidationError("validation set is empty")
    truth = np.asarray(val_set.labels, dtype=int)
    _, _, pl = forward_batch(model, val_set.features)
    preds = pl.argmax(axis=1)
    return float((preds == truth).mean())


def train(
    model: EvidentialModel,
    train_set: FeatureDataset,
    val_set: FeatureDataset,
    cfg: TrainConfig,
    *,
    val_metric: Optional[Callable[[EvidentialModel], float]] = None,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> tuple[EvidentialModel, TrainHistory]:
    """Mini-batch training with early stopping on validation accuracy.

    Epochs shuffle the labeled and unlabeled streams independently and
    slice both into the same number of mini-batches. Fresh perturbations
    are drawn every epoch. Training stops once validation accuracy has
    not strictly improved for cfg.patience consecutive epochs (or at
    max_epochs), and the best-epoch parameters are returned. Fully
    deterministic given (datasets, config). val_metric, when given,
    replaces the accuracy computation (epoch-end hook for tests);
    on_epoch observes each record as it is appended.
    """
    feats = train_set.features
    labels = train_set.labels
    labeled_idx = np.asarray(
        [i for i, lab in enumerate(labels) if lab is not None], dtype=int
    )
    unlabeled_idx = np.asarray(
        [i for i, lab in enumerate(labels) if lab is None], dtype=int
    )
    if labeled_idx.size == 0:
        raise NoLabeledDataError("training set has no labeled instances")
    if val_metric is None:
        if val_set.n == 0:
            raise EmptyValidationError("validation set is empty")
        if not val_set.fully_labeled():
            raise EmptyValidationError("validation set must be fully labeled")

    x_lab = feats[labeled_idx]
    y_ind = np.asarray([1 if labels[i] == 0 else 0 for i in labeled_idx], dtype=int)
    x_unl = feats[unlabeled_idx]
    n_lab, n_unl = x_lab.shape[0], x_unl.shape[0]
    d = feats.shape[1]

    n_batches = max(
        math.ceil(n_lab / cfg.batch_size),
        math.ceil(n_unl / cfg.batch_size) if n_unl else 0,
        1,
    )

    rng = np.random.default_rng(cfg.seed)
    current = model.copy()
    state = init_optimizer(current)
    records: list[EpochRecord] = []
    best_acc = -math.inf
    best_epoch = 0
    best_model = current.copy()
    streak = 0
    stopped_early = False

    for epoch in range(1, cfg.max_epochs + 1):
        perm_lab = rng.permutation(n_lab)
        perm_unl = rng.permutation(n_unl) if n_unl else np.empty(0, dtype=int)
        noise = (
            rng.standard_normal((n_unl, cfg.t_perturb, d)) if n_unl else None
        )
        chunks_lab = np.array_split(perm_lab, n_batches)
        chunks_unl = (
            np.array_split(perm_unl, n_batches)
            if n_unl
            else [np.empty(0, dtype=int)] * n_batches
        )
        batch_losses = []
        for chunk_l, chunk_u in zip(chunks_lab, chunks_unl):
            labeled = [(x_lab[i], int(y_ind[i])) for i in chunk_l]
            unlabeled = []
            for j in chunk_u:
                base = x_unl[j]
                copies = [
                    base + cfg.noise_sigma * noise[j, t]
                    for t in range(cfg.t_perturb)
                ]
                unlabeled.append((base, copies))
            batch = Batch(labeled=labeled, unlabeled=unlabeled)
            loss, grads = _loss_and_grads(current, batch, cfg, want_grads=True)
            for name, block in grads.blocks().items():
                if not np.all(np.isfinite(block)):
                    raise NonFiniteGradientError(f"non-finite gradient in {name}")
            current, state = optimizer_step(current, grads, cfg, state)
            batch_losses.append(loss)
        train_loss = float(np.mean(batch_losses))
        val_acc = (
            float(val_metric(current))
            if val_metric is not None
            else _validation_accuracy(current, val_set)
        )
        record = EpochRecord(epoch=epoch, train_loss=train_loss, val_accuracy=val_acc)
        records.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if val_acc > best_acc:
            best_acc = val_acc
            best_epoch = epoch
            best_model = current.copy()
            streak = 0
        else:
            streak += 1
            if streak >= cfg.patience:
                stopped_early = True
                break

    history = TrainHistory(
        records=records, best_epoch=best_epoch, stopped_early=stopped_early
    )
    return best_model, history
