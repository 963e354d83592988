"""Mini-batch training with uniform tail corruption and early stopping."""

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from hypkg.diff import loss_and_gradients, loss_terms
from hypkg.errors import DomainError, NumericError
from hypkg.evaluation import evaluate
from hypkg.model import ENTITY_FIELDS, init_params, normalize_kind

log = logging.getLogger(__name__)

FULL = "full"
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
ADAGRAD_EPS = 1e-10


@dataclass
class TrainConfig:
    """Hyperparameters for one training run.

    ``neg_samples`` is a positive int or ``"full"`` (score every entity).
    ``fixed_curvature=None`` trains one curvature per relation.
    """

    model: str = "roth"
    dim: int = 32
    lr: float = 1e-3
    optimizer: str = "adam"
    batch_size: int = 500
    neg_samples: int | str = 50
    max_epochs: int = 500
    patience: int = 100
    valid_every: int = 5
    seed: int = 0
    fixed_curvature: float | None = None
    init_scale: float = 1e-3

    def __post_init__(self):
        self.model = normalize_kind(self.model)
        if self.dim < 2 or self.dim % 2:
            raise DomainError(f"dim must be even and >= 2, got {self.dim}")
        if self.optimizer not in ("adam", "adagrad"):
            raise DomainError(f"optimizer must be adam or adagrad, got {self.optimizer!r}")
        if isinstance(self.neg_samples, str):
            if self.neg_samples.lower() != FULL:
                self.neg_samples = int(self.neg_samples)
            else:
                self.neg_samples = FULL
        if self.neg_samples != FULL and self.neg_samples < 1:
            raise DomainError("neg_samples must be >= 1 or 'full'")
        if self.lr <= 0 or self.batch_size < 1 or self.valid_every < 1:
            raise DomainError("lr, batch_size and valid_every must be positive")
        if not 0 <= self.patience <= self.max_epochs:
            raise DomainError(f"patience ({self.patience}) must lie in [0, max_epochs={self.max_epochs}]")

    def to_dict(self):
        return asdict(self)


@dataclass
class OptimizerState:
    """Per-array accumulators plus a per-row step count (rows advance only when touched)."""

    kind: str
    slots: dict = field(default_factory=dict)
    steps: dict = field(default_factory=dict)

    @classmethod
    def create(cls, params, kind):
        slots, steps = {}, {}
        for name in params.used_fields():
            arr = getattr(params, name)
            names = ("m", "v") if kind == "adam" else ("acc",)
            slots[name] = {s: np.zeros_like(arr) for s in names}
            steps[name] = np.zeros(arr.shape[0], dtype=np.int64)
        return cls(kind, slots, steps)

    def arrays(self):
        out = {}
        for name, slot in self.slots.items():
            for s, arr in slot.items():
                out[f"{name}.{s}"] = arr
            out[f"{name}.steps"] = self.steps[name]
        return out


def sample_negatives(triples, k, n_entities, rng):
    """k tails per triple, i.i.d. uniform over all entities (the true tail included)."""
    if k < 1:
        raise DomainError("k must be >= 1")
    triples = np.asarray(triples)
    if triples.ndim == 1:
        return rng.integers(0, n_entities, size=k)
    return rng.integers(0, n_entities, size=(len(triples), k))


def all_entities(n_triples, n_entities):
    """Negative matrix for full mode: every entity for every triple."""
    return np.broadcast_to(np.arange(n_entities), (n_triples, n_entities))


def batch_loss(params, batch, negatives):
    """Sum over the batch of log(1 + exp(-s_pos)) + sum_j log(1 + exp(y_j s_j))."""
    loss = float(np.sum(loss_terms(params, batch, negatives)))
    if not np.isfinite(loss):
        raise NumericError("non-finite batch loss")
    return loss


def optimizer_step(params, state, grads, config):
    """Sparse Adam/Adagrad update of the rows present in ``grads``; in place.

    Rows whose gradient is exactly zero are skipped, so their moments and
    step counts do not advance.
    """
    lr = config.lr
    for name, g in grads.grads.items():
        ids = grads.entity_ids if name in ENTITY_FIELDS else grads.relation_ids
        live = np.any(g.reshape(len(ids), -1) != 0, axis=1)
        if not live.any():
            continue
        ids, g = ids[live], g[live]
        param = getattr(params, name)
        slot = state.slots[name]
        state.steps[name][ids] += 1
        if state.kind == "adam":
            b1, b2 = ADAM_BETAS
            m = b1 * slot["m"][ids] + (1 - b1) * g
            v = b2 * slot["v"][ids] + (1 - b2) * g * g
            slot["m"][ids], slot["v"][ids] = m, v
            t = state.steps[name][ids].reshape((-1,) + (1,) * (g.ndim - 1))
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            param[ids] -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        else:
            acc = slot["acc"][ids] + g * g
            slot["acc"][ids] = acc
            param[ids] -= lr * g / np.sqrt(acc + ADAGRAD_EPS)
    return params, state


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    valid_mrr: float | None = None
    wall_time: float = field(default=0.0, compare=False)


@dataclass
class FitResult:
    params: object
    history: list
    best_epoch: int
    best_valid_mrr: float | None
    opt_state: OptimizerState


def fit(dataset, config, callbacks=(), params=None):
    """Train on ``dataset.train`` and keep the parameters with best validation MRR.

    Validation runs every ``config.valid_every`` epochs and after the last
    epoch. Training stops once ``config.patience`` epochs pass without a new
    best validation MRR.
    """
    if not len(dataset.valid):
        raise DomainError("fit needs a non-empty validation split")
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = init_params(
            config.model,
            dataset.n_entities,
            dataset.n_relations,
            config.dim,
            rng,
            fixed_curvature=config.fixed_curvature,
            init_scale=config.init_scale,
        )
    state = OptimizerState.create(params, config.optimizer)
    history = []
    best = params.copy()
    best_epoch, best_mrr = 0, None
    train = dataset.train
    start = time.perf_counter()

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train))
        total = 0.0
        for b, lo in enumerate(range(0, len(train), config.batch_size)):
            batch = train[order[lo : lo + config.batch_size]]
            if config.neg_samples == FULL:
                neg = all_entities(len(batch), dataset.n_entities)
            else:
                neg = sample_negatives(batch, config.neg_samples, dataset.n_entities, rng)
            try:
                bundle = loss_and_gradients(params, batch, neg, config)
            except NumericError as err:
                raise NumericError(f"epoch {epoch}, batch {b}: {err}", triple=err.triple) from err
            optimizer_step(params, state, bundle, config)
            total += bundle.loss

        record = EpochRecord(epoch, total / len(train))
        if epoch % config.valid_every == 0 or epoch == config.max_epochs:
            mrr = evaluate(params, dataset.valid, dataset.filter_index, dataset.n_base_relations).mrr
            record.valid_mrr = mrr
            if best_mrr is None or mrr > best_mrr:
                best, best_epoch, best_mrr = params.copy(), epoch, mrr
        record.wall_time = time.perf_counter() - start
        history.append(record)
        log.info(
            "epoch %d loss %.6f valid_mrr %s time %.2fs",
            epoch,
            record.loss,
            "-" if record.valid_mrr is None else f"{record.valid_mrr:.4f}",
            record.wall_time,
        )
        for cb in callbacks:
            cb(record)
        if best_mrr is not None and epoch - best_epoch >= config.patience:
            log.info("early stop at epoch %d (best %d)", epoch, best_epoch)
            break

    if not history:
        best = params
    return FitResult(best, history, best_epoch, best_mrr, state)
