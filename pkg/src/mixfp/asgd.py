"""Synchronous and asynchronous SGD over a shared fp32 parameter vector.

Three engines share one update rule (plain SGD, constant step, mean-of-batch
gradient) and one batching scheme (a per-epoch permutation drawn from a
generator seeded with ``cfg.seed``, cut into contiguous mini-batches):

* :func:`sgd_sync` -- the sequential baseline.
* :func:`sgd_hogwild` -- ``cfg.workers`` threads update one
  :class:`ParamVector` element by element with no lock.  Threads meet at a
  barrier only at epoch ends so that epoch losses can be recorded.
* :func:`sgd_param_server` -- single-threaded simulation where every gradient
  is evaluated at the parameters as they were ``cfg.staleness`` updates ago.
"""
from __future__ import annotations

import collections
import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

DIVERGENCE_LOSS = 1e12


class DivergedError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch}: loss={loss}")
        self.epoch = epoch
        self.loss = loss


class ParamVector:
    """Shared fp32 parameters with indivisible single-element access.

    Each element read or write is one numpy scalar operation and cannot be
    torn.  Nothing orders accesses across elements: a concurrent reader can
    see some elements before and others after a writer's update.
    """

    def __init__(self, values):
        self._v = np.array(values, dtype=np.float32).reshape(-1)

    @property
    def dim(self) -> int:
        return self._v.shape[0]

    def get(self, i: int) -> np.float32:
        return self._v[i]

    def set(self, i: int, value) -> None:
        self._v[i] = value

    def read(self) -> np.ndarray:
        """Element-by-element copy; may mix old and new values under races."""
        v = self._v
        out = np.empty(v.shape[0], dtype=np.float32)
        for i in range(v.shape[0]):
            out[i] = v[i]
        return out

    def add(self, delta: np.ndarray) -> None:
        """Per-element read-modify-write ``v[i] = fp32(v[i] + delta[i])``.

        Racing writers may lose each other's updates to the same element.
        """
        v = self._v
        for i in range(v.shape[0]):
            v[i] = np.float32(np.float64(v[i]) + delta[i])

    def snapshot(self) -> np.ndarray:
        return self._v.copy()


@dataclass
class Objective:
    """Finite-sum objective ``(1/n) sum_i f_i(w)``.

    ``gradient(w, idx)`` returns the fp64 mean gradient over the samples in
    ``idx`` and must be deterministic; ``loss(w)`` is the full-data loss.
    """

    sample_count: int
    param_dim: int
    gradient: Callable[[np.ndarray, np.ndarray], np.ndarray]
    loss: Callable[[np.ndarray], float]
    init: np.ndarray


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 50
    batch_size: int = 10
    workers: int = 1
    seed: int = 0
    staleness: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0 or not math.isfinite(self.learning_rate):
            raise ValueError(f"learning_rate must be finite and non-negative, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if self.staleness < 0:
            raise ValueError(f"staleness must be >= 0, got {self.staleness}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")


@dataclass
class TrainTrace:
    losses: list[float]
    params: np.ndarray
    updates: int
    worker_updates: list[int] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["epoch,loss"]
        lines += [f"{i + 1},{loss:.17g}" for i, loss in enumerate(self.losses)]
        return "\n".join(lines) + "\n"


def _batches(rng: np.random.Generator, n: int, batch_size: int) -> list[np.ndarray]:
    perm = rng.permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def _step(lr: float, grad: np.ndarray) -> np.ndarray:
    return -lr * np.asarray(grad, dtype=np.float64)


def _check_loss(epoch: int, loss: float) -> float:
    loss = float(loss)
    if not math.isfinite(loss) or loss > DIVERGENCE_LOSS:
        raise DivergedError(epoch, loss)
    return loss


def sgd_sync(obj: Objective, cfg: TrainConfig) -> TrainTrace:
    rng = np.random.default_rng(cfg.seed)
    params = ParamVector(obj.init)
    losses = []
    updates = 0
    for epoch in range(1, cfg.epochs + 1):
        for idx in _batches(rng, obj.sample_count, cfg.batch_size):
            params.add(_step(cfg.learning_rate, obj.gradient(params.read(), idx)))
            updates += 1
        losses.append(_check_loss(epoch, obj.loss(params.snapshot())))
    return TrainTrace(losses, params.snapshot(), updates, [updates])


def sgd_hogwild(obj: Objective, cfg: TrainConfig) -> TrainTrace:
    """Lock-free multi-threaded SGD.

    Worker ``k`` takes batches ``k, k + workers, ...`` of each epoch's
    permutation.  With one worker the update sequence is exactly
    :func:`sgd_sync`'s.
    """
    rng = np.random.default_rng(cfg.seed)
    params = ParamVector(obj.init)
    counts = [0] * cfg.workers
    losses = []
    errors: list[BaseException] = []

    def work(k: int, batches: list[np.ndarray]) -> None:
        try:
            for idx in batches[k::cfg.workers]:
                params.add(_step(cfg.learning_rate, obj.gradient(params.read(), idx)))
                counts[k] += 1
        except BaseException as exc:  # surfaced after the epoch barrier
            errors.append(exc)

    for epoch in range(1, cfg.epochs + 1):
        batches = _batches(rng, obj.sample_count, cfg.batch_size)
        if cfg.workers == 1:
            work(0, batches)
        else:
            threads = [threading.Thread(target=work, args=(k, batches)) for k in range(cfg.workers)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        if errors:
            raise errors[0]
        losses.append(_check_loss(epoch, obj.loss(params.snapshot())))
    return TrainTrace(losses, params.snapshot(), sum(counts), counts)


def sgd_param_server(obj: Objective, cfg: TrainConfig) -> TrainTrace:
    """Parameter server with a fixed staleness ``tau``.

    The server keeps the last ``tau + 1`` parameter versions.  Update ``t``
    uses a gradient evaluated at version ``max(0, t - tau)`` and is applied
    to the current version.
    """
    rng = np.random.default_rng(cfg.seed)
    params = ParamVector(obj.init)
    history = collections.deque([params.snapshot()], maxlen=cfg.staleness + 1)
    losses = []
    updates = 0
    for epoch in range(1, cfg.epochs + 1):
        for idx in _batches(rng, obj.sample_count, cfg.batch_size):
            stale = history[0]
            params.add(_step(cfg.learning_rate, obj.gradient(stale, idx)))
            history.append(params.snapshot())
            updates += 1
        losses.append(_check_loss(epoch, obj.loss(params.snapshot())))
    return TrainTrace(losses, params.snapshot(), updates, [updates])


ENGINES = {"sync": sgd_sync, "hogwild": sgd_hogwild, "pserver": sgd_param_server}


@dataclass
class LeastSquares:
    """Synthetic linear regression with its closed-form optimum."""

    x: np.ndarray
    y: np.ndarray
    w_true: np.ndarray
    w_opt: np.ndarray
    opt_loss: float

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def loss(self, w) -> float:
        r = self.x @ np.asarray(w, dtype=np.float64) - self.y
        return 0.5 * float(r @ r) / self.n

    def gradient(self, w, idx) -> np.ndarray:
        xb = self.x[idx]
        r = xb @ np.asarray(w, dtype=np.float64) - self.y[idx]
        return xb.T @ r / len(idx)

    def curvature(self) -> float:
        """Largest eigenvalue of the loss Hessian ``X^T X / n``."""
        return float(np.linalg.eigvalsh(self.x.T @ self.x / self.n)[-1])

    def objective(self) -> Objective:
        return Objective(self.n, self.d, self.gradient, self.loss, np.zeros(self.d, dtype=np.float32))


def make_least_squares(n: int, d: int, noise: float = 0.1, seed: int = 0, max_retries: int = 8) -> LeastSquares:
    if not n >= d >= 1:
        raise ValueError(f"need n >= d >= 1, got n={n}, d={d}")
    for attempt in range(max_retries):
        rng = np.random.default_rng(seed + attempt)
        x = rng.standard_normal((n, d))
        if np.linalg.matrix_rank(x) < d:
            log.debug("rank-deficient draw for seed %d, retrying", seed + attempt)
            continue
        w_true = rng.standard_normal(d)
        y = x @ w_true + noise * rng.standard_normal(n)
        w_opt = np.linalg.solve(x.T @ x, x.T @ y)
        r = x @ w_opt - y
        return LeastSquares(x, y, w_true, w_opt, 0.5 * float(r @ r) / n)
    raise RuntimeError(f"no full-rank design after {max_retries} draws from seed {seed}")
