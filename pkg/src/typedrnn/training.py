"""Language-model training: plain SGD over stacked recurrent layers.

The model is a stack of same-kind cell layers between an input encoding and
a tied-nothing linear projection to vocabulary logits. Character-level input
is one-hot; word-level input is a learned embedding of the hidden size.
Training is truncated backpropagation through time over contiguous windows:
state (h, c, and the previous raw input for T-cells) carries across window
boundaries within an epoch, gradients do not. Inverted dropout is applied
only on vertical connections (between layers and before the projection),
never on the recurrent path and never on the raw model input.

The optimizer is plain SGD with optional global-norm clipping and a
multiplicative per-epoch learning-rate decay that starts after a configured
epoch. Runs are deterministic for a fixed seed when ``threads`` is 1; the
thread-parallel mode splits each batch into stream chunks, processes them
concurrently, and reduces gradients in fixed chunk order (losses still exact,
scheduling nondeterminism may change dropout draws).

A non-finite loss or gradient norm aborts training with a diagnostic
recording the epoch, step, loss, and gradient norm.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import clip_global_norm, stack_backward
from .cells import (
    CellKind,
    CellParams,
    LayerCarry,
    TRAINABLE_KINDS,
    init_params,
    param_shapes,
    stack_carry_out,
    stack_forward,
)
from .checkpoint import Checkpoint, CheckpointError
from .data import DataError, EncodedCorpus, Vocab, batch_iter
from .linalg import softmax

__all__ = [
    "Metrics",
    "MetricsRow",
    "Model",
    "TrainConfig",
    "TrainingDiverged",
    "build_model",
    "cross_entropy",
    "evaluate",
    "model_from_checkpoint",
    "model_to_checkpoint",
    "sample",
    "train",
]

METRICS_HEADER = "epoch,step,split,loss_nats,perplexity,grad_norm,wall_ms"


class TrainingDiverged(RuntimeError):
    """Raised when the loss or gradient norm stops being finite."""

    def __init__(self, epoch: int, step: int, loss: float, grad_norm: float):
        super().__init__(
            f"training diverged at epoch {epoch} step {step}: "
            f"loss={loss!r} grad_norm={grad_norm!r}"
        )
        self.epoch = epoch
        self.step = step
        self.loss = loss
        self.grad_norm = grad_norm


@dataclass
class TrainConfig:
    arch: CellKind
    layers: int = 1
    hidden: int = 64
    level: str = "char"
    seq_len: int = 50
    batch: int = 32
    epochs: int = 1
    lr: float = 0.25
    lr_decay: float = 1.0
    decay_start: int = 1
    clip: float | None = 2.5
    dropout: float = 0.0
    seed: int = 0
    init: str = "uniform008"
    threads: int = 1
    log_every: int = 100

    def __post_init__(self) -> None:
        self.arch = CellKind(self.arch)
        if self.arch not in TRAINABLE_KINDS:
            raise ValueError(f"architecture {self.arch.value!r} is not trainable")
        if self.level not in ("char", "word"):
            raise ValueError(f"level must be 'char' or 'word', got {self.level!r}")
        for name in ("layers", "hidden", "seq_len", "batch", "epochs", "threads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must lie in (0, 1]")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.clip is not None and self.clip <= 0:
            raise ValueError("clip must be positive or None")
        if self.init not in ("uniform008", "identity"):
            raise ValueError(f"unknown init scheme {self.init!r}")

    def lr_for_epoch(self, epoch: int) -> float:
        """Learning rate for 1-based epoch: decay multiplies per epoch past
        ``decay_start``."""
        return self.lr * self.lr_decay ** max(0, epoch - self.decay_start)


@dataclass
class Model:
    arch: CellKind
    level: str
    vocab: Vocab
    layers: list[CellParams]
    embed: np.ndarray | None  # (vocab, hidden) for word level, else None
    w_out: np.ndarray  # (vocab, hidden)
    b_out: np.ndarray  # (vocab,)

    @property
    def hidden(self) -> int:
        return self.layers[0].hidden_dim

    def tensors(self) -> dict[str, np.ndarray]:
        """All trainable tensors in canonical serialization order."""
        out: dict[str, np.ndarray] = {}
        if self.embed is not None:
            out["embed.E"] = self.embed
        for i, layer in enumerate(self.layers):
            for name, arr in layer.tensors.items():
                out[f"layer{i}.{name}"] = arr
        out["out.W"] = self.w_out
        out["out.b"] = self.b_out
        return out

    def num_params(self) -> int:
        return int(sum(t.size for t in self.tensors().values()))


def build_model(config: TrainConfig, vocab: Vocab, rng: np.random.Generator) -> Model:
    if vocab.level != config.level:
        raise ValueError(
            f"vocab level {vocab.level!r} does not match config level "
            f"{config.level!r}"
        )
    k = vocab.size
    h = config.hidden
    embed = rng.uniform(-0.08, 0.08, size=(k, h)) if config.level == "word" else None
    in0 = h if config.level == "word" else k
    layers = []
    for i in range(config.layers):
        layers.append(
            init_params(
                config.arch,
                in0 if i == 0 else h,
                h,
                rng,
                scheme=config.init,
            )
        )
    w_out = rng.uniform(-0.08, 0.08, size=(k, h))
    b_out = np.zeros(k)
    return Model(config.arch, config.level, vocab, layers, embed, w_out, b_out)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


def cross_entropy(logits: np.ndarray, target: int) -> float:
    """Negative log-likelihood in nats of ``target`` under softmax(logits)."""
    v = np.asarray(logits, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"logits must be a vector, got shape {v.shape}")
    if not 0 <= target < v.shape[0]:
        raise ValueError(f"target {target} out of range for {v.shape[0]} classes")
    m = float(v.max())
    lse = m + math.log(float(np.exp(v - m).sum()))
    return lse - float(v[target])


def _ce_batch(logits: np.ndarray, Y: np.ndarray) -> tuple[float, np.ndarray]:
    """Loss and gradient over a (T, B, K) logit block.

    The returned loss is the per-token mean (what the metrics report). The
    gradient is of the per-stream summed loss averaged over the batch, the
    usual truncated-backprop objective, whose scale matches unit-order
    learning rates and a clip threshold of a few.
    """
    T, B, K = logits.shape
    m = logits.max(axis=-1, keepdims=True)
    ex = np.exp(logits - m)
    se = ex.sum(axis=-1, keepdims=True)
    lse = (m + np.log(se))[..., 0]
    tgt = np.take_along_axis(logits, Y[..., None], axis=-1)[..., 0]
    loss = float((lse - tgt).sum() / (T * B))
    dlogits = ex / se
    ti, bi = np.meshgrid(np.arange(T), np.arange(B), indexing="ij")
    dlogits[ti, bi, Y] -= 1.0
    dlogits /= B
    return loss, dlogits


# ---------------------------------------------------------------------------
# Forward / backward over one window
# ---------------------------------------------------------------------------


def _encode_inputs(model: Model, X_ids: np.ndarray) -> np.ndarray:
    T, B = X_ids.shape
    if model.level == "word":
        return model.embed[X_ids]
    k = model.vocab.size
    out = np.zeros((T, B, k))
    out[np.arange(T)[:, None], np.arange(B)[None, :], X_ids] = 1.0
    return out


def _window_pass(
    model: Model,
    X_ids: np.ndarray,
    Y_ids: np.ndarray,
    carry: list[LayerCarry] | None,
    dropout: float,
    rng: np.random.Generator | None,
) -> tuple[float, dict[str, np.ndarray], list[LayerCarry]]:
    """Forward + backward over one window; returns (mean loss, grads, carry)."""
    X = _encode_inputs(model, X_ids)
    outs, tape = stack_forward(model.layers, X, dropout=dropout, rng=rng, carry=carry)
    top = outs[-1]
    top_mask = None
    if dropout > 0.0:
        keep = 1.0 - dropout
        top_mask = (rng.random(top.shape) < keep) / keep
        top = top * top_mask
    T, B, h = top.shape
    logits = (top.reshape(T * B, h) @ model.w_out.T).reshape(T, B, -1) + model.b_out
    loss, dlogits = _ce_batch(logits, Y_ids)

    k = model.vocab.size
    d2 = dlogits.reshape(T * B, k)
    grads: dict[str, np.ndarray] = {}
    grads["out.W"] = d2.T @ top.reshape(T * B, h)
    grads["out.b"] = d2.sum(axis=0)
    d_top = (d2 @ model.w_out).reshape(T, B, h)
    if top_mask is not None:
        d_top = d_top * top_mask
    layer_grads, dX = stack_backward(model.layers, tape, d_top)
    for i, lg in enumerate(layer_grads):
        for name, g in lg.items():
            grads[f"layer{i}.{name}"] = g
    if model.level == "word":
        dE = np.zeros_like(model.embed)
        np.add.at(dE, X_ids.reshape(T * B), dX.reshape(T * B, h))
        grads = {"embed.E": dE, **grads}
    return loss, grads, stack_carry_out(model.layers, tape)


def _slice_carry(
    carry: list[LayerCarry] | None, lo: int, hi: int
) -> list[LayerCarry] | None:
    if carry is None:
        return None
    out = []
    for c in carry:
        out.append(
            LayerCarry(
                h=None if c.h is None else c.h[lo:hi],
                c=None if c.c is None else c.c[lo:hi],
                x_prev=None if c.x_prev is None else c.x_prev[lo:hi],
            )
        )
    return out


def _merge_carries(chunks: list[list[LayerCarry]]) -> list[LayerCarry]:
    merged = []
    for per_layer in zip(*chunks):
        merged.append(
            LayerCarry(
                h=None
                if per_layer[0].h is None
                else np.concatenate([c.h for c in per_layer]),
                c=None
                if per_layer[0].c is None
                else np.concatenate([c.c for c in per_layer]),
                x_prev=None
                if per_layer[0].x_prev is None
                else np.concatenate([c.x_prev for c in per_layer]),
            )
        )
    return merged


def _step(
    model: Model,
    X_ids: np.ndarray,
    Y_ids: np.ndarray,
    carry: list[LayerCarry] | None,
    config: TrainConfig,
    rng: np.random.Generator,
    pool: ThreadPoolExecutor | None,
) -> tuple[float, dict[str, np.ndarray], list[LayerCarry]]:
    B = X_ids.shape[1]
    if pool is None or config.threads <= 1 or B < 2 * config.threads:
        drop_rng = rng if config.dropout > 0.0 else None
        return _window_pass(model, X_ids, Y_ids, carry, config.dropout, drop_rng)

    n = min(config.threads, B)
    bounds = [round(i * B / n) for i in range(n + 1)]
    seeds = [int(rng.integers(2**63)) for _ in range(n)]

    def run(i: int):
        lo, hi = bounds[i], bounds[i + 1]
        chunk_rng = (
            np.random.default_rng(seeds[i]) if config.dropout > 0.0 else None
        )
        return _window_pass(
            model,
            X_ids[:, lo:hi],
            Y_ids[:, lo:hi],
            _slice_carry(carry, lo, hi),
            config.dropout,
            chunk_rng,
        )

    results = list(pool.map(run, range(n)))
    total = 0.0
    grads: dict[str, np.ndarray] = {}
    for i, (loss_i, grads_i, _) in enumerate(results):
        w = (bounds[i + 1] - bounds[i]) / B
        total += w * loss_i
        for name, g in grads_i.items():
            if name in grads:
                grads[name] += w * g
            else:
                grads[name] = w * g
    carry_out = _merge_carries([r[2] for r in results])
    return total, grads, carry_out


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass
class MetricsRow:
    epoch: int
    step: int
    split: str
    loss_nats: float
    perplexity: float
    grad_norm: float
    wall_ms: float

    def as_csv(self) -> str:
        return (
            f"{self.epoch},{self.step},{self.split},{self.loss_nats!r},"
            f"{self.perplexity!r},{self.grad_norm!r},{self.wall_ms!r}"
        )


@dataclass
class Metrics:
    rows: list[MetricsRow] = field(default_factory=list)

    def log(
        self,
        epoch: int,
        step: int,
        split: str,
        loss: float,
        grad_norm: float,
        wall_ms: float,
    ) -> None:
        # exp overflows float64 just above 709 nats; clamp to inf rather
        # than letting a huge-but-finite loss crash the logger.
        ppl = math.exp(loss) if loss < 709.0 else math.inf
        self.rows.append(
            MetricsRow(epoch, step, split, loss, ppl, grad_norm, wall_ms)
        )

    def to_csv(self, path: str | Path) -> None:
        lines = [METRICS_HEADER]
        lines.extend(row.as_csv() for row in self.rows)
        Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Train / evaluate / sample
# ---------------------------------------------------------------------------


def train(config: TrainConfig, corpus: EncodedCorpus) -> tuple[Model, Metrics]:
    """Train a model on ``corpus.train``, validating once per epoch.

    Deterministic for a fixed config and corpus when threads == 1. Raises
    TrainingDiverged if the loss or gradient norm becomes non-finite.
    """
    if corpus.level != config.level:
        raise ValueError(
            f"corpus level {corpus.level!r} does not match config {config.level!r}"
        )
    rng = np.random.default_rng(config.seed)
    model = build_model(config, corpus.vocab, rng)
    metrics = Metrics()
    tensors = model.tensors()
    pool = (
        ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    )
    try:
        step = 0
        for epoch in range(1, config.epochs + 1):
            lr = config.lr_for_epoch(epoch)
            carry: list[LayerCarry] | None = None
            loss_sum = 0.0
            norm_sum = 0.0
            n_steps = 0
            epoch_t0 = time.perf_counter()
            for X_ids, Y_ids in batch_iter(
                corpus.train, config.seq_len, config.batch
            ):
                t0 = time.perf_counter()
                loss, grads, carry = _step(
                    model, X_ids, Y_ids, carry, config, rng, pool
                )
                grads, grad_norm = clip_global_norm(grads, config.clip)
                step += 1
                if not (math.isfinite(loss) and math.isfinite(grad_norm)):
                    raise TrainingDiverged(epoch, step, loss, grad_norm)
                for name, g in grads.items():
                    tensors[name] -= lr * g
                loss_sum += loss
                norm_sum += grad_norm
                n_steps += 1
                if step % config.log_every == 0:
                    wall = (time.perf_counter() - t0) * 1000.0
                    metrics.log(epoch, step, "train", loss, grad_norm, wall)
            if n_steps == 0:
                raise DataError("training split yields no windows")
            epoch_wall = (time.perf_counter() - epoch_t0) * 1000.0
            metrics.log(
                epoch, step, "train", loss_sum / n_steps, norm_sum / n_steps,
                epoch_wall,
            )
            t0 = time.perf_counter()
            val_loss, _ = evaluate(
                model, corpus, "valid",
                seq_len=config.seq_len, batch=config.batch,
            )
            metrics.log(
                epoch, step, "val", val_loss, 0.0,
                (time.perf_counter() - t0) * 1000.0,
            )
    finally:
        if pool is not None:
            pool.shutdown()
    return model, metrics


def evaluate(
    model: Model,
    corpus: EncodedCorpus,
    split: str = "valid",
    seq_len: int = 100,
    batch: int = 16,
) -> tuple[float, float]:
    """Mean per-token loss (nats) and perplexity on a split, dropout off.

    State carries across windows; tokens past the last full window of each
    stream are not scored. Batch and window shrink automatically for small
    splits.
    """
    try:
        ids = {"train": corpus.train, "valid": corpus.valid, "test": corpus.test}[
            split
        ]
    except KeyError:
        raise ValueError(f"unknown split {split!r}") from None
    n = len(ids)
    if n < 2:
        raise DataError(f"split {split!r} has {n} tokens; need at least 2")
    batch = max(1, min(batch, n // (seq_len + 1)))
    seq_len = min(seq_len, n - 1)
    carry: list[LayerCarry] | None = None
    loss_sum = 0.0
    count = 0
    for X_ids, Y_ids in batch_iter(ids, seq_len, batch):
        X = _encode_inputs(model, X_ids)
        outs, tape = stack_forward(model.layers, X, carry=carry)
        carry = stack_carry_out(model.layers, tape)
        top = outs[-1]
        T, B, h = top.shape
        logits = (top.reshape(T * B, h) @ model.w_out.T).reshape(T, B, -1)
        logits += model.b_out
        loss, _ = _ce_batch(logits, Y_ids)
        loss_sum += loss * T * B
        count += T * B
    if count == 0:
        raise DataError(f"split {split!r} yields no evaluation windows")
    mean = loss_sum / count
    return mean, math.exp(mean)


def sample(
    model: Model,
    seed_text: str,
    n: int,
    temperature: float = 1.0,
    seed: int = 0,
) -> str:
    """Continue ``seed_text`` by ``n`` sampled tokens.

    The seed must encode to at least one token, and every seed symbol must be
    in the vocabulary (listed in the error otherwise). Logits are divided by
    ``temperature`` before softmax sampling; n = 0 returns the seed
    unchanged.
    """
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    vocab = model.vocab
    if vocab.level == "word":
        tokens = seed_text.split()
        missing = sorted(set(tokens) - set(vocab.index))
        if missing:
            raise DataError(
                f"seed symbols not in vocabulary: {', '.join(map(repr, missing))}"
            )
    ids = vocab.encode(seed_text)
    if len(ids) == 0:
        raise DataError("seed text encodes to no tokens")
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return seed_text
    rng = np.random.default_rng(seed)
    carry: list[LayerCarry] | None = None
    out_ids: list[int] = []
    cur = ids[:, None]  # (T, 1)
    for _ in range(n):
        X = _encode_inputs(model, cur)
        outs, tape = stack_forward(model.layers, X, carry=carry)
        carry = stack_carry_out(model.layers, tape)
        logits = model.w_out @ outs[-1][-1, 0] + model.b_out
        probs = softmax(logits / temperature)
        nxt = int(rng.choice(vocab.size, p=probs))
        out_ids.append(nxt)
        cur = np.array([[nxt]], dtype=np.int64)
    tail = vocab.decode(out_ids)
    return seed_text + tail if vocab.level == "char" else seed_text + " " + tail


# ---------------------------------------------------------------------------
# Checkpoint bridge
# ---------------------------------------------------------------------------


def model_to_checkpoint(model: Model) -> Checkpoint:
    return Checkpoint(
        arch=model.arch,
        level=model.level,
        layers=len(model.layers),
        hidden=model.hidden,
        vocab_symbols=list(model.vocab.symbols),
        tensors={k: v.copy() for k, v in model.tensors().items()},
    )


def _expected_shapes(
    arch: CellKind, level: str, layers: int, hidden: int, k: int
) -> dict[str, tuple]:
    out: dict[str, tuple] = {}
    if level == "word":
        out["embed.E"] = (k, hidden)
    in0 = hidden if level == "word" else k
    for i in range(layers):
        for name, shape in param_shapes(arch, in0 if i == 0 else hidden, hidden).items():
            out[f"layer{i}.{name}"] = shape
    out["out.W"] = (k, hidden)
    out["out.b"] = (k,)
    return out


def model_from_checkpoint(ckpt: Checkpoint) -> Model:
    vocab = Vocab(ckpt.level, list(ckpt.vocab_symbols))
    expected = _expected_shapes(
        ckpt.arch, ckpt.level, ckpt.layers, ckpt.hidden, vocab.size
    )
    got = {name: tuple(arr.shape) for name, arr in ckpt.tensors.items()}
    if got != expected:
        missing = sorted(set(expected) - set(got))
        extra = sorted(set(got) - set(expected))
        wrong = sorted(
            name
            for name in set(got) & set(expected)
            if got[name] != expected[name]
        )
        parts = []
        if missing:
            parts.append(f"missing tensors: {', '.join(missing)}")
        if extra:
            parts.append(f"unexpected tensors: {', '.join(extra)}")
        if wrong:
            parts.append(
                "shape mismatch: "
                + ", ".join(
                    f"{n} is {got[n]}, expected {expected[n]}" for n in wrong
                )
            )
        raise CheckpointError("; ".join(parts))
    embed = ckpt.tensors.get("embed.E")
    in0 = ckpt.hidden if ckpt.level == "word" else vocab.size
    layers = []
    for i in range(ckpt.layers):
        names = param_shapes(
            ckpt.arch, in0 if i == 0 else ckpt.hidden, ckpt.hidden
        )
        tensors = {n: ckpt.tensors[f"layer{i}.{n}"].copy() for n in names}
        layers.append(
            CellParams(
                ckpt.arch,
                in0 if i == 0 else ckpt.hidden,
                ckpt.hidden,
                tensors,
            )
        )
    return Model(
        arch=ckpt.arch,
        level=ckpt.level,
        vocab=vocab,
        layers=layers,
        embed=None if embed is None else embed.copy(),
        w_out=ckpt.tensors["out.W"].copy(),
        b_out=ckpt.tensors["out.b"].copy(),
    )
