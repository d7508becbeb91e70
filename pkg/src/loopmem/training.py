"""Loss assembly, AdamW with cosine schedule, the training loop, checkpoints."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, ModelConfig, RunConfig, TrainConfig
from .data import Corpus, batch_at, batches_per_epoch, TokenBatch
from .model import (LayerHaltingTrace, ModelParams, expected_steps, init_params,
                    loop_scale_values, model_forward, params_from_arrays)
from .serialize import CorruptCheckpointError, load_tensors, save_tensors
from .tensor import Graph, Tensor


class TrainingAbort(RuntimeError):
    """Raised when a step produces non-finite gradients."""


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def ponder_loss(g: Graph, ce: Tensor, traces: list[LayerHaltingTrace],
                lam: float, n_max: int) -> tuple[Tensor, float, float]:
    """loss = ce + lambda * ntilde, where ntilde rescales the layer-mean
    expected step count into [0, 1]. Returns (loss, n_bar, n_tilde)."""
    if not traces:
        return ce, 1.0, 0.0
    n_bar_t: Tensor | None = None
    for tr in traces:
        n_bar_t = tr.expected_steps if n_bar_t is None else g.add(n_bar_t, tr.expected_steps)
    n_bar_t = g.scale(n_bar_t, 1.0 / len(traces))
    n_bar = float(n_bar_t.data)
    if n_max <= 1:
        return ce, n_bar, 0.0
    n_tilde_t = g.scale(g.add_scalar(n_bar_t, -1.0), 1.0 / (n_max - 1))
    n_tilde = float(n_tilde_t.data)
    if lam == 0.0:
        return ce, n_bar, n_tilde
    return g.add(ce, g.scale(n_tilde_t, lam)), n_bar, n_tilde


# ---------------------------------------------------------------------------
# schedule and optimizer
# ---------------------------------------------------------------------------


def cosine_lr(step: int, tc: TrainConfig) -> float:
    """Linear warmup from 0 to peak, then cosine decay to min_lr."""
    warmup = tc.resolved_warmup()
    min_lr = tc.resolved_min_lr()
    if step < warmup:
        return tc.peak_lr * step / warmup
    progress = (step - warmup) / max(1, tc.total_steps - warmup)
    progress = min(1.0, progress)
    return min_lr + 0.5 * (tc.peak_lr - min_lr) * (1.0 + math.cos(math.pi * progress))


def global_grad_norm(named: list[tuple[str, Tensor]]) -> float:
    total = 0.0
    for _, t in named:
        if t.grad is not None:
            total += float(np.sum(t.grad * t.grad))
    return math.sqrt(total)


def clip_gradients(named: list[tuple[str, Tensor]], max_norm: float) -> float:
    """Scale all gradients so the global norm is at most max_norm.
    Returns the pre-clip norm."""
    norm = global_grad_norm(named)
    if norm > max_norm:
        scale = max_norm / norm
        for _, t in named:
            if t.grad is not None:
                t.grad = t.grad * scale
    return norm


def is_decayed(name: str, t: Tensor) -> bool:
    """Weight decay applies to matrix weights only: not gains, biases, loop
    scales (all < 2-D) and not memory bank slots."""
    if t.data.ndim < 2:
        return False
    if ".local_memory." in name or name.startswith("global_memory."):
        return False
    return True


@dataclass
class TrainState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    rng: np.random.Generator


def init_train_state(params: ModelParams, seed: int) -> TrainState:
    named = params.named_tensors()
    return TrainState(
        step=0,
        m={name: np.zeros_like(t.data) for name, t in named},
        v={name: np.zeros_like(t.data) for name, t in named},
        rng=np.random.default_rng(seed),
    )


def adamw_step(params: ModelParams, state: TrainState, lr: float, tc: TrainConfig) -> None:
    """Bias-corrected Adam with decoupled weight decay on decayed tensors.
    Gradients must already be clipped; non-finite gradients abort."""
    t = state.step + 1
    c1 = 1.0 - tc.beta1 ** t
    c2 = 1.0 - tc.beta2 ** t
    for name, p in params.named_tensors():
        grad = p.grad
        if grad is None:
            grad = np.zeros_like(p.data)
        if not np.all(np.isfinite(grad)):
            raise TrainingAbort(f"non-finite gradient in {name!r} at step {state.step}")
        m = state.m[name]
        v = state.v[name]
        m *= tc.beta1
        m += (1.0 - tc.beta1) * grad
        v *= tc.beta2
        v += (1.0 - tc.beta2) * grad * grad
        if tc.weight_decay != 0.0 and is_decayed(name, p):
            p.data -= lr * tc.weight_decay * p.data
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + tc.adam_eps)
    state.step = t


# ---------------------------------------------------------------------------
# train step
# ---------------------------------------------------------------------------


@dataclass
class StepMetrics:
    step: int
    ce: float
    loss: float
    n_bar: float
    expected_steps: list[float]
    gate_local: list[float]
    gate_global: list[float]
    lr: float
    grad_norm: float
    tokens_per_sec: float


def train_step(batch: TokenBatch, params: ModelParams, state: TrainState,
               cfg: ModelConfig, tc: TrainConfig) -> StepMetrics:
    """forward -> loss -> backward -> clip -> AdamW. Deterministic given seed."""
    if batch.inputs.size != tc.batch_tokens:
        raise ConfigError("train.batch_size",
                          f"batch has {batch.inputs.size} tokens, expected {tc.batch_tokens}")
    t0 = time.perf_counter()
    params.zero_grads()
    g = Graph()
    res = model_forward(g, batch.inputs, params, cfg)
    ce = g.cross_entropy(res.logits, batch.targets)
    loss, n_bar, _ = ponder_loss(g, ce, res.traces, cfg.ponder_lambda, cfg.n_max)
    g.backward(loss)
    named = params.named_tensors()
    norm = clip_gradients(named, tc.grad_clip)
    lr = cosine_lr(state.step, tc)
    adamw_step(params, state, lr, tc)
    dt = time.perf_counter() - t0
    return StepMetrics(
        step=state.step,
        ce=float(ce.data),
        loss=float(loss.data),
        n_bar=n_bar,
        expected_steps=expected_steps(res.traces),
        gate_local=res.gate_local_means,
        gate_global=res.gate_global_means,
        lr=lr,
        grad_norm=norm,
        tokens_per_sec=batch.inputs.size / dt if dt > 0 else 0.0,
    )


# ---------------------------------------------------------------------------
# validation pass (telemetry source)
# ---------------------------------------------------------------------------


@dataclass
class EvalPass:
    val_ce: float
    expected_steps: list[float]
    gate_local: list[float]
    gate_global: list[float]


def evaluate_validation(params: ModelParams, cfg: ModelConfig, corpus: Corpus,
                        batch_size: int, seq_len: int, n_batches: int = 2) -> EvalPass:
    """Deterministic forward-only pass over the first windows of `corpus`."""
    bpe = batches_per_epoch(len(corpus), batch_size, seq_len)
    if bpe < 1:
        raise ConfigError("val_fraction",
                          f"validation corpus has {len(corpus)} tokens; "
                          f"need at least {batch_size * seq_len + 1}")
    n = min(n_batches, bpe)
    ces = []
    steps_acc: list[list[float]] = []
    gl_acc: list[list[float]] = []
    gg_acc: list[list[float]] = []
    span = batch_size * seq_len
    for i in range(n):
        window = corpus.tokens[i * span: i * span + span + 1].astype(np.int64)
        inputs = window[:-1].reshape(batch_size, seq_len)
        targets = window[1:].reshape(batch_size, seq_len)
        g = Graph()
        res = model_forward(g, inputs, params, cfg)
        ces.append(float(g.cross_entropy(res.logits, targets).data))
        steps_acc.append(expected_steps(res.traces))
        gl_acc.append(res.gate_local_means)
        gg_acc.append(res.gate_global_means)

    def col_mean(rows: list[list[float]]) -> list[float]:
        if not rows or not rows[0]:
            return []
        return [float(np.mean([r[i] for r in rows])) for i in range(len(rows[0]))]

    return EvalPass(
        val_ce=float(np.mean(ces)),
        expected_steps=col_mean(steps_acc),
        gate_local=col_mean(gl_acc),
        gate_global=col_mean(gg_acc),
    )


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------


def save_checkpoint(path: str | Path, params: ModelParams, state: TrainState) -> None:
    tensors: dict[str, np.ndarray] = {}
    for name, t in params.named_tensors():
        tensors[name] = t.data
        tensors[f"adam.m.{name}"] = state.m[name]
        tensors[f"adam.v.{name}"] = state.v[name]
    extra = {
        "config": params.cfg.to_dict(),
        "step": state.step,
        "rng_state": state.rng.bit_generator.state,
    }
    save_tensors(path, tensors, extra)


def load_checkpoint(path: str | Path) -> tuple[ModelParams, TrainState, ModelConfig]:
    arrays, extra = load_tensors(path)
    if "config" not in extra or "step" not in extra:
        raise CorruptCheckpointError(f"{path}: missing config/step metadata")
    cfg = ModelConfig.from_dict(extra["config"])
    model_arrays = {}
    m: dict[str, np.ndarray] = {}
    v: dict[str, np.ndarray] = {}
    for name, arr in arrays.items():
        if name.startswith("adam.m."):
            m[name[len("adam.m."):]] = np.asarray(arr, dtype=np.float64)
        elif name.startswith("adam.v."):
            v[name[len("adam.v."):]] = np.asarray(arr, dtype=np.float64)
        else:
            model_arrays[name] = arr
    params = params_from_arrays(cfg, model_arrays)
    missing = {n for n, _ in params.named_tensors()} - set(m)
    if missing:
        raise CorruptCheckpointError(f"{path}: optimizer state missing for {sorted(missing)}")
    rng = np.random.default_rng(0)
    rng.bit_generator.state = extra["rng_state"]
    state = TrainState(step=int(extra["step"]), m=m, v=v, rng=rng)
    return params, state, cfg


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    final_metrics: StepMetrics
    telemetry: list[dict] = field(default_factory=list)
    checkpoint_path: str | None = None


def telemetry_record_dict(step: int, ev: EvalPass, loss: float, lr: float) -> dict:
    return {
        "step": step,
        "ce": ev.val_ce,
        "loss": loss,
        "lr": lr,
        "n_bar": ev.expected_steps,
        "gate_local": ev.gate_local,
        "gate_global": ev.gate_global,
    }


def train_run(run: RunConfig, train_corpus: Corpus, val_corpus: Corpus | None = None,
              out_dir: str | Path | None = None,
              resume_from: str | Path | None = None) -> TrainResult:
    """Run the full loop: per-step optimization, per-interval telemetry, a
    JSONL log, and a final checkpoint. Deterministic given run.train.seed."""
    cfg, tc = run.model, run.train
    cfg.validate()
    tc.validate()
    if val_corpus is None or len(val_corpus) < tc.batch_tokens + 1:
        val_corpus = train_corpus

    if resume_from is not None:
        params, state, cfg = load_checkpoint(resume_from)
    else:
        params = init_params(cfg, tc.seed)
        state = init_train_state(params, tc.seed)

    out = Path(out_dir) if out_dir is not None else Path(run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jsonl_path = out / "telemetry.jsonl"
    ckpt_path = out / "checkpoint.ckpt"
    interval = run.resolved_telemetry_interval()

    telemetry: list[dict] = []
    mode = "a" if resume_from is not None else "w"
    metrics = None
    with open(jsonl_path, mode, encoding="utf-8") as log:
        for k in range(state.step, tc.total_steps):
            batch = batch_at(train_corpus, tc.batch_size, tc.seq_len, tc.seed, k)
            metrics = train_step(batch, params, state, cfg, tc)
            if state.step % interval == 0 or state.step == tc.total_steps:
                ev = evaluate_validation(params, cfg, val_corpus, tc.batch_size, tc.seq_len)
                ntilde = 0.0
                if ev.expected_steps and cfg.n_max > 1:
                    ntilde = (float(np.mean(ev.expected_steps)) - 1.0) / (cfg.n_max - 1)
                rec = telemetry_record_dict(state.step, ev,
                                            ev.val_ce + cfg.ponder_lambda * ntilde,
                                            metrics.lr)
                telemetry.append(rec)
                log.write(json.dumps(rec) + "\n")
                log.flush()
                save_checkpoint(ckpt_path, params, state)
    save_checkpoint(ckpt_path, params, state)
    return TrainResult(final_metrics=metrics, telemetry=telemetry,
                       checkpoint_path=str(ckpt_path))
