"""Bits-per-byte evaluation, telemetry records, the loop-usage transition
detector, and CSV export."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ModelConfig
from .data import BOS_ID, Corpus, tokenize_bytes
from .model import LayerHaltingTrace, ModelParams, expected_steps, model_forward
from .tensor import Graph

LN2 = math.log(2.0)

# transition detector constants
SMOOTH_WINDOW = 5
TRANSITION_THRESHOLD = 0.05

CSV_HEADER = "step,val_ce,layer,expected_steps,gate_local_mean,gate_global_mean,n_bar"


def bpb(nll_nats: float, token_len: int, byte_len: int) -> float:
    """bits/byte = nll / ln(2) * (tokens / bytes), nll being the mean
    per-token negative log-likelihood in nats."""
    if token_len < 1:
        raise ValueError(f"token_len must be >= 1, got {token_len}")
    if byte_len < 1:
        raise ValueError(f"byte_len must be >= 1, got {byte_len}")
    return nll_nats / LN2 * (token_len / byte_len)


# ---------------------------------------------------------------------------
# answer-only scoring
# ---------------------------------------------------------------------------


@dataclass
class EvalItem:
    context: str
    answer: str
    domain: str = "default"

    def validate(self) -> None:
        if len(self.answer.encode("utf-8")) < 1:
            raise ValueError("eval item has an empty answer")


def load_eval_items(path: str | Path) -> list[EvalItem]:
    items = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            item = EvalItem(context=raw["context"], answer=raw["answer"],
                            domain=raw.get("domain", "default"))
            try:
                item.validate()
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            items.append(item)
    return items


def save_eval_items(items: Sequence[EvalItem], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for it in items:
            fh.write(json.dumps({"context": it.context, "answer": it.answer,
                                 "domain": it.domain}) + "\n")


def make_synthetic_eval_set(seed: int = 0, n_math: int = 16, n_text: int = 16,
                            corpus: Corpus | None = None) -> list[EvalItem]:
    """Small bundled stand-in mirroring a math/text split: two-operand
    arithmetic items plus held-out corpus continuations when available."""
    rng = np.random.default_rng(seed)
    items = []
    for _ in range(n_math):
        a, b = int(rng.integers(2, 100)), int(rng.integers(2, 100))
        if rng.integers(2) == 0:
            items.append(EvalItem(context=f"{a}+{b}=", answer=str(a + b), domain="math"))
        else:
            items.append(EvalItem(context=f"{a}*{b}=", answer=str(a * b), domain="math"))
    if corpus is not None and len(corpus) > 64:
        from .data import detokenize_bytes
        for _ in range(n_text):
            start = int(rng.integers(0, len(corpus) - 48))
            chunk = detokenize_bytes(corpus.tokens[start: start + 48])
            ctx, ans = chunk[:32], chunk[32:40]
            if not ans:
                continue
            items.append(EvalItem(context=ctx.decode("latin-1"),
                                  answer=ans.decode("latin-1"), domain="text"))
    return items


def _score_item(params: ModelParams, cfg: ModelConfig, item: EvalItem) -> float | None:
    """BPB for one item, conditioning on the context and scoring answer
    positions only. Returns None when the item does not fit in t_max."""
    ctx = tokenize_bytes(item.context.encode("utf-8"))
    ans = np.frombuffer(item.answer.encode("utf-8"), dtype=np.uint8).astype(np.int64)
    full = np.concatenate([ctx.astype(np.int64), ans])
    if full.size - 1 > cfg.t_max:
        return None
    inputs = full[:-1][None, :]
    targets = full[1:]
    g = Graph()
    res = model_forward(g, inputs, params, cfg)
    logits = res.logits.data[0]                       # (T, V)
    m = logits.max(axis=-1, keepdims=True)
    lse = (m + np.log(np.exp(logits - m).sum(axis=-1, keepdims=True)))[:, 0]
    nll_all = lse - logits[np.arange(targets.size), targets]
    n_ans = ans.size
    mean_nll = float(nll_all[-n_ans:].mean())
    byte_len = len(item.answer.encode("utf-8"))
    return bpb(mean_nll, n_ans, byte_len)


@dataclass
class EvalReport:
    domain_bpb: dict[str, float]
    item_bpb: list[float | None]
    skipped: int

    def to_dict(self) -> dict:
        return {"domain_bpb": self.domain_bpb, "skipped": self.skipped,
                "items": len(self.item_bpb)}


def _worker_count(max_workers: int | None) -> int:
    if max_workers is not None:
        return max(1, max_workers)
    env = os.environ.get("LOOPMEM_THREADS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def eval_bpb(params: ModelParams, cfg: ModelConfig, items: Sequence[EvalItem],
             max_workers: int | None = None) -> EvalReport:
    """Per-domain unweighted mean BPB. Items are scored independently (and
    possibly concurrently); aggregation always runs in item order."""
    workers = _worker_count(max_workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(lambda it: _score_item(params, cfg, it), items))
    else:
        scores = [_score_item(params, cfg, it) for it in items]
    by_domain: dict[str, list[float]] = {}
    skipped = 0
    for it, s in zip(items, scores):
        if s is None:
            skipped += 1
            continue
        by_domain.setdefault(it.domain, []).append(s)
    domain_bpb = {d: float(np.mean(v)) for d, v in sorted(by_domain.items())}
    return EvalReport(domain_bpb=domain_bpb, item_bpb=scores, skipped=skipped)


# ---------------------------------------------------------------------------
# telemetry
# ---------------------------------------------------------------------------


@dataclass
class TelemetryRecord:
    step: int
    val_ce: float
    expected_steps: list[float]       # E[n_l] per layer
    n_bar: float
    gate_local: list[float]
    gate_global: list[float]
    loop_scales: list[list[float]] = field(default_factory=list)

    def validate(self, n_max: int) -> None:
        for e in self.expected_steps:
            if not 1.0 - 1e-9 <= e <= n_max + 1e-9:
                raise ValueError(f"expected steps {e} outside [1, {n_max}]")
        for v in self.gate_local + self.gate_global:
            if not 0.0 < v < 1.0:
                raise ValueError(f"gate mean {v} outside (0, 1)")


def record_telemetry(step: int, val_ce: float, traces: list[LayerHaltingTrace],
                     gate_local: list[float], gate_global: list[float],
                     scales: list[list[float]], n_layers: int) -> TelemetryRecord:
    """Pure aggregation of an evaluation pass into one record."""
    steps = expected_steps(traces) if traces else [1.0] * n_layers
    return TelemetryRecord(
        step=step,
        val_ce=val_ce,
        expected_steps=steps,
        n_bar=float(np.mean(steps)),
        gate_local=list(gate_local),
        gate_global=list(gate_global),
        loop_scales=[list(s) for s in scales],
    )


def records_from_jsonl(path: str | Path) -> list[TelemetryRecord]:
    """Rebuild telemetry records from a training JSONL log."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            steps = list(raw["n_bar"])
            records.append(TelemetryRecord(
                step=int(raw["step"]),
                val_ce=float(raw["ce"]),
                expected_steps=steps,
                n_bar=float(np.mean(steps)) if steps else 1.0,
                gate_local=list(raw.get("gate_local", [])),
                gate_global=list(raw.get("gate_global", [])),
            ))
    return records


# ---------------------------------------------------------------------------
# phase-transition detector
# ---------------------------------------------------------------------------


def detect_transition(series: Sequence[tuple[int, float, float]],
                      n_max: int) -> tuple[int, float] | None:
    """Find the onset of rising loop usage: first point whose smoothed n_bar
    exceeds the running minimum by 0.05 * (n_max - 1).

    `series` is (step, val_ce, n_bar) tuples in step order; needs >= 10
    points, otherwise returns None.
    """
    if len(series) < 10:
        return None
    nbar = np.array([s[2] for s in series], dtype=np.float64)
    half = SMOOTH_WINDOW // 2
    smoothed = np.array([nbar[max(0, i - half): i + half + 1].mean()
                         for i in range(nbar.size)])
    threshold = TRANSITION_THRESHOLD * (n_max - 1)
    min_so_far = smoothed[0]
    for i in range(1, smoothed.size):
        if smoothed[i] > min_so_far + threshold:
            return int(series[i][0]), float(series[i][1])
        min_so_far = min(min_so_far, smoothed[i])
    return None


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def export_csv(records: Sequence[TelemetryRecord], path: str | Path) -> None:
    """One row per (record, layer), sorted by (step, layer), 6 significant
    digits. Gate columns are `nan` when the model has no memory."""
    if not records:
        raise ValueError("export_csv needs at least one record")
    rows = []
    for rec in sorted(records, key=lambda r: r.step):
        for layer, e in enumerate(rec.expected_steps):
            gl = rec.gate_local[layer] if layer < len(rec.gate_local) else float("nan")
            gg = rec.gate_global[layer] if layer < len(rec.gate_global) else float("nan")
            rows.append((rec.step, layer,
                         f"{rec.step},{_fmt(rec.val_ce)},{layer},{_fmt(e)},"
                         f"{_fmt(gl)},{_fmt(gg)},{_fmt(rec.n_bar)}"))
    rows.sort(key=lambda r: (r[0], r[1]))
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(CSV_HEADER + "\n")
            for _, _, line in rows:
                fh.write(line + "\n")
    except OSError as exc:
        raise OSError(f"failed writing telemetry CSV to {path}: {exc}") from exc


def transition_sidecar_path(csv_path: str | Path) -> Path:
    return Path(str(csv_path) + ".transition.json")


def write_transition_sidecar(csv_path: str | Path, records: Sequence[TelemetryRecord],
                             n_max: int) -> bool:
    """Write `<csv>.transition.json` next to the CSV when the detector fires.
    Returns True if a sidecar was written."""
    series = [(r.step, r.val_ce, r.n_bar) for r in sorted(records, key=lambda r: r.step)]
    found = detect_transition(series, n_max)
    side = transition_sidecar_path(csv_path)
    if found is None:
        if side.exists():
            side.unlink()
        return False
    step, ce = found
    with open(side, "w", encoding="utf-8") as fh:
        json.dump({"step": step, "ce": ce}, fh)
        fh.write("\n")
    return True
