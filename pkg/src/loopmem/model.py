"""Pre-norm transformer blocks wrapped in an adaptive halting loop, with
gated retrieval from local (per-layer) and global (shared) memory banks.

Shapes use B (batch), T (sequence), D (embedding), H (heads), V (vocab),
M (memory slots), N (max loop iterations).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import ConfigError, ModelConfig
from .tensor import Graph, Tensor

# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------


@dataclass
class BlockParams:
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    w_ff1: Tensor
    b_ff1: Tensor
    w_ff2: Tensor
    b_ff2: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor


@dataclass
class HaltingRouter:
    w: Tensor   # (D+1, 1): hidden state concatenated with t/N
    b: Tensor   # scalar


@dataclass
class LoopScales:
    alpha: Tensor  # (N,)


@dataclass
class MemoryBank:
    k: Tensor              # (M, D)
    v: Tensor              # (M, D)
    key_norm_gain: Tensor  # (D,)


@dataclass
class MemoryInterface:
    query_norm_gain: Tensor
    w_local: Tensor | None = None
    w_gate_local: Tensor | None = None
    b_gate_local: Tensor | None = None
    w_global: Tensor | None = None
    w_gate_global: Tensor | None = None
    b_gate_global: Tensor | None = None


@dataclass
class LayerParams:
    block: BlockParams
    router: HaltingRouter | None = None
    scales: LoopScales | None = None
    local_bank: MemoryBank | None = None
    iface: MemoryInterface | None = None


@dataclass
class ModelParams:
    cfg: ModelConfig
    tok_emb: Tensor
    pos_emb: Tensor
    layers: list[LayerParams]
    global_bank: MemoryBank | None
    final_gain: Tensor
    final_bias: Tensor
    unembed: Tensor

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = [
            ("token_embedding", self.tok_emb),
            ("position_embedding", self.pos_emb),
        ]
        for i, lp in enumerate(self.layers):
            pre = f"layer.{i}"
            b = lp.block
            out += [
                (f"{pre}.block.w_q", b.w_q), (f"{pre}.block.w_k", b.w_k),
                (f"{pre}.block.w_v", b.w_v), (f"{pre}.block.w_o", b.w_o),
                (f"{pre}.block.w_ff1", b.w_ff1), (f"{pre}.block.b_ff1", b.b_ff1),
                (f"{pre}.block.w_ff2", b.w_ff2), (f"{pre}.block.b_ff2", b.b_ff2),
                (f"{pre}.block.ln1_gain", b.ln1_gain), (f"{pre}.block.ln1_bias", b.ln1_bias),
                (f"{pre}.block.ln2_gain", b.ln2_gain), (f"{pre}.block.ln2_bias", b.ln2_bias),
            ]
            if lp.router is not None:
                out += [(f"{pre}.halting_router.w", lp.router.w),
                        (f"{pre}.halting_router.b", lp.router.b)]
            if lp.scales is not None:
                out.append((f"{pre}.loop_scales.alpha", lp.scales.alpha))
            if lp.local_bank is not None:
                out += [(f"{pre}.local_memory.K", lp.local_bank.k),
                        (f"{pre}.local_memory.V", lp.local_bank.v),
                        (f"{pre}.local_memory.key_norm_gain", lp.local_bank.key_norm_gain)]
            if lp.iface is not None:
                m = lp.iface
                out.append((f"{pre}.memory_interface.query_norm_gain", m.query_norm_gain))
                if m.w_local is not None:
                    out += [(f"{pre}.memory_interface.w_local", m.w_local),
                            (f"{pre}.memory_interface.w_gate_local", m.w_gate_local),
                            (f"{pre}.memory_interface.b_gate_local", m.b_gate_local)]
                if m.w_global is not None:
                    out += [(f"{pre}.memory_interface.w_global", m.w_global),
                            (f"{pre}.memory_interface.w_gate_global", m.w_gate_global),
                            (f"{pre}.memory_interface.b_gate_global", m.b_gate_global)]
        if self.global_bank is not None:
            out += [("global_memory.K", self.global_bank.k),
                    ("global_memory.V", self.global_bank.v),
                    ("global_memory.key_norm_gain", self.global_bank.key_norm_gain)]
        out += [("final_norm.gain", self.final_gain),
                ("final_norm.bias", self.final_bias),
                ("unembedding", self.unembed)]
        return out

    def zero_grads(self) -> None:
        for _, t in self.named_tensors():
            t.zero_grad()

    def n_params(self) -> int:
        return sum(t.size for _, t in self.named_tensors())


# ---------------------------------------------------------------------------
# initialization
#
# Builder walks the parameter structure in a fixed order and asks the
# initializer for each array, so random draws are reproducible and loading
# from a checkpoint reuses the same walk.
# ---------------------------------------------------------------------------

Initializer = Callable[[str, tuple[int, ...], str], np.ndarray]


def _build_params(cfg: ModelConfig, init: Initializer) -> ModelParams:
    cfg.validate()
    d, dff, n = cfg.d_model, cfg.d_ff, cfg.n_max

    def t(name: str, shape: tuple[int, ...], kind: str) -> Tensor:
        return Tensor(init(name, shape, kind), requires_grad=True)

    tok = t("token_embedding", (cfg.vocab_size, d), "weight")
    pos = t("position_embedding", (cfg.t_max, d), "weight")
    layers = []
    for i in range(cfg.n_layers):
        pre = f"layer.{i}"
        block = BlockParams(
            w_q=t(f"{pre}.block.w_q", (d, d), "weight"),
            w_k=t(f"{pre}.block.w_k", (d, d), "weight"),
            w_v=t(f"{pre}.block.w_v", (d, d), "weight"),
            w_o=t(f"{pre}.block.w_o", (d, d), "out_weight"),
            w_ff1=t(f"{pre}.block.w_ff1", (d, dff), "weight"),
            b_ff1=t(f"{pre}.block.b_ff1", (dff,), "zero"),
            w_ff2=t(f"{pre}.block.w_ff2", (dff, d), "out_weight"),
            b_ff2=t(f"{pre}.block.b_ff2", (d,), "zero"),
            ln1_gain=t(f"{pre}.block.ln1_gain", (d,), "one"),
            ln1_bias=t(f"{pre}.block.ln1_bias", (d,), "zero"),
            ln2_gain=t(f"{pre}.block.ln2_gain", (d,), "one"),
            ln2_bias=t(f"{pre}.block.ln2_bias", (d,), "zero"),
        )
        router = scales = None
        if cfg.loops_enabled:
            router = HaltingRouter(
                w=t(f"{pre}.halting_router.w", (d + 1, 1), "zero"),
                b=t(f"{pre}.halting_router.b", (), "zero"),
            )
            scales = LoopScales(alpha=t(f"{pre}.loop_scales.alpha", (n,), "alpha"))
        local_bank = iface = None
        if cfg.local_enabled:
            local_bank = MemoryBank(
                k=t(f"{pre}.local_memory.K", (cfg.m_local, d), "weight"),
                v=t(f"{pre}.local_memory.V", (cfg.m_local, d), "weight"),
                key_norm_gain=t(f"{pre}.local_memory.key_norm_gain", (d,), "one"),
            )
        if cfg.local_enabled or cfg.global_enabled:
            iface = MemoryInterface(
                query_norm_gain=t(f"{pre}.memory_interface.query_norm_gain", (d,), "one"))
            if cfg.local_enabled:
                iface.w_local = t(f"{pre}.memory_interface.w_local", (d, d), "out_weight")
                iface.w_gate_local = t(f"{pre}.memory_interface.w_gate_local", (d, d), "weight")
                iface.b_gate_local = t(f"{pre}.memory_interface.b_gate_local", (d,), "gate_bias")
            if cfg.global_enabled:
                iface.w_global = t(f"{pre}.memory_interface.w_global", (d, d), "out_weight")
                iface.w_gate_global = t(f"{pre}.memory_interface.w_gate_global", (d, d), "weight")
                iface.b_gate_global = t(f"{pre}.memory_interface.b_gate_global", (d,), "gate_bias")
        layers.append(LayerParams(block=block, router=router, scales=scales,
                                  local_bank=local_bank, iface=iface))
    global_bank = None
    if cfg.global_enabled:
        global_bank = MemoryBank(
            k=t("global_memory.K", (cfg.m_global, d), "weight"),
            v=t("global_memory.V", (cfg.m_global, d), "weight"),
            key_norm_gain=t("global_memory.key_norm_gain", (d,), "one"),
        )
    return ModelParams(
        cfg=cfg,
        tok_emb=tok,
        pos_emb=pos,
        layers=layers,
        global_bank=global_bank,
        final_gain=t("final_norm.gain", (d,), "one"),
        final_bias=t("final_norm.bias", (d,), "zero"),
        unembed=t("unembedding", (d, cfg.vocab_size), "weight"),
    )


def _trunc_normal(rng: np.random.Generator, shape: tuple[int, ...], std: float) -> np.ndarray:
    x = rng.normal(0.0, std, shape)
    bad = np.abs(x) > 2.0 * std
    while bad.any():
        x[bad] = rng.normal(0.0, std, int(bad.sum()))
        bad = np.abs(x) > 2.0 * std
    return x


def init_params(cfg: ModelConfig, seed: int = 0) -> ModelParams:
    """Truncated-normal weights (std 0.02), residual output projections scaled
    by 1/sqrt(2L), zero-init halting router, alpha and gate biases at their
    configured starting values."""
    rng = np.random.default_rng(seed)
    out_scale = 1.0 / math.sqrt(2.0 * cfg.n_layers)

    def init(name: str, shape: tuple[int, ...], kind: str) -> np.ndarray:
        if kind == "weight":
            return _trunc_normal(rng, shape, 0.02)
        if kind == "out_weight":
            return _trunc_normal(rng, shape, 0.02 * out_scale)
        if kind == "zero":
            return np.zeros(shape)
        if kind == "one":
            return np.ones(shape)
        if kind == "alpha":
            return np.full(shape, cfg.alpha_init)
        if kind == "gate_bias":
            return np.full(shape, cfg.gate_bias_init)
        raise ValueError(f"unknown init kind {kind!r} for {name}")

    return _build_params(cfg, init)


def params_from_arrays(cfg: ModelConfig, arrays: dict[str, np.ndarray]) -> ModelParams:
    """Rebuild a parameter tree from named arrays (checkpoint loading)."""
    seen = set()

    def init(name: str, shape: tuple[int, ...], kind: str) -> np.ndarray:
        if name not in arrays:
            raise KeyError(f"checkpoint is missing parameter {name!r}")
        arr = np.asarray(arrays[name], dtype=np.float64)
        if arr.shape != shape:
            raise ValueError(f"parameter {name!r} has shape {arr.shape}, expected {shape}")
        seen.add(name)
        return arr

    params = _build_params(cfg, init)
    unused = set(arrays) - seen
    if unused:
        raise ValueError(f"checkpoint contains unexpected parameters: {sorted(unused)}")
    return params


# ---------------------------------------------------------------------------
# forward ops
# ---------------------------------------------------------------------------

_MASK_CACHE: dict[int, np.ndarray] = {}
_MASKED = -1e9


def causal_mask(t: int) -> np.ndarray:
    """(T, T) additive mask: 0 where key <= query position, -1e9 above."""
    m = _MASK_CACHE.get(t)
    if m is None:
        m = np.triu(np.full((t, t), _MASKED), k=1)
        _MASK_CACHE[t] = m
    return m


def block_forward(g: Graph, h: Tensor, p: BlockParams, cfg: ModelConfig) -> Tensor:
    """h + Attn(LN(h)), then + FFN(LN(.)): pre-norm residual block with
    causal multi-head attention (logit scale 1/sqrt(D/H))."""
    bsz, t, d = h.shape
    if t > cfg.t_max:
        raise ConfigError("model.t_max", f"sequence length {t} exceeds t_max {cfg.t_max}")
    hd = cfg.head_dim

    x = g.layer_norm(h, p.ln1_gain, p.ln1_bias, cfg.ln_eps)
    q = g.matmul(x, p.w_q)
    k = g.matmul(x, p.w_k)
    v = g.matmul(x, p.w_v)

    def heads(z: Tensor) -> Tensor:
        return g.permute(g.reshape(z, (bsz, t, cfg.n_heads, hd)), (0, 2, 1, 3))

    qh, kh, vh = heads(q), heads(k), heads(v)                   # (B, H, T, hd)
    scores = g.scale(g.matmul(qh, g.transpose_last2(kh)), 1.0 / math.sqrt(hd))
    scores = g.add(scores, Graph.constant(causal_mask(t)))
    attn = g.softmax_rows(scores)                               # (B, H, T, T)
    mixed = g.matmul(attn, vh)                                  # (B, H, T, hd)
    merged = g.reshape(g.permute(mixed, (0, 2, 1, 3)), (bsz, t, d))
    h = g.add(h, g.matmul(merged, p.w_o))

    y = g.layer_norm(h, p.ln2_gain, p.ln2_bias, cfg.ln_eps)
    y = g.add(g.matmul(y, p.w_ff1), p.b_ff1)
    y = g.gelu(y)
    y = g.add(g.matmul(y, p.w_ff2), p.b_ff2)
    return g.add(h, y)


def halting_probability(g: Graph, h: Tensor, t: int, router: HaltingRouter,
                        n_max: int) -> Tensor:
    """Per-token stop probability sigma(W_h [h; t/N] + b_h), shape (B, T)."""
    if not 1 <= t <= n_max:
        raise ValueError(f"halting step {t} out of range [1, {n_max}]")
    bsz, tlen, _ = h.shape
    feat = Graph.constant(np.full((bsz, tlen, 1), t / n_max))
    z = g.concat_last(h, feat)
    logit = g.add(g.matmul(z, router.w), router.b)   # (B, T, 1)
    return g.reshape(g.sigmoid(logit), (bsz, tlen))


def halting_distribution(g: Graph, ps: list[Tensor]) -> list[Tensor]:
    """Probability of halting at exactly step t: p_t * prod_{i<t}(1 - p_i),
    with the final step absorbing the remainder so the mass sums to one."""
    n = len(ps)
    if n == 1:
        return [Graph.constant(np.ones(ps[0].shape))]
    out: list[Tensor] = [ps[0]]
    surv = g.add_scalar(g.scale(ps[0], -1.0), 1.0)    # prod(1 - p_i) so far
    for t in range(1, n - 1):
        out.append(g.mul(ps[t], surv))
        surv = g.mul(surv, g.add_scalar(g.scale(ps[t], -1.0), 1.0))
    out.append(surv)
    return out


@dataclass
class LayerHaltingTrace:
    """Per-layer halting record; tensors stay in the graph for the loss."""

    p: list[Tensor]               # step probabilities, each (B, T)
    p_halt: list[Tensor]          # halting distribution, each (B, T)
    expected_steps: Tensor        # scalar: sum_t t * mean(p_halt_t)

    def p_means(self) -> list[float]:
        return [float(x.data.mean()) for x in self.p]

    def p_halt_means(self) -> list[float]:
        return [float(x.data.mean()) for x in self.p_halt]


def adaptive_loop_forward(g: Graph, h_in: Tensor, lp: LayerParams,
                          cfg: ModelConfig) -> tuple[Tensor, LayerHaltingTrace]:
    """Run the block N times with per-step softplus(alpha) update scaling and
    return the halting-weighted mixture of iterates.

    Every iteration always runs; the halting distribution only weights the
    mixture, so the whole computation stays differentiable.
    """
    assert lp.router is not None and lp.scales is not None
    bsz, tlen, _ = h_in.shape
    sp_alpha = g.softplus(lp.scales.alpha)            # (N,)
    h = h_in
    iterates: list[Tensor] = []
    ps: list[Tensor] = []
    for t in range(1, cfg.n_max + 1):
        delta = g.sub(block_forward(g, h, lp.block, cfg), h)
        h = g.add(h, g.mul(delta, g.index1d(sp_alpha, t - 1)))
        iterates.append(h)
        ps.append(halting_probability(g, h, t, lp.router, cfg.n_max))
    p_halt = halting_distribution(g, ps)

    h_out: Tensor | None = None
    e_n: Tensor | None = None
    for t, (ph, it) in enumerate(zip(p_halt, iterates), start=1):
        term = g.mul(g.reshape(ph, (bsz, tlen, 1)), it)
        h_out = term if h_out is None else g.add(h_out, term)
        e_term = g.scale(g.mean(ph), float(t))
        e_n = e_term if e_n is None else g.add(e_n, e_term)
    trace = LayerHaltingTrace(p=ps, p_halt=p_halt, expected_steps=e_n)
    return h_out, trace


def memory_retrieve(g: Graph, h: Tensor, bank: MemoryBank, iface: MemoryInterface,
                    cfg: ModelConfig) -> Tensor:
    """Attention over memory slots with QK-normalization, logit scale 1/sqrt(D)."""
    m = bank.k.shape[0]
    if m == 0:
        raise ConfigError("model.memory", "cannot retrieve from an empty memory bank")
    q = g.layer_norm(h, iface.query_norm_gain, None, cfg.ln_eps)
    kn = g.layer_norm(bank.k, bank.key_norm_gain, None, cfg.ln_eps)      # (M, D)
    scores = g.scale(g.matmul(q, g.transpose_last2(kn)), 1.0 / math.sqrt(cfg.d_model))
    return g.matmul(g.softmax_rows(scores), bank.v)                      # (B, T, D)


def gated_integrate(g: Graph, h: Tensor, m_local: Tensor | None, m_global: Tensor | None,
                    iface: MemoryInterface) -> tuple[Tensor, Tensor | None, Tensor | None]:
    """h + g_L * (W_L m_local) + g_G * (W_G m_global), gates elementwise
    sigmoid(W_g h + b_g). Returns (enriched, local gate, global gate)."""
    out = h
    gate_l = gate_g = None
    if m_local is not None:
        gate_l = g.sigmoid(g.add(g.matmul(h, iface.w_gate_local), iface.b_gate_local))
        out = g.add(out, g.mul(gate_l, g.matmul(m_local, iface.w_local)))
    if m_global is not None:
        gate_g = g.sigmoid(g.add(g.matmul(h, iface.w_gate_global), iface.b_gate_global))
        out = g.add(out, g.mul(gate_g, g.matmul(m_global, iface.w_global)))
    return out, gate_l, gate_g


@dataclass
class ForwardResult:
    logits: Tensor                          # (B, T, V)
    traces: list[LayerHaltingTrace] = field(default_factory=list)
    gate_local_means: list[float] = field(default_factory=list)
    gate_global_means: list[float] = field(default_factory=list)


def model_forward(g: Graph, tokens: np.ndarray, params: ModelParams,
                  cfg: ModelConfig) -> ForwardResult:
    """Embed, then per layer: memory enrichment once, adaptive loop (or a
    single plain block), then final norm and unembedding."""
    tokens = np.asarray(tokens)
    if tokens.ndim != 2:
        raise ValueError(f"tokens must be (B, T), got shape {tokens.shape}")
    bsz, t = tokens.shape
    if t > cfg.t_max:
        raise ConfigError("model.t_max", f"sequence length {t} exceeds t_max {cfg.t_max}")
    tok = g.embedding(params.tok_emb, tokens)
    pos = g.embedding(params.pos_emb, np.arange(t))
    h = g.add(tok, pos)

    res = ForwardResult(logits=None)  # type: ignore[arg-type]
    for lp in params.layers:
        if lp.iface is not None:
            ml = memory_retrieve(g, h, lp.local_bank, lp.iface, cfg) \
                if lp.local_bank is not None else None
            mg = memory_retrieve(g, h, params.global_bank, lp.iface, cfg) \
                if params.global_bank is not None else None
            h, gate_l, gate_g = gated_integrate(g, h, ml, mg, lp.iface)
            if gate_l is not None:
                res.gate_local_means.append(float(gate_l.data.mean()))
            if gate_g is not None:
                res.gate_global_means.append(float(gate_g.data.mean()))
        if cfg.loops_enabled:
            h, trace = adaptive_loop_forward(g, h, lp, cfg)
            res.traces.append(trace)
        else:
            h = block_forward(g, h, lp.block, cfg)

    x = g.layer_norm(h, params.final_gain, params.final_bias, cfg.ln_eps)
    res.logits = g.matmul(x, params.unembed)
    return res


def expected_steps(traces: list[LayerHaltingTrace]) -> list[float]:
    """Per-layer expected iteration count, averaged over batch and tokens."""
    return [float(tr.expected_steps.data) for tr in traces]


def loop_scale_values(params: ModelParams) -> list[list[float]]:
    """softplus(alpha_t) per layer per step (telemetry)."""
    out = []
    for lp in params.layers:
        if lp.scales is None:
            out.append([])
        else:
            a = lp.scales.alpha.data
            out.append([float(x) for x in (np.maximum(a, 0) + np.log1p(np.exp(-np.abs(a))))])
    return out
