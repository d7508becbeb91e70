"""Forward-pass FLOP accounting and exact parameter counting.

All figures count multiply-accumulate pairs twice (one multiply + one add),
per token unless stated otherwise. Looped layers run all N block
applications, so their block cost scales with N.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .config import ModelConfig


def param_count(cfg: ModelConfig) -> int:
    """Exact trainable-parameter count as a pure function of the config."""
    d, dff, v = cfg.d_model, cfg.d_ff, cfg.vocab_size
    total = v * d + cfg.t_max * d                 # token + position embeddings
    per_layer = 4 * d * d + 2 * d * dff + dff + d + 4 * d   # block + LNs
    if cfg.loops_enabled:
        per_layer += (d + 1) + 1 + cfg.n_max      # router + loop scales
    if cfg.local_enabled:
        per_layer += 2 * cfg.m_local * d + d      # local bank + key norm gain
    if cfg.local_enabled or cfg.global_enabled:
        per_layer += d                            # query norm gain
        if cfg.local_enabled:
            per_layer += 2 * d * d + d            # W_L, W_gL, b_gL
        if cfg.global_enabled:
            per_layer += 2 * d * d + d            # W_G, W_gG, b_gG
    total += cfg.n_layers * per_layer
    if cfg.global_enabled:
        total += 2 * cfg.m_global * d + d         # global bank + key norm gain
    total += 2 * d                                # final norm
    total += d * v                                # unembedding
    return total


def block_application_flops(cfg: ModelConfig, seq_len: int) -> int:
    """Per-token cost of one block application: QKVO projections, attention
    scores + mixing, and the FFN."""
    d = cfg.d_model
    return 8 * d * d + 4 * seq_len * d + 4 * d * cfg.d_ff


def block_applications(cfg: ModelConfig) -> int:
    return cfg.n_layers * (cfg.n_max if cfg.loops_enabled else 1)


@dataclass
class FlopBreakdown:
    blocks: int
    memory: int
    gates: int
    router: int
    unembedding: int

    @property
    def total(self) -> int:
        return self.blocks + self.memory + self.gates + self.router + self.unembedding


def flop_components(cfg: ModelConfig, seq_len: int) -> FlopBreakdown:
    """Per-token FLOP breakdown."""
    d = cfg.d_model
    blocks = block_applications(cfg) * block_application_flops(cfg, seq_len)
    memory = 0
    gates = 0
    if cfg.memory_enabled:
        per_layer = 0
        if cfg.local_enabled:
            per_layer += 2 * cfg.m_local * d
        if cfg.global_enabled:
            per_layer += 2 * cfg.m_global * d
        memory = cfg.n_layers * per_layer
        gates = cfg.n_layers * 6 * d * d
    router = cfg.n_layers * cfg.n_max * 2 * (d + 1) if cfg.loops_enabled else 0
    return FlopBreakdown(blocks=blocks, memory=memory, gates=gates, router=router,
                         unembedding=2 * d * cfg.vocab_size)


def flop_estimate(cfg: ModelConfig, seq_len: int, mode: str = "per_token") -> float:
    """Forward-pass FLOPs, per token or per sequence of length seq_len."""
    if mode not in ("per_token", "per_sequence"):
        raise ValueError(f"mode must be per_token or per_sequence, got {mode!r}")
    per_token = flop_components(cfg, seq_len).total
    return float(per_token if mode == "per_token" else per_token * seq_len)


def match_depth(cfg: ModelConfig) -> int:
    """Plain-layer count whose block-application cost equals the looped
    config's (N applications per layer -> N*L plain layers)."""
    return block_applications(cfg)


def match_ffn_width(cfg: ModelConfig, target_params: int) -> int:
    """FFN width bringing cfg's parameter count closest to target_params.
    Parameter count is affine in d_ff, so this solves exactly."""
    base = param_count(replace(cfg, d_ff=0))
    slope = param_count(replace(cfg, d_ff=1)) - base
    raw = (target_params - base) / slope
    lo = max(1, int(raw))
    best = min((lo, lo + 1),
               key=lambda x: abs(param_count(replace(cfg, d_ff=x)) - target_params))
    return best


def match_ffn_width_flops(cfg: ModelConfig, target_flops: float, seq_len: int) -> int:
    """FFN width bringing cfg's per-token FLOPs closest to target_flops."""
    base = flop_estimate(replace(cfg, d_ff=0), seq_len)
    slope = flop_estimate(replace(cfg, d_ff=1), seq_len) - base
    raw = (target_flops - base) / slope
    lo = max(1, int(raw))
    best = min((lo, lo + 1),
               key=lambda x: abs(flop_estimate(replace(cfg, d_ff=x), seq_len) - target_flops))
    return best
