"""Named model configurations: the ablation-table rows at two scales.

"paper" presets mirror the published reference dimensions (config only; they
are never trained here). "tiny" presets are the desk-scale equivalents used
by tests and the verify suites. Iso-parameter rows widen the FFN to match the
target model's exact parameter count; iso-FLOP rows triple the depth, and the
memory iso-FLOP row additionally widens the FFN to match per-token cost.
"""

from __future__ import annotations

from dataclasses import replace

from .config import ModelConfig
from .flops import flop_estimate, match_ffn_width, match_ffn_width_flops, param_count

_SCALES = {
    "paper": dict(n_layers=12, d_model=768, n_heads=12, d_ff=3072,
                  vocab_size=50304, t_max=1024, m_local=1024, m_global=512),
    "tiny": dict(n_layers=4, d_model=64, n_heads=4, d_ff=256,
                 vocab_size=257, t_max=128, m_local=32, m_global=16),
}

_ISOFLOP_DEPTH_FACTOR = 3  # matches the 3-loop model's block applications


def _rows(base: dict) -> dict[str, ModelConfig]:
    slots = {"m_local": base.pop("m_local"), "m_global": base.pop("m_global")}
    plain = ModelConfig(**base, n_max=1, loops_enabled=False, memory_enabled=False,
                        m_local=0, m_global=0)
    loops = {n: ModelConfig(**base, n_max=n, loops_enabled=True, memory_enabled=False,
                            m_local=0, m_global=0)
             for n in (3, 5, 7)}
    mem = {b: ModelConfig(**base, **slots, n_max=3, loops_enabled=True,
                          memory_enabled=True, gate_bias_init=float(b))
           for b in (-3, 0, 3)}

    rows: dict[str, ModelConfig] = {}
    rows["isopar"] = replace(plain, d_ff=match_ffn_width(plain, param_count(loops[3])))
    rows["loop3"] = loops[3]
    rows["loop5"] = loops[5]
    rows["loop7"] = loops[7]
    rows["isoflop"] = replace(plain, n_layers=plain.n_layers * _ISOFLOP_DEPTH_FACTOR)
    rows["isopar-m"] = replace(plain, d_ff=match_ffn_width(plain, param_count(mem[3])))
    rows["mem-closed"] = mem[-3]
    rows["mem-balanced"] = mem[0]
    rows["mem-open"] = mem[3]
    deep = replace(plain, n_layers=plain.n_layers * _ISOFLOP_DEPTH_FACTOR)
    target = flop_estimate(mem[3], base["t_max"])
    rows["isoflop-m"] = replace(deep, d_ff=match_ffn_width_flops(deep, target, base["t_max"]))
    return rows


def _build() -> dict[str, ModelConfig]:
    presets = {}
    for scale, base in _SCALES.items():
        base = dict(base)
        for name, cfg in _rows(base).items():
            presets[f"{scale}-{name}"] = cfg
    return presets


_PRESETS = _build()


def list_presets() -> list[str]:
    return sorted(_PRESETS)


def get_preset(name: str) -> ModelConfig:
    if name not in _PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
    return replace(_PRESETS[name])
