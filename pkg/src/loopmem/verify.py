"""Self-contained verification suites: gradient check, halting normalization,
near-identity initialization, memory permutation invariance, and agreement
with an independent plain-transformer oracle.

The oracle below deliberately avoids the autodiff engine: plain numpy, BLAS
matmuls, its own layer norm / softmax / gelu. Agreement is therefore checked
to a tolerance, never bit-exactly.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import ModelConfig
from .gradcheck import grad_check
from .model import ModelParams, init_params, model_forward
from .tensor import Graph, Tensor
from .training import ponder_loss


def tiny_config(loops: bool = True, memory: bool = True, **overrides) -> ModelConfig:
    """The desk-scale reference configuration used throughout verification."""
    kw = dict(n_layers=4, d_model=64, n_heads=4, d_ff=256, vocab_size=257,
              t_max=128, n_max=3, m_local=32, m_global=16,
              loops_enabled=loops, memory_enabled=memory)
    if not memory:
        kw.update(m_local=0, m_global=0)
    kw.update(overrides)
    return ModelConfig(**kw)


# ---------------------------------------------------------------------------
# independent plain pre-norm transformer (numpy only)
# ---------------------------------------------------------------------------


def _ln_np(x: np.ndarray, gain: np.ndarray, bias: np.ndarray | None, eps: float) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    y = (x - mu) / np.sqrt(var + eps) * gain
    return y if bias is None else y + bias


def _softmax_np(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _gelu_np(x: np.ndarray) -> np.ndarray:
    c = math.sqrt(2.0 / math.pi)
    return 0.5 * x * (1.0 + np.tanh(c * (x + 0.044715 * x ** 3)))


def plain_transformer_logits(arrays: dict[str, np.ndarray], cfg: ModelConfig,
                             tokens: np.ndarray) -> np.ndarray:
    """Reference forward pass for a plain pre-norm decoder with the given
    weights: embeddings, L blocks, final norm, untied unembedding."""
    bsz, t = tokens.shape
    d, hd = cfg.d_model, cfg.head_dim
    h = arrays["token_embedding"][tokens] + arrays["position_embedding"][:t]
    mask = np.triu(np.full((t, t), -np.inf), k=1)
    for i in range(cfg.n_layers):
        p = lambda s: arrays[f"layer.{i}.block.{s}"]
        x = _ln_np(h, p("ln1_gain"), p("ln1_bias"), cfg.ln_eps)
        q = (x @ p("w_q")).reshape(bsz, t, cfg.n_heads, hd).transpose(0, 2, 1, 3)
        k = (x @ p("w_k")).reshape(bsz, t, cfg.n_heads, hd).transpose(0, 2, 1, 3)
        v = (x @ p("w_v")).reshape(bsz, t, cfg.n_heads, hd).transpose(0, 2, 1, 3)
        scores = q @ k.transpose(0, 1, 3, 2) / math.sqrt(hd) + mask
        mixed = _softmax_np(scores) @ v
        h = h + mixed.transpose(0, 2, 1, 3).reshape(bsz, t, d) @ p("w_o")
        y = _ln_np(h, p("ln2_gain"), p("ln2_bias"), cfg.ln_eps)
        h = h + _gelu_np(y @ p("w_ff1") + p("b_ff1")) @ p("w_ff2") + p("b_ff2")
    x = _ln_np(h, arrays["final_norm.gain"], arrays["final_norm.bias"], cfg.ln_eps)
    return x @ arrays["unembedding"]


def stripped_path_logits(arrays: dict[str, np.ndarray], cfg: ModelConfig,
                         tokens: np.ndarray) -> np.ndarray:
    """Embeddings straight into the final norm and unembedding (no blocks)."""
    t = tokens.shape[1]
    h = arrays["token_embedding"][tokens] + arrays["position_embedding"][:t]
    x = _ln_np(h, arrays["final_norm.gain"], arrays["final_norm.bias"], cfg.ln_eps)
    return x @ arrays["unembedding"]


def _param_arrays(params: ModelParams) -> dict[str, np.ndarray]:
    return {name: t.data for name, t in params.named_tensors()}


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    elapsed: float = 0.0

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.name}: {self.detail} ({self.elapsed:.1f}s)"


def run_gradient_suite(seed: int = 0, max_elements: int = 4,
                       tol: float = 1e-4) -> SuiteResult:
    """Full-model gradient check on the tiny config (B=2, T=16), central
    differences at eps=1e-5. lambda > 0 so the ponder branch is exercised."""
    t0 = time.time()
    cfg = tiny_config(ponder_lambda=0.1)
    params = init_params(cfg, seed)
    rng = np.random.default_rng(seed + 1)
    tokens = rng.integers(0, cfg.vocab_size, size=(2, 16))
    targets = rng.integers(0, cfg.vocab_size, size=(2, 16))

    def f(g: Graph) -> Tensor:
        res = model_forward(g, tokens, params, cfg)
        ce = g.cross_entropy(res.logits, targets)
        loss, _, _ = ponder_loss(g, ce, res.traces, cfg.ponder_lambda, cfg.n_max)
        return loss

    report = grad_check(f, params.named_tensors(), eps=1e-5, tol=tol,
                        max_elements=max_elements)
    worst = max(report.entries, key=lambda e: e.max_rel_err)
    return SuiteResult(
        name="gradient-check",
        passed=report.passed,
        detail=f"max rel err {report.max_rel_err:.3e} (worst: {worst.name}), tol {tol:g}",
        elapsed=time.time() - t0,
    )


def run_halting_suite(draws: int = 1000, seed: int = 0) -> SuiteResult:
    """Random router/hidden-state draws: the halting mass at every token must
    sum to 1 within 1e-9 and expected steps must lie in [1, N]."""
    from .model import HaltingRouter, halting_distribution, halting_probability

    t0 = time.time()
    rng = np.random.default_rng(seed)
    worst_sum_err = 0.0
    worst_e = (1.0, 1.0)
    for _ in range(draws):
        d = int(rng.integers(4, 24))
        n_max = int(rng.integers(1, 6))
        bsz, tlen = 2, int(rng.integers(1, 6))
        router = HaltingRouter(w=Tensor(rng.normal(0, 1.0, (d + 1, 1)), requires_grad=True),
                               b=Tensor(rng.normal(0, 1.0, ()), requires_grad=True))
        g = Graph()
        h = Graph.constant(rng.normal(0, 1.0, (bsz, tlen, d)))
        ps = [halting_probability(g, h, t, router, n_max) for t in range(1, n_max + 1)]
        p_halt = halting_distribution(g, ps)
        total = np.zeros((bsz, tlen))
        e_n = np.zeros((bsz, tlen))
        for t, ph in enumerate(p_halt, start=1):
            total += ph.data
            e_n += t * ph.data
        worst_sum_err = max(worst_sum_err, float(np.abs(total - 1.0).max()))
        worst_e = (min(worst_e[0], float(e_n.min())), max(worst_e[1], float(e_n.max()) / n_max))
        if worst_sum_err > 1e-9 or e_n.min() < 1.0 - 1e-9 or e_n.max() > n_max + 1e-9:
            return SuiteResult("halting-normalization", False,
                               f"sum err {worst_sum_err:.2e} after draw", time.time() - t0)
    return SuiteResult("halting-normalization", True,
                       f"{draws} draws, max |sum-1| {worst_sum_err:.2e}",
                       time.time() - t0)


def run_near_identity_suite(seed: int = 0, n_inputs: int = 32,
                            tol: float = 0.01) -> SuiteResult:
    """At init (alpha=-7, gate bias=-3) the full model must stay within 1%
    relative max-norm of the stripped embed->norm->unembed path."""
    t0 = time.time()
    cfg = tiny_config(alpha_init=-7.0, gate_bias_init=-3.0)
    params = init_params(cfg, seed)
    rng = np.random.default_rng(seed + 1)
    tokens = rng.integers(0, cfg.vocab_size, size=(n_inputs, 16))
    g = Graph()
    full = model_forward(g, tokens, params, cfg).logits.data
    stripped = stripped_path_logits(_param_arrays(params), cfg, tokens)
    rel = float(np.abs(full - stripped).max() / np.abs(stripped).max())
    return SuiteResult("near-identity-init", rel < tol,
                       f"relative max-norm deviation {rel:.4f} (tol {tol})",
                       time.time() - t0)


def run_permutation_suite(seed: int = 0, tol: float = 1e-9) -> SuiteResult:
    """Permuting K and V rows of any single memory bank identically must not
    change the logits beyond numerical noise."""
    t0 = time.time()
    cfg = tiny_config()
    params = init_params(cfg, seed)
    rng = np.random.default_rng(seed + 1)
    tokens = rng.integers(0, cfg.vocab_size, size=(2, 12))
    base = model_forward(Graph(), tokens, params, cfg).logits.data

    banks = [lp.local_bank for lp in params.layers if lp.local_bank is not None]
    if params.global_bank is not None:
        banks.append(params.global_bank)
    worst = 0.0
    for bank in banks:
        perm = rng.permutation(bank.k.shape[0])
        k0, v0 = bank.k.data.copy(), bank.v.data.copy()
        bank.k.data = k0[perm]
        bank.v.data = v0[perm]
        permuted = model_forward(Graph(), tokens, params, cfg).logits.data
        bank.k.data, bank.v.data = k0, v0
        worst = max(worst, float(np.abs(permuted - base).max()))
    return SuiteResult("memory-permutation", worst < tol,
                       f"{len(banks)} banks, max logit change {worst:.2e} (tol {tol:g})",
                       time.time() - t0)


def run_reduction_suite(seed: int = 0, draws: int = 10, tol: float = 1e-10) -> SuiteResult:
    """Loops and memory disabled: logits must agree with the independent
    numpy transformer to 1e-10 across random weight/input draws."""
    t0 = time.time()
    cfg = tiny_config(loops=False, memory=False)
    worst = 0.0
    for i in range(draws):
        params = init_params(cfg, seed + i)
        rng = np.random.default_rng(seed + 1000 + i)
        tokens = rng.integers(0, cfg.vocab_size, size=(2, 12))
        ours = model_forward(Graph(), tokens, params, cfg).logits.data
        ref = plain_transformer_logits(_param_arrays(params), cfg, tokens)
        worst = max(worst, float(np.abs(ours - ref).max()))
    return SuiteResult("reduction-oracle", worst < tol,
                       f"{draws} draws, max |diff| {worst:.2e} (tol {tol:g})",
                       time.time() - t0)


@dataclass
class VerifyReport:
    results: list[SuiteResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def lines(self) -> list[str]:
        return [r.line() for r in self.results]


def run_all_suites(seed: int = 0, grad_max_elements: int = 4,
                   halting_draws: int = 1000) -> VerifyReport:
    report = VerifyReport()
    report.results.append(run_halting_suite(draws=halting_draws, seed=seed))
    report.results.append(run_near_identity_suite(seed=seed))
    report.results.append(run_permutation_suite(seed=seed))
    report.results.append(run_reduction_suite(seed=seed))
    report.results.append(run_gradient_suite(seed=seed, max_elements=grad_max_elements))
    return report
