"""Finite-difference verification of analytic gradients.

The function under test builds its forward pass on a fresh Graph each call,
so central differences can re-evaluate it with perturbed parameters. Large
tensors are probed at an evenly spaced deterministic subsample of elements.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Graph, Tensor


class NondeterministicFunctionError(RuntimeError):
    """Raised when two evaluations of f at the same point differ bitwise."""


@dataclass
class TensorCheck:
    name: str
    max_rel_err: float
    checked: int
    passed: bool


@dataclass
class GradCheckReport:
    tol: float
    eps: float
    entries: list[TensorCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def max_rel_err(self) -> float:
        return max((e.max_rel_err for e in self.entries), default=0.0)

    def summary(self) -> str:
        lines = [f"grad check: eps={self.eps:g} tol={self.tol:g}"]
        for e in self.entries:
            mark = "ok " if e.passed else "FAIL"
            lines.append(f"  [{mark}] {e.name}: max rel err {e.max_rel_err:.3e} ({e.checked} elements)")
        return "\n".join(lines)


def _sample_indices(size: int, max_elements: int) -> np.ndarray:
    if size <= max_elements:
        return np.arange(size)
    # evenly spaced, deterministic, always includes first and last
    return np.unique(np.round(np.linspace(0, size - 1, max_elements)).astype(np.int64))


def grad_check(
    f: Callable[[Graph], Tensor],
    params: Sequence[tuple[str, Tensor]],
    eps: float = 1e-5,
    tol: float = 1e-4,
    max_elements: int = 16,
    denom_floor: float = 1e-4,
) -> GradCheckReport:
    """Compare analytic gradients of f against central differences.

    f must be a deterministic scalar-valued function of the given parameter
    tensors only: it is called as f(graph) and must rebuild its forward pass
    on that graph. Relative error uses max(|analytic|, |numeric|, denom_floor)
    as the denominator so finite-difference noise on near-zero gradients does
    not produce spurious failures.
    """
    ref = f(Graph()).item()
    again = f(Graph()).item()
    if ref != again:
        raise NondeterministicFunctionError(
            f"f evaluated twice at the same point gave {ref!r} and {again!r}")

    for _, t in params:
        t.zero_grad()
    g = Graph()
    loss = f(g)
    g.backward(loss)

    report = GradCheckReport(tol=tol, eps=eps)
    for name, t in params:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        flat = t.data.reshape(-1)
        aflat = analytic.reshape(-1)
        worst = 0.0
        idx = _sample_indices(flat.size, max_elements)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            fp = f(Graph()).item()
            flat[i] = orig - eps
            fm = f(Graph()).item()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * eps)
            a = aflat[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), denom_floor)
            if rel > worst:
                worst = rel
        report.entries.append(TensorCheck(name, worst, int(idx.size), worst < tol))
    return report
