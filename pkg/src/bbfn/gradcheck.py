"""Central finite-difference gradient checking.

The oracle never touches the tape: it perturbs parameter data in place,
re-evaluates the scalar function, and compares against the gradients that
:func:`bbfn.tensor.backward` produced.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    worst: str
    per_param: dict[str, float] = field(default_factory=dict)
    entries_checked: int = 0

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} max_rel_error={self.max_rel_error:.3e} tol={self.tol:.1e} "
                f"worst={self.worst} entries={self.entries_checked}")


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor), elementwise.

    The floor keeps gradients that are zero up to rounding from dominating
    the ratio.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def finite_diff_check(
    f: Callable[[], Tensor],
    params: dict[str, Tensor] | list[Tensor],
    tol: float = 1e-4,
    step: float = 1e-5,
    floor: float = 1e-6,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare tape gradients of ``f()`` against central differences.

    ``f`` must rebuild its graph on each call and be deterministic. With
    ``max_entries`` set, each parameter is probed at that many randomly
    chosen coordinates instead of all of them.
    """
    if not isinstance(params, dict):
        params = {p.name or f"param{i}": p for i, p in enumerate(params)}
    for p in params.values():
        p.grad = None
    loss = f()
    loss.backward()
    analytic = {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for k, p in params.items()}

    worst_err, worst_name, checked = 0.0, "", 0
    per_param = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        if max_entries is not None and flat.size > max_entries:
            picker = rng if rng is not None else np.random.default_rng(0)
            idx = np.sort(picker.choice(flat.size, size=max_entries, replace=False))
        else:
            idx = np.arange(flat.size)
        numeric = np.empty(idx.size)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + step
            fp = f().item()
            flat[i] = orig - step
            fm = f().item()
            flat[i] = orig
            numeric[j] = (fp - fm) / (2 * step)
        err = relative_error(analytic[name].reshape(-1)[idx], numeric, floor)
        e = float(err.max()) if err.size else 0.0
        per_param[name] = e
        checked += idx.size
        if e > worst_err or not worst_name:
            worst_err, worst_name = e, name
    return GradCheckReport(worst_err, tol, worst_name, per_param, checked)


def directional_check(
    f: Callable[[], Tensor],
    params: dict[str, Tensor],
    tol: float = 1e-4,
    step: float = 1e-5,
    floor: float = 1e-6,
    directions: int = 8,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare g . v against a central difference along random unit directions v.

    Every coordinate of every parameter moves in each probe, so one probe
    exercises the whole gradient at the cost of two function evaluations.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    for p in params.values():
        p.grad = None
    f().backward()
    grads = {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for k, p in params.items()}
    originals = {k: p.data.copy() for k, p in params.items()}
    worst = 0.0
    for _ in range(directions):
        v = {k: rng.normal(size=p.shape) for k, p in params.items()}
        norm = np.sqrt(sum(float(np.sum(x * x)) for x in v.values()))
        v = {k: x / norm for k, x in v.items()}
        analytic = sum(float(np.sum(grads[k] * v[k])) for k in params)
        vals = []
        for sign in (1.0, -1.0):
            for k, p in params.items():
                p.data[...] = originals[k] + sign * step * v[k]
            vals.append(f().item())
        for k, p in params.items():
            p.data[...] = originals[k]
        numeric = (vals[0] - vals[1]) / (2 * step)
        worst = max(worst, float(relative_error(np.array([analytic]), np.array([numeric]), floor)[0]))
    return GradCheckReport(worst, tol, "direction", {"direction": worst}, directions)
