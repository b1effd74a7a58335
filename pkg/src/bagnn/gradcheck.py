"""Central finite-difference check of every parameter gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .model import ModelConfig, class_logits, forward, init_params
from .synthetic import six_node_fixture
from .train import cross_entropy_logits

# relative error uses max(|analytic|, |numeric|, REL_FLOOR) as denominator
REL_FLOOR = 1e-6

FIXTURES = ("six-node",)


@dataclass
class GradcheckResult:
    passed: bool
    worst_rel_error: float
    worst_param: str
    checked: int
    tolerance: float
    per_param: dict[str, float]

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} worst_rel_error={self.worst_rel_error:.3e} param={self.worst_param} "
            f"entries={self.checked} tol={self.tolerance:.0e}"
        )


def fixture_problem(name: str = "six-node", variant: str = "full", seed: int = 0):
    """Graph, parameters and a loss closure for a named fixture."""
    if name != "six-node":
        raise KeyError(f"unknown fixture {name!r}; available: {FIXTURES}")
    g, split = six_node_fixture()
    cfg = ModelConfig(num_layers=2, hidden_dim=4, heads=2, variant=variant, num_classes=2, seed=seed)
    params = init_params(cfg, g)
    nodes, labels = split.arrays("train")

    def loss_fn():
        h, _ = forward(g, params)
        return cross_entropy_logits(class_logits(T.gather_rows(h, nodes), params.head), labels)

    return g, params, loss_fn


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = REL_FLOOR) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def check_gradients(params, loss_fn, eps: float = 1e-4, tol: float = 1e-4) -> GradcheckResult:
    """Compare tape gradients with ``(f(x+eps) - f(x-eps)) / (2 eps)`` entry by entry."""
    named = params.named_tensors()
    params.zero_grad()
    with T.Tape():
        loss = loss_fn()
        T.backward(loss)
    analytic = {k: t.grad.copy() for k, t in named.items()}
    params.zero_grad()

    per_param, worst, worst_name, count = {}, 0.0, "", 0
    with T.no_grad():
        for name, t in named.items():
            flat = t.data.reshape(-1)
            numeric = np.zeros_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = float(loss_fn().data)
                flat[i] = orig - eps
                down = float(loss_fn().data)
                flat[i] = orig
                numeric[i] = (up - down) / (2 * eps)
            err = float(relative_error(analytic[name].reshape(-1), numeric).max(initial=0.0))
            per_param[name] = err
            count += flat.size
            if err >= worst:
                worst, worst_name = err, name
    return GradcheckResult(worst < tol, worst, worst_name, count, tol, per_param)


def run_gradcheck(fixture: str = "six-node", eps: float = 1e-4, tol: float = 1e-4,
                  variant: str = "full", seed: int = 0) -> GradcheckResult:
    _, params, loss_fn = fixture_problem(fixture, variant, seed)
    return check_gradients(params, loss_fn, eps, tol)
