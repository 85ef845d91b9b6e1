"""First-order optimization: AdamW with decoupled weight decay, cosine schedule."""

from __future__ import annotations

import numpy as np

from .autodiff import ShapeError, Tensor


class AdamW:
    """Adam with bias correction and weight decay applied directly to weights.

    The decay step is ``w -= lr * weight_decay * w`` and is independent of the
    gradient-based update, so a parameter with zero gradient still shrinks.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 1e-3):
        if not params:
            raise ValueError("AdamW needs at least one parameter")
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.step_count = 0
        self._m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, lr: float | None = None) -> None:
        """Apply one update; ``lr`` overrides the stored rate for this step."""
        rate = self.lr if lr is None else float(lr)
        self.step_count += 1
        t = self.step_count
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                raise ValueError(f"parameter '{name}' has no gradient; run backward() first")
            if g.shape != p.data.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.data.shape} for '{name}'")
            p.data -= rate * self.weight_decay * p.data
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            p.data -= rate * m_hat / (np.sqrt(v_hat) + self.eps)


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    """Half-cosine decay from ``base_lr`` at step 0 to 0 at ``total_steps``."""
    if total_steps <= 0:
        raise ValueError("cosine_lr: total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise ValueError(f"cosine_lr: step {step} outside [0, {total_steps}]")
    return base_lr * 0.5 * (1.0 + np.cos(np.pi * step / total_steps))
