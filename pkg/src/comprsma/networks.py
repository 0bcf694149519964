"""Single-hidden-layer ReLU networks that map objective gradients to variable increments.

Three of these drive the meta-optimizer: one for precoder rows (input/output
width 2K+2, shared across antennas and BSs), one for the common-rate split
(width K) and one for the stacked antenna positions (width 2K).  Hidden
widths default to 1000/100/1000 respectively, set in
:class:`comprsma.meta.MetaConfig`.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Node, ShapeError
from .adam import AdamState, adam_step

_PARAM_KEYS = ("w1", "b1", "w2", "b2")


class SubNetwork:
    """out = W2 @ relu(W1 @ x + b1) + b2, with its own Adam state."""

    def __init__(self, w1, b1, w2, b2, beta1=0.9, beta2=0.999, eps=1e-8):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64)
        hidden, din = self.w1.shape
        dout = self.w2.shape[0]
        if self.b1.shape != (hidden,) or self.w2.shape != (dout, hidden) or self.b2.shape != (dout,):
            raise ShapeError("inconsistent layer shapes")
        self.adam = AdamState.zeros(self.n_params, beta1=beta1, beta2=beta2, eps=eps)

    @classmethod
    def create(cls, din: int, hidden: int, dout: int, rng: np.random.Generator):
        """Uniform +-1/sqrt(fan_in) weights, zero biases."""
        s1 = 1.0 / np.sqrt(din)
        s2 = 1.0 / np.sqrt(hidden)
        return cls(
            w1=rng.uniform(-s1, s1, size=(hidden, din)),
            b1=np.zeros(hidden),
            w2=rng.uniform(-s2, s2, size=(dout, hidden)),
            b2=np.zeros(dout),
        )

    @property
    def input_width(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_width(self) -> int:
        return self.w1.shape[0]

    @property
    def output_width(self) -> int:
        return self.w2.shape[0]

    @property
    def n_params(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size

    def params_flat(self) -> np.ndarray:
        return np.concatenate(
            [self.w1.ravel(), self.b1, self.w2.ravel(), self.b2]
        )

    def set_params_flat(self, vec: np.ndarray):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.n_params,):
            raise ShapeError(f"expected {self.n_params} parameters, got {vec.shape}")
        i = 0
        for key in _PARAM_KEYS:
            arr = getattr(self, key)
            setattr(self, key, vec[i : i + arr.size].reshape(arr.shape))
            i += arr.size

    def lift(self) -> dict:
        """Fresh leaf nodes for the current parameters (one training graph)."""
        return {key: Node(getattr(self, key).copy()) for key in _PARAM_KEYS}

    @staticmethod
    def leaves(params: dict) -> list:
        return [params[key] for key in _PARAM_KEYS]

    def forward(self, x, params: dict | None = None) -> Node:
        """Apply the network to a single vector or a batch of row vectors.

        ``params`` may be a lifted node dict (training); otherwise the stored
        numpy parameters are used as constants.
        """
        if params is None:
            w1, b1, w2, b2 = self.w1, self.b1, self.w2, self.b2
        else:
            w1, b1, w2, b2 = (params[k] for k in _PARAM_KEYS)
        x = ad.as_node(x)
        if x.value.ndim == 1:
            if x.shape != (self.input_width,):
                raise ShapeError(f"expected input width {self.input_width}, got {x.shape}")
            h = ad.relu(ad.add(ad.matmul(w1, x), b1))
            return ad.add(ad.matmul(w2, h), b2)
        if x.value.ndim == 2:
            if x.shape[1] != self.input_width:
                raise ShapeError(f"expected input width {self.input_width}, got {x.shape}")
            h = ad.relu(ad.add_rowvec(ad.matmul(x, ad.transpose(w1)), b1))
            return ad.add_rowvec(ad.matmul(h, ad.transpose(w2)), b2)
        raise ShapeError("forward expects a vector or a batch matrix")

    def apply_adam(self, grads: dict, lr: float):
        """One Adam step from per-parameter gradient arrays."""
        flat_grad = np.concatenate(
            [np.asarray(grads[key]).ravel() for key in _PARAM_KEYS]
        )
        self.set_params_flat(adam_step(self.adam, self.params_flat(), flat_grad, lr))


def subnet_forward(net: SubNetwork, grad_in) -> np.ndarray:
    """Convenience value-level forward pass for a single gradient vector."""
    return net.forward(np.asarray(grad_in, dtype=np.float64)).value
