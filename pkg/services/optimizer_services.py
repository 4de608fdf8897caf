from typing import Dict, Mapping, NamedTuple, Tuple

import numpy as np

from constants.exit_codes import ExitCode
from core.exceptions import DirForgeError
from models.network_model import NetworkParams

ADAM_EPS = 1e-8


class AdamState(NamedTuple):
    step: int
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]


def init_adam_state(params: Mapping[str, np.ndarray]) -> AdamState:
    return AdamState(
        step=0,
        m={name: np.zeros(np.shape(value), dtype=np.float64) for name, value in params.items()},
        v={name: np.zeros(np.shape(value), dtype=np.float64) for name, value in params.items()},
    )


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    betas: Tuple[float, float],
    eps: float = ADAM_EPS,
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update. Inputs are left untouched."""
    if set(params) != set(grads):
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail="adam_step: params and grads name different tensors")

    beta1, beta2 = betas
    step = state.step + 1
    correction1 = 1.0 - beta1 ** step
    correction2 = 1.0 - beta2 ** step

    updated, m_next, v_next = {}, {}, {}
    for name, value in params.items():
        value = np.asarray(value)
        grad = np.asarray(grads[name], dtype=np.float64)
        if grad.shape != value.shape or state.m[name].shape != value.shape:
            raise DirForgeError(
                exit_code=ExitCode.DATA_ERROR,
                detail=f"adam_step: shape mismatch for {name}: param {value.shape} grad {grad.shape}",
            )
        m = beta1 * state.m[name] + (1.0 - beta1) * grad
        v = beta2 * state.v[name] + (1.0 - beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        updated[name] = (value.astype(np.float64) - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(value.dtype)
        m_next[name] = m
        v_next[name] = v

    return updated, AdamState(step=step, m=m_next, v=v_next)


def optimizer_step(network: NetworkParams, state: AdamState, lr: float, betas, eps: float = ADAM_EPS) -> AdamState:
    """Applies adam_step to a parameter set in place and clears its gradients."""
    values = {name: t.data for name, t in network.named()}
    grads = {name: (t.grad if t.grad is not None else np.zeros_like(t.data)) for name, t in network.named()}
    updated, state = adam_step(values, grads, state, lr, betas, eps)
    for name, tensor in network.named():
        tensor.data = updated[name]
    network.zero_grad()
    return state
