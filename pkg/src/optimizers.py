"""
Optimizadores SGDM y Adam sobre diccionarios de parámetros numpy.

El estado se inicializa a cero en la primera llamada y se actualiza en su sitio.
"""
from typing import Dict, Tuple

import numpy as np

from .models import TrainConfig


def learning_rate_at(config: TrainConfig, epoch: int) -> float:
    """Tasa efectiva en la época `epoch` (base 0): lr * drop ** (epoch // periodo)."""
    return config.learning_rate * config.drop_factor ** (epoch // config.drop_period)


def init_state(params: Dict[str, np.ndarray], config: TrainConfig) -> Dict:
    zeros = {name: np.zeros_like(value) for name, value in params.items()}
    if config.optimizer == "sgdm":
        return {"t": 0, "velocity": zeros}
    return {"t": 0, "m": zeros, "v": {name: np.zeros_like(value) for name, value in params.items()}}


def optimizer_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: Dict,
                   config: TrainConfig, epoch: int = 0) -> Tuple[Dict[str, np.ndarray], Dict]:
    """
    Un paso de optimización sobre los parámetros con gradiente.

    SGDM: v <- mu*v - lr*g ; p <- p + v
    Adam: momentos primero y segundo con corrección de sesgo.
    """
    if not state:
        state.update(init_state({name: params[name] for name in grads}, config))
    lr = learning_rate_at(config, epoch)
    state["t"] += 1

    if config.optimizer == "sgdm":
        for name, grad in grads.items():
            velocity = state["velocity"][name]
            velocity *= config.momentum
            velocity -= lr * grad
            params[name] += velocity
        return params, state

    t = state["t"]
    correction1 = 1.0 - config.beta1 ** t
    correction2 = 1.0 - config.beta2 ** t
    for name, grad in grads.items():
        m, v = state["m"][name], state["v"][name]
        m *= config.beta1
        m += (1.0 - config.beta1) * grad
        v *= config.beta2
        v += (1.0 - config.beta2) * grad * grad
        params[name] -= (lr * (m / correction1) / (np.sqrt(v / correction2) + config.adam_epsilon)).astype(
            params[name].dtype, copy=False)
    return params, state
