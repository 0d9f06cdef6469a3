"""
Ataques FGSM, FGSM-RS y PGD en norma ∞.

Los núcleos `fgsm_from_gradient` y `pgd_from_gradient` sólo necesitan una
función que devuelva ∇_x L; `fgsm` y `pgd` los atan a la red residual.
"""
import math
from dataclasses import dataclass

import numpy as np

from .core import backward, check_finite
from .exceptions import InvalidArgumentError
from .model import BlockMask, forward

INIT_ZERO = 'zero'
INIT_UNIFORM = 'uniform'


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float
    alpha: float
    steps: int = 1
    init: str = INIT_ZERO
    clip: tuple = None

    def __post_init__(self):
        if not math.isfinite(self.epsilon) or self.epsilon < 0:
            raise InvalidArgumentError(f"ε debe ser finito y >= 0, no {self.epsilon}")
        if not math.isfinite(self.alpha) or self.alpha <= 0:
            raise InvalidArgumentError(f"α debe ser finito y > 0, no {self.alpha}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise InvalidArgumentError(f"El número de pasos debe ser un entero >= 1, no {self.steps}")
        if self.init not in (INIT_ZERO, INIT_UNIFORM):
            raise InvalidArgumentError(f"Inicialización desconocida: {self.init}")
        if self.clip is not None:
            lo, hi = self.clip
            if not lo < hi:
                raise InvalidArgumentError(f"Rango de datos inválido: [{lo}, {hi}]")

    @property
    def label(self):
        if self.steps == 1 and self.init == INIT_ZERO:
            return 'fgsm'
        return f'pgd{self.steps}'

    def with_steps(self, steps, alpha=None, init=None):
        return AttackConfig(self.epsilon, self.alpha if alpha is None else alpha, steps,
                            self.init if init is None else init, self.clip)


def fgsm_config(epsilon, clip=None):
    """FGSM de evaluación: un paso, sin inicio aleatorio, α = ε."""
    return AttackConfig(epsilon, epsilon if epsilon > 0 else 1.0, 1, INIT_ZERO, clip)


@dataclass
class Perturbation:
    delta: np.ndarray

    @property
    def norm_inf(self):
        return float(np.max(np.abs(self.delta))) if self.delta.size else 0.0

    def apply(self, inputs):
        return inputs + self.delta


def project_box(delta, epsilon):
    if epsilon < 0:
        raise InvalidArgumentError("ε debe ser >= 0")
    return np.clip(delta, -epsilon, epsilon)


def _clip_to_range(inputs, delta, config):
    if config.clip is None:
        return delta
    lo, hi = config.clip
    # reducir δ hasta que x + δ quede en el rango; la caja ε se conserva exacta
    return project_box(np.clip(inputs + delta, lo, hi) - inputs, config.epsilon)


def initial_delta(shape, config, rng=None):
    if config.init == INIT_ZERO:
        return np.zeros(shape)
    if rng is None:
        raise InvalidArgumentError("La inicialización uniforme requiere un generador")
    return rng.uniform(-config.epsilon, config.epsilon, size=shape)


def _sign_step(inputs, delta, grad, config):
    check_finite(grad, 'gradiente de entrada')
    delta = project_box(delta + config.alpha * np.sign(grad), config.epsilon)
    return _clip_to_range(inputs, delta, config)


def fgsm_from_gradient(gradient_fn, inputs, config, rng=None):
    inputs = np.asarray(inputs, dtype=np.float64)
    phi = _clip_to_range(inputs, initial_delta(inputs.shape, config, rng), config)
    grad = gradient_fn(inputs + phi)
    return Perturbation(_sign_step(inputs, phi, grad, config))


def pgd_from_gradient(gradient_fn, inputs, config, rng=None):
    inputs = np.asarray(inputs, dtype=np.float64)
    delta = _clip_to_range(inputs, initial_delta(inputs.shape, config, rng), config)
    for _ in range(int(config.steps)):
        delta = _sign_step(inputs, delta, gradient_fn(inputs + delta), config)
    return Perturbation(delta)


def input_gradient(params, spec, labels, mask=None):
    def gradient(x):
        fp = forward(params, spec, x, mask=mask, labels=labels)
        return backward(fp.graph, fp.loss, wrt=[fp.input])[fp.input]
    return gradient


def fgsm(params, spec, mask, batch, labels, config, rng=None):
    """FGSM (FGSM-RS con init uniforme) sobre la subred f' que define `mask`."""
    return fgsm_from_gradient(input_gradient(params, spec, labels, mask), batch, config, rng)


def pgd(params, spec, batch, labels, config, rng=None):
    """PGD-k, siempre sobre la red completa."""
    mask = BlockMask.all_ones(spec.num_blocks)
    return pgd_from_gradient(input_gradient(params, spec, labels, mask), batch, config, rng)
