"""
Probabilidades de supervivencia (dimensión espacial), muestreo de máscaras
y el controlador temporal que ajusta p_min una vez por periodo.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidArgumentError
from .model import BlockMask

logger = logging.getLogger(__name__)

LINEAR = 'linear'
UNIFORM = 'uniform'
MODES = (LINEAR, UNIFORM)

ABLATION_SPATIAL = 'spatial'
ABLATION_TEMPORAL = 'temporal'
ABLATION_BOTH = 'both'
ABLATIONS = (ABLATION_SPATIAL, ABLATION_TEMPORAL, ABLATION_BOTH)


def spatial_probabilities(num_blocks, p_min, mode=LINEAR):
    if num_blocks < 1:
        raise InvalidArgumentError("Se necesita al menos un bloque")
    if not 0.0 < p_min <= 1.0:
        raise InvalidArgumentError(f"p_min debe estar en (0, 1], no {p_min}")
    if mode == UNIFORM:
        return np.full(num_blocks, float(p_min))
    if mode != LINEAR:
        raise InvalidArgumentError(f"Modo de muestreo desconocido: {mode}")
    ell = np.arange(1, num_blocks + 1, dtype=np.float64)
    return 1.0 - (ell / num_blocks) * (1.0 - p_min)


def sample_mask(probabilities, rng):
    draws = rng.random(len(probabilities))
    return BlockMask.from_bits(draws < np.asarray(probabilities))


def expected_effective_blocks(probabilities):
    return float(np.sum(probabilities))


@dataclass
class SamplerSchedule:
    num_blocks: int
    mode: str = LINEAR
    p_min: float = 0.5
    mu: float = 0.04

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidArgumentError(f"Modo de muestreo desconocido: {self.mode}")
        if self.mu < 0:
            raise InvalidArgumentError("μ no puede ser negativo")
        spatial_probabilities(self.num_blocks, self.p_min, self.mode)

    @property
    def probabilities(self):
        return spatial_probabilities(self.num_blocks, self.p_min, self.mode)

    @property
    def expected_blocks(self):
        return expected_effective_blocks(self.probabilities)


def schedule_for_ablation(num_blocks, ablation, p_min, mu):
    """spatial: lineal sin ajuste temporal; temporal: uniforme con ajuste; both: lineal con ajuste."""
    if ablation == ABLATION_SPATIAL:
        return SamplerSchedule(num_blocks, LINEAR, p_min, 0.0)
    if ablation == ABLATION_TEMPORAL:
        return SamplerSchedule(num_blocks, UNIFORM, p_min, mu)
    if ablation == ABLATION_BOTH:
        return SamplerSchedule(num_blocks, LINEAR, p_min, mu)
    raise InvalidArgumentError(f"Ablación desconocida: {ablation}")


@dataclass
class TemporalState:
    l_pre: float = None
    l_cur: float = 0.0
    period: int = 0

    def record(self, loss):
        self.l_cur += loss
        self.period += 1

    def roll(self):
        self.l_pre = self.l_cur
        self.l_cur = 0.0
        self.period = 0


def temporal_update(state, p_min, mu):
    """
    ϖ = L_cur - L_pre. Con ϖ >= 0 se conserva p_min; si no, p_min + μ
    acotado a 1. Sin periodo previo no hay comparación.
    """
    if state.l_pre is None:
        return p_min
    criterion = state.l_cur - state.l_pre
    if criterion >= 0:
        return p_min
    return min(p_min + mu, 1.0)


@dataclass
class TemporalController:
    schedule: SamplerSchedule
    state: TemporalState = field(default_factory=TemporalState)
    trajectory: list = field(default_factory=list)

    def __post_init__(self):
        if not self.trajectory:
            self.trajectory.append(self.schedule.p_min)

    @property
    def p_min(self):
        return self.schedule.p_min

    @property
    def probabilities(self):
        return self.schedule.probabilities

    def record(self, loss):
        self.state.record(loss)

    def end_period(self):
        """Aplica la regla de ajuste, reconstruye el esquema y rota los acumuladores."""
        previous = self.schedule.p_min
        updated = temporal_update(self.state, previous, self.schedule.mu)
        if updated != previous:
            logger.debug(
                "ϖ = %.6f < 0: p_min %.4f -> %.4f", self.state.l_cur - self.state.l_pre, previous, updated
            )
        self.schedule.p_min = updated
        self.state.roll()
        self.trajectory.append(updated)
        return updated

    def to_dict(self):
        return {
            'num_blocks': self.schedule.num_blocks,
            'mode': self.schedule.mode,
            'p_min': self.schedule.p_min,
            'mu': self.schedule.mu,
            'l_pre': self.state.l_pre,
            'l_cur': self.state.l_cur,
            'period': self.state.period,
            'trajectory': list(self.trajectory),
        }

    @classmethod
    def from_dict(cls, data):
        schedule = SamplerSchedule(data['num_blocks'], data['mode'], data['p_min'], data['mu'])
        state = TemporalState(data['l_pre'], data['l_cur'], data.get('period', 0))
        return cls(schedule, state, list(data.get('trajectory', [])))
