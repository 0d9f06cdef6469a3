"""
Precisión limpia y robusta, riesgo empírico, monitor de sobreajuste
catastrófico y la malla del paisaje de pérdida.
"""
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attack import AttackConfig, pgd
from .core import cross_entropy_per_example
from .datasets import sequential_batches
from .exceptions import InvalidArgumentError
from .model import SCALING_NONE, forward, predict
from .rng import generator

logger = logging.getLogger(__name__)

MONITOR_PEAK = 0.20
MONITOR_FLOOR = 0.05
EVAL_BATCH = 256


def _predictions(logits):
    # argmax devuelve el primer máximo: empates hacia la clase de menor índice
    return np.argmax(logits, axis=1)


def accuracy(params, spec, dataset, scaling=SCALING_NONE, probabilities=None, batch_size=EVAL_BATCH):
    correct = 0
    for batch in sequential_batches(dataset, batch_size):
        logits = predict(params, spec, batch.inputs, scaling, probabilities)
        correct += int(np.sum(_predictions(logits) == batch.labels))
    return correct / len(dataset)


def robust_accuracy(params, spec, dataset, attack, rng=None, scaling=SCALING_NONE,
                    probabilities=None, batch_size=EVAL_BATCH):
    """Precisión sobre x + δ con δ de PGD-k sobre la red completa."""
    correct = 0
    for batch in sequential_batches(dataset, batch_size):
        delta = pgd(params, spec, batch.inputs, batch.labels, attack, rng).delta
        logits = predict(params, spec, batch.inputs + delta, scaling, probabilities)
        correct += int(np.sum(_predictions(logits) == batch.labels))
    return correct / len(dataset)


def per_example_losses(params, spec, dataset, batch_size=EVAL_BATCH):
    losses = [
        cross_entropy_per_example(predict(params, spec, batch.inputs), batch.labels)
        for batch in sequential_batches(dataset, batch_size)
    ]
    return np.concatenate(losses)


def empirical_risk(params, spec, dataset, batch_size=EVAL_BATCH):
    """Media de las pérdidas por ejemplo, sumadas en el orden del conjunto."""
    total = 0.0
    for value in per_example_losses(params, spec, dataset, batch_size):
        total += float(value)
    return total / len(dataset)


def overfitting_monitor(history, peak=MONITOR_PEAK, floor=MONITOR_FLOOR):
    """Primera época con precisión < floor tras haber alcanzado >= peak; None si no hay colapso."""
    if not len(history):
        raise InvalidArgumentError("El historial del monitor está vacío")
    best = None
    for epoch, value in enumerate(history):
        if best is not None and value < floor and best >= peak:
            return epoch
        best = value if best is None else max(best, value)
    return None


def monitor_subset(dataset, size, seed):
    """Subconjunto fijo de entrenamiento (mismo en todas las épocas)."""
    if size >= len(dataset):
        return dataset
    indices = np.sort(generator(seed, 'eval').choice(len(dataset), size=size, replace=False))
    return dataset.take(indices, name=f'{dataset.name}-monitor')


# ======================================================================
#                              REPORTES
# ======================================================================

@dataclass
class EvalReport:
    clean_accuracy: float
    robust_accuracy: dict = field(default_factory=dict)
    empirical_risk: float = None
    epoch: int = None

    def header(self):
        return ['epoch', 'clean_accuracy', 'empirical_risk'] + [f'robust_{k}' for k in self.robust_accuracy]

    def row(self):
        return [self.epoch, self.clean_accuracy, self.empirical_risk] + list(self.robust_accuracy.values())

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(self.header())
            writer.writerow(self.row())
        return path


def evaluate(params, spec, dataset, attacks, seed=0, epoch=None, scaling=SCALING_NONE, probabilities=None):
    """`attacks` es un dict etiqueta -> AttackConfig."""
    robust = {}
    for index, (label, attack) in enumerate(attacks.items()):
        robust[label] = robust_accuracy(params, spec, dataset, attack, generator(seed, 'eval', 1, index),
                                        scaling, probabilities)
    report = EvalReport(
        clean_accuracy=accuracy(params, spec, dataset, scaling, probabilities),
        robust_accuracy=robust,
        empirical_risk=empirical_risk(params, spec, dataset),
        epoch=epoch,
    )
    logger.info("Evaluación: limpia %.4f, robusta %s", report.clean_accuracy, robust)
    return report


# ======================================================================
#                          PAISAJE DE PÉRDIDA
# ======================================================================

@dataclass
class LossLandscape:
    coefficients: np.ndarray
    losses: np.ndarray
    adversarial_direction: np.ndarray
    rademacher_direction: np.ndarray

    @property
    def center(self):
        mid = len(self.coefficients) // 2
        return float(self.losses[mid, mid])

    def to_csv(self, path):
        """Filas: coeficiente adversarial; columnas: coeficiente rademacher."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = 'adv\\rad,' + ','.join(repr(float(b)) for b in self.coefficients)
        rows = np.column_stack([self.coefficients, self.losses])
        np.savetxt(path, rows, delimiter=',', header=header, comments='', fmt='%.17g')
        return path


def grid_coefficients(epsilon, grid_n):
    if grid_n < 3 or grid_n % 2 == 0:
        raise InvalidArgumentError("grid_n debe ser impar y >= 3")
    coefficients = np.linspace(-epsilon, epsilon, grid_n)
    coefficients[grid_n // 2] = 0.0
    return coefficients


def landscape_grid(loss_fn, inputs, adversarial, rademacher, epsilon, grid_n):
    """losses[i, j] = L(x + a_i·d_adv/ε + b_j·d_rad/ε), con a, b en [-ε, ε]."""
    if epsilon <= 0:
        raise InvalidArgumentError("ε debe ser positivo para el paisaje")
    coefficients = grid_coefficients(epsilon, grid_n)
    unit_adv = adversarial / epsilon
    unit_rad = rademacher / epsilon
    losses = np.empty((grid_n, grid_n))
    for i, a in enumerate(coefficients):
        for j, b in enumerate(coefficients):
            losses[i, j] = loss_fn(inputs + a * unit_adv + b * unit_rad)
    return LossLandscape(coefficients, losses, adversarial, rademacher)


def loss_landscape(params, spec, example, label, epsilon, grid_n, rng, steps=100, alpha=None):
    """Direcciones: PGD-100 normalizada a ‖·‖∞ = ε y ε·(±1) aleatorio."""
    if epsilon <= 0:
        raise InvalidArgumentError("ε debe ser positivo para el paisaje")
    inputs = np.asarray(example, dtype=np.float64)[None]
    labels = np.array([label])
    attack = AttackConfig(epsilon, alpha or epsilon / 4, steps)
    delta = pgd(params, spec, inputs, labels, attack).delta[0]
    peak = np.max(np.abs(delta))
    adversarial = delta * (epsilon / peak) if peak > 0 else np.zeros_like(delta)
    rademacher = epsilon * rng.choice([-1.0, 1.0], size=delta.shape)

    def loss_fn(x):
        return forward(params, spec, x[None], labels=labels).loss_value

    return landscape_grid(loss_fn, inputs[0], adversarial, rademacher, epsilon, grid_n)
