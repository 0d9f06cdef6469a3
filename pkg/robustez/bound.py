"""
Calculadora diagnóstica de la cota de generalización vía privacidad
diferencial: intensidad robustificada por capa, ε₀, (ε, δ) y la cota.

Los máximos sobre (θ, x, y) no son computables; se estiman como máximos
sobre los lotes recorridos del conjunto de entrenamiento con los parámetros
dados. El reporte deja constancia de ese alcance.
"""
import logging
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np

from .attack import input_gradient, pgd_from_gradient
from .core import backward
from .datasets import DatasetHandle, minibatches, sequential_batches
from .evaluation import empirical_risk, per_example_losses
from .exceptions import EmptyDatasetError, InvalidArgumentError, UndefinedRatioError
from .model import BlockMask, block_of, forward
from .rng import generator
from .sampler import sample_mask

logger = logging.getLogger(__name__)

MASK_FULL = 'full'
MASK_SUBNETWORK = 'subnetwork'
SCOPE = 'máximo sobre los lotes recorridos del conjunto de entrenamiento, con los parámetros dados'
CONSTANT_LABEL = 'hasta la constante universal c'


# ======================================================================
#                       INTENSIDAD ROBUSTIFICADA
# ======================================================================

@dataclass
class IntensityResult:
    ratios: OrderedDict
    numerators: OrderedDict
    denominators: OrderedDict
    intensity: float
    l_erm: float
    undefined_layers: list = field(default_factory=list)
    scanned_batches: int = 0


def _norm(grads, names):
    return math.sqrt(sum(float(np.sum(grads[name] ** 2)) for name in names))


def intensity_from_gradients(layers, clean, adversarial, active=None):
    """
    `layers`: capa -> nombres de tensores. `clean` y `adversarial`: una lista
    de dicts nombre -> gradiente por lote. `active`: conjuntos de capas activas
    por lote (todas si es None). Una capa nunca activa tiene razón 1.
    """
    if len(clean) != len(adversarial) or not clean:
        raise InvalidArgumentError("Se necesitan gradientes limpios y adversarios de los mismos lotes")
    all_names = [name for names in layers.values() for name in names]
    numerators = OrderedDict((layer, None) for layer in layers)
    denominators = OrderedDict((layer, None) for layer in layers)
    adv_total = 0.0
    clean_total = 0.0
    for k, (g_clean, g_adv) in enumerate(zip(clean, adversarial)):
        live = set(layers) if active is None else active[k]
        for layer, names in layers.items():
            if layer not in live:
                continue
            numerators[layer] = max(numerators[layer] or 0.0, _norm(g_adv, names))
            denominators[layer] = max(denominators[layer] or 0.0, _norm(g_clean, names))
        adv_total = max(adv_total, _norm(g_adv, all_names))
        clean_total = max(clean_total, _norm(g_clean, all_names))

    ratios = OrderedDict()
    undefined = []
    for layer in layers:
        num, den = numerators[layer], denominators[layer]
        if num is None:
            ratios[layer] = 1.0
        elif den == 0.0:
            ratios[layer] = None
            undefined.append(layer)
        else:
            ratios[layer] = num / den
    if clean_total == 0.0:
        raise UndefinedRatioError("El gradiente limpio es nulo en todos los lotes: I no está definida")
    return IntensityResult(ratios, numerators, denominators, adv_total / clean_total, clean_total,
                           undefined, len(clean))


def _parameter_gradients(params, spec, inputs, labels, mask):
    fp = forward(params, spec, inputs, mask=mask, labels=labels)
    by_id = backward(fp.graph, fp.loss, wrt=list(fp.params.values()))
    return OrderedDict((name, by_id[leaf]) for name, leaf in fp.params.items())


def layerwise_intensity(params, spec, dataset, attack, mask_mode=MASK_FULL, probabilities=None,
                        batch_size=128, seed=0):
    """
    r_i = max ‖∇ L_adv|_i‖₂ / max ‖∇ L_limpia|_i‖₂ sobre los lotes; I igual
    sobre el vector completo. Con `subnetwork` cada lote usa una máscara
    muestreada con `probabilities` y el ataque corre sobre esa subred.
    """
    if mask_mode not in (MASK_FULL, MASK_SUBNETWORK):
        raise InvalidArgumentError(f"Modo de máscara desconocido: {mask_mode}")
    if mask_mode == MASK_SUBNETWORK and probabilities is None:
        raise InvalidArgumentError("El modo subnetwork requiere el vector de probabilidades")
    layers = params.layers()
    mask_rng = generator(seed, 'bound', 0)
    attack_rng = generator(seed, 'bound', 1)
    clean, adversarial, active = [], [], []
    for batch in sequential_batches(dataset, batch_size):
        if mask_mode == MASK_SUBNETWORK:
            mask = sample_mask(probabilities, mask_rng)
        else:
            mask = BlockMask.all_ones(spec.num_blocks)
        delta = pgd_from_gradient(input_gradient(params, spec, batch.labels, mask), batch.inputs,
                                  attack, attack_rng).delta
        clean.append(_parameter_gradients(params, spec, batch.inputs, batch.labels, mask))
        adversarial.append(_parameter_gradients(params, spec, batch.inputs + delta, batch.labels, mask))
        active.append({layer for layer in layers if block_of(layer) is None or mask[block_of(layer)]})
    result = intensity_from_gradients(layers, clean, adversarial, active)
    logger.info("Intensidad robustificada I = %.6g sobre %d lotes", result.intensity, result.scanned_batches)
    return result


# ======================================================================
#                          FÓRMULAS DE LA COTA
# ======================================================================

def epsilon0(ratios, l_erm, n, b, exclude_undefined=False):
    """ε₀ = (2·L_ERM / (N·b)) · ∏ r_i."""
    if n <= 0 or b <= 0:
        raise InvalidArgumentError("N y b deben ser positivos")
    ratios = list(ratios)
    if any(r is None for r in ratios):
        if not exclude_undefined:
            raise UndefinedRatioError("Hay razones por capa indefinidas (denominador nulo)")
        ratios = [r for r in ratios if r is not None]
    return 2.0 * l_erm / (n * b) * math.prod(ratios)


def privacy_epsilon(eps0, t, n, delta_prime):
    """(ε, δ) = (ε₀√(2T log(N/δ′)) + Tε₀(e^ε₀ − 1), δ′/N)."""
    if t < 1:
        raise InvalidArgumentError("T debe ser >= 1")
    if not 0 < delta_prime < n:
        raise InvalidArgumentError("Se requiere 0 < δ′ < N")
    if eps0 < 0:
        raise InvalidArgumentError("ε₀ no puede ser negativo")
    epsilon = eps0 * math.sqrt(2.0 * t * math.log(n / delta_prime)) + t * eps0 * math.expm1(eps0)
    return epsilon, delta_prime / n


def generalization_bound(epsilon, delta, m, n, gamma, c=1.0):
    """c·(M·(1 − e^−ε + e^−ε·δ)·log N·log(N/γ) + √(log(1/γ)/N))."""
    if epsilon < 0 or not 0 <= delta <= 1 or m < 0 or n < 1 or not 0 < gamma < 1:
        raise InvalidArgumentError("Argumentos fuera de dominio para la cota")
    decay = math.exp(-epsilon)
    privacy = m * (1.0 - decay + decay * delta) * math.log(n) * math.log(n / gamma)
    return c * (privacy + math.sqrt(math.log(1.0 / gamma) / n))


# ======================================================================
#                         PARÁMETRO DE LAPLACE
# ======================================================================

def laplace_scale(samples, center):
    """Estimador de máxima verosimilitud de b: media de |muestra − centro|."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise InvalidArgumentError("No hay muestras")
    return float(np.mean(np.abs(samples - np.asarray(center, dtype=np.float64))))


def _flat(grads):
    return np.concatenate([g.ravel() for g in grads.values()])


def estimate_laplace_b(params, spec, dataset, batch_size, n_batches, attack, seed=0):
    """
    b alrededor del gradiente adversario de todo el conjunto, con los
    gradientes de los primeros `n_batches` minilotes de la época 0.
    """
    if n_batches < 2:
        raise InvalidArgumentError("Se necesitan al menos dos minilotes")
    if len(dataset) == 0:
        raise EmptyDatasetError("El conjunto está vacío")
    full_mask = BlockMask.all_ones(spec.num_blocks)
    attack_rng = generator(seed, 'bound', 2)
    adversarial = []
    for batch in sequential_batches(dataset, batch_size):
        delta = pgd_from_gradient(input_gradient(params, spec, batch.labels, full_mask), batch.inputs,
                                  attack, attack_rng).delta
        adversarial.append(batch.inputs + delta)
    adv_set = DatasetHandle(np.concatenate(adversarial), dataset.labels, dataset.num_classes,
                            dataset.value_range, dataset.normalization, f'{dataset.name}-adv')

    full = None
    for batch in sequential_batches(adv_set, batch_size):
        weighted = _flat(_parameter_gradients(params, spec, batch.inputs, batch.labels, full_mask)) * len(batch.labels)
        full = weighted if full is None else full + weighted
    full /= len(adv_set)

    batches = minibatches(adv_set, batch_size, seed, 0)
    if n_batches > len(batches):
        raise InvalidArgumentError(f"Se pidieron {n_batches} minilotes y sólo hay {len(batches)}")
    samples = np.stack([
        _flat(_parameter_gradients(params, spec, batch.inputs, batch.labels, full_mask))
        for batch in batches[:n_batches]
    ])
    return laplace_scale(samples, full)


# ======================================================================
#                               REPORTE
# ======================================================================

@dataclass
class BoundInputs:
    t: int
    n: int
    delta_prime: float
    b: float
    l_erm: float
    ratios: OrderedDict
    m: float
    gamma: float
    c: float = 1.0
    tau: int = None
    exclude_undefined: bool = False


@dataclass
class BoundReport:
    epsilon0: float
    epsilon: float
    delta: float
    bound: float
    inputs: BoundInputs
    intensity: float = None
    numerators: OrderedDict = None
    denominators: OrderedDict = None
    undefined_layers: list = field(default_factory=list)
    train_risk: float = None
    heldout_risk: float = None
    scope: str = SCOPE
    constant_label: str = CONSTANT_LABEL

    def to_dict(self):
        data = asdict(self)
        data['inputs']['ratios'] = dict(self.inputs.ratios)
        return data


def compute_bound(inputs):
    eps0 = epsilon0(inputs.ratios.values(), inputs.l_erm, inputs.n, inputs.b, inputs.exclude_undefined)
    epsilon, delta = privacy_epsilon(eps0, inputs.t, inputs.n, inputs.delta_prime)
    value = generalization_bound(epsilon, delta, inputs.m, inputs.n, inputs.gamma, inputs.c)
    return BoundReport(eps0, epsilon, delta, value, inputs)


def bound_report(params, spec, dataset, attack, iterations, delta_prime=1e-3, gamma=0.05, c=1.0,
                 m=None, batch_size=128, n_batches=8, mask_mode=MASK_FULL, probabilities=None,
                 heldout=None, seed=0, exclude_undefined=False):
    """
    Reporte completo a partir de un checkpoint. Si no se da M se usa la
    pérdida máxima por ejemplo sobre el entrenamiento (mismo alcance que I).
    """
    intensity = layerwise_intensity(params, spec, dataset, attack, mask_mode, probabilities, batch_size, seed)
    b = estimate_laplace_b(params, spec, dataset, batch_size, n_batches, attack, seed)
    if m is None:
        m = float(np.max(per_example_losses(params, spec, dataset)))
    inputs = BoundInputs(
        t=iterations, n=len(dataset), delta_prime=delta_prime, b=b, l_erm=intensity.l_erm,
        ratios=intensity.ratios, m=m, gamma=gamma, c=c, tau=batch_size, exclude_undefined=exclude_undefined,
    )
    report = compute_bound(inputs)
    report.intensity = intensity.intensity
    report.numerators = intensity.numerators
    report.denominators = intensity.denominators
    report.undefined_layers = intensity.undefined_layers
    report.train_risk = empirical_risk(params, spec, dataset)
    if heldout is not None:
        report.heldout_risk = empirical_risk(params, spec, heldout)
    logger.info("Cota: ε₀ %.6g, ε %.6g, δ %.3g, valor %.6g (%s)",
                report.epsilon0, report.epsilon, report.delta, report.bound, CONSTANT_LABEL)
    return report
