"""
PRNG del proyecto.

Todos los consumidores usan Philox-4x64 (contador, 64 bits) de numpy. Cada
flujo se deriva de `SeedSequence([seed, STREAM, *contadores])`, de modo que
inicialización, máscaras, ataques y barajado nunca comparten estado y cada
época tiene su propio flujo reproducible.
"""
import numpy as np


STREAMS = {
    'init': 0,
    'masks': 1,
    'attacks': 2,
    'shuffle': 3,
    'data': 4,
    'eval': 5,
    'augment': 6,
    'bound': 7,
}


def generator(seed, stream, *counters):
    if stream not in STREAMS:
        raise KeyError(f"Flujo desconocido: {stream}")
    if seed < 0 or any(c < 0 for c in counters):
        raise ValueError("La semilla y los contadores deben ser no negativos")
    entropy = [int(seed), STREAMS[stream], *(int(c) for c in counters)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
