"""
Ingesta de datos: blobs sintéticos, IDX (MNIST) y CIFAR binario, más el
barajado determinista por época.
"""
import gzip
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import (
    BadMagicError,
    CountMismatchError,
    DatasetFormatError,
    EmptyDatasetError,
    InvalidArgumentError,
    MissingDatasetError,
    TruncatedFileError,
)
from .rng import generator

logger = logging.getLogger(__name__)

IDX_UBYTE = 0x08
CIFAR_SIDE = 32
CIFAR_PIXELS = 3 * CIFAR_SIDE * CIFAR_SIDE


@dataclass(frozen=True, eq=False)
class DatasetHandle:
    examples: np.ndarray
    labels: np.ndarray
    num_classes: int
    value_range: tuple = None
    normalization: dict = None
    name: str = 'dataset'

    def __post_init__(self):
        if len(self.examples) < 1:
            raise EmptyDatasetError(f"El conjunto '{self.name}' está vacío")
        if len(self.examples) != len(self.labels):
            raise CountMismatchError(
                f"{len(self.examples)} ejemplos y {len(self.labels)} etiquetas en '{self.name}'"
            )
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise DatasetFormatError(f"Etiquetas fuera de [0, {self.num_classes}) en '{self.name}'")
        if not np.all(np.isfinite(self.examples)):
            raise DatasetFormatError(f"Valores no finitos en '{self.name}'")

    def __len__(self):
        return len(self.examples)

    @property
    def input_shape(self):
        return tuple(self.examples.shape[1:])

    @property
    def is_image(self):
        return self.value_range is not None and self.examples.ndim == 4

    def take(self, indices, name=None):
        indices = np.asarray(indices)
        return DatasetHandle(self.examples[indices], self.labels[indices], self.num_classes,
                             self.value_range, self.normalization, name or self.name)

    def head(self, n):
        return self.take(np.arange(min(n, len(self))))


@dataclass(frozen=True, eq=False)
class Batch:
    inputs: np.ndarray
    labels: np.ndarray
    indices: np.ndarray


# ======================================================================
#                               BLOBS
# ======================================================================

def make_blobs(n_per_class, dims, centers, sigma, seed, split=0):
    """Cúmulos gaussianos isotrópicos, uno por centro; rango no acotado."""
    if sigma <= 0:
        raise InvalidArgumentError("sigma debe ser positivo")
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim != 2 or centers.shape[1] != dims:
        raise InvalidArgumentError(f"Los centros deben tener forma (k, {dims})")
    if len(centers) < 2 or len(np.unique(centers, axis=0)) != len(centers):
        raise InvalidArgumentError("Centros degenerados: se necesitan al menos dos centros distintos")
    rng = generator(seed, 'data', split)
    examples = []
    labels = []
    for label, center in enumerate(centers):
        examples.append(center + sigma * rng.standard_normal((n_per_class, dims)))
        labels.append(np.full(n_per_class, label, dtype=np.int64))
    return DatasetHandle(np.concatenate(examples), np.concatenate(labels), len(centers),
                         None, None, f'blobs-{"train" if split == 0 else "eval"}')


# ======================================================================
#                                IDX
# ======================================================================

def _read_bytes(path):
    path = Path(path)
    if not path.is_file():
        raise MissingDatasetError(f"No existe el archivo de datos {path}")
    opener = gzip.open if path.suffix == '.gz' else open
    try:
        with opener(path, 'rb') as f:
            return f.read()
    except (OSError, EOFError) as exc:
        raise DatasetFormatError(f"{path}: no se pudo leer ({exc})") from exc


def _parse_idx(data, ndim, path):
    # [0000] 0x00 0x00 tipo ndim | [0004] ndim enteros big-endian | payload
    if len(data) < 4:
        raise TruncatedFileError(f"{path}: archivo truncado ({len(data)} bytes)")
    zero_a, zero_b, dtype_code, file_ndim = data[:4]
    if zero_a or zero_b or dtype_code != IDX_UBYTE or file_ndim != ndim:
        raise BadMagicError(f"{path}: número mágico inválido {data[:4].hex()}")
    header = 4 + 4 * ndim
    if len(data) < header:
        raise TruncatedFileError(f"{path}: cabecera truncada")
    dims = struct.unpack('>' + 'I' * ndim, data[4:header])
    count = int(np.prod(dims))
    payload = len(data) - header
    if payload < count:
        raise TruncatedFileError(f"{path}: se esperaban {count} bytes de datos, hay {payload}")
    if payload > count:
        raise CountMismatchError(f"{path}: {payload - count} bytes sobrantes tras los datos")
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=header).reshape(dims)


def load_idx(images_path, labels_path, num_classes=10, subset=None):
    images = _parse_idx(_read_bytes(images_path), 3, images_path)
    labels = _parse_idx(_read_bytes(labels_path), 1, labels_path)
    if len(images) != len(labels):
        raise CountMismatchError(f"{len(images)} imágenes y {len(labels)} etiquetas")
    if subset is not None:
        images, labels = images[:subset], labels[:subset]
    examples = (images.astype(np.float64) / 255.0)[:, None, :, :]
    logger.info("IDX leído: %d imágenes de %dx%d desde %s", len(images), *images.shape[1:], images_path)
    return DatasetHandle(examples, labels.astype(np.int64), num_classes, (0.0, 1.0), None,
                         Path(images_path).name)


# ======================================================================
#                           CIFAR BINARIO
# ======================================================================

def load_cifar_binary(paths, label_bytes=1, num_classes=None, expected_count=None, subset=None):
    """
    Registros de 1 (CIFAR-10) o 2 (CIFAR-100: gruesa, fina) bytes de etiqueta
    seguidos de 3072 bytes de píxeles en orden canal, fila, columna.
    """
    if label_bytes not in (1, 2):
        raise InvalidArgumentError("label_bytes debe ser 1 o 2")
    num_classes = num_classes or (10 if label_bytes == 1 else 100)
    record = label_bytes + CIFAR_PIXELS
    images = []
    labels = []
    for path in paths:
        data = _read_bytes(path)
        if not data or len(data) % record:
            raise TruncatedFileError(f"{path}: {len(data)} bytes no es múltiplo de {record}")
        raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, record)
        labels.append(raw[:, label_bytes - 1].astype(np.int64))
        images.append(raw[:, label_bytes:].reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE))
    if not images:
        raise EmptyDatasetError("No se indicaron archivos CIFAR")
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    if expected_count is not None and len(images) != expected_count:
        raise CountMismatchError(f"Se esperaban {expected_count} registros, hay {len(images)}")
    if subset is not None:
        images, labels = images[:subset], labels[:subset]
    logger.info("CIFAR leído: %d registros desde %d archivo(s)", len(images), len(paths))
    return DatasetHandle(images.astype(np.float64) / 255.0, labels, num_classes, (0.0, 1.0), None,
                         Path(paths[0]).name)


# ======================================================================
#                          LOTES Y AUMENTO
# ======================================================================

def minibatches(handle, batch_size, seed, epoch):
    """Permutación por (semilla, época); el último lote corto se conserva."""
    if batch_size < 1:
        raise InvalidArgumentError("El tamaño de lote debe ser >= 1")
    order = generator(seed, 'shuffle', epoch).permutation(len(handle))
    return [
        Batch(handle.examples[idx], handle.labels[idx], idx)
        for idx in (order[start:start + batch_size] for start in range(0, len(handle), batch_size))
    ]


def sequential_batches(handle, batch_size):
    return [
        Batch(handle.examples[start:start + batch_size], handle.labels[start:start + batch_size],
              np.arange(start, min(start + batch_size, len(handle))))
        for start in range(0, len(handle), batch_size)
    ]


def augment_batch(inputs, rng, pad=4):
    """Recorte aleatorio con relleno de ceros y volteo horizontal."""
    n, _, h, w = inputs.shape
    padded = np.pad(inputs, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode='constant')
    rows = rng.integers(0, 2 * pad + 1, size=n)
    cols = rng.integers(0, 2 * pad + 1, size=n)
    flips = rng.random(n) < 0.5
    out = np.empty_like(inputs)
    for i in range(n):
        crop = padded[i, :, rows[i]:rows[i] + h, cols[i]:cols[i] + w]
        out[i] = crop[:, :, ::-1] if flips[i] else crop
    return out


def load_source(source, seed):
    """Devuelve (entrenamiento, evaluación) según la sección `dataset` ya validada."""
    kind = source['kind']
    if kind == 'blobs':
        args = (source['dims'], source['centers'], source['sigma'], seed)
        return (make_blobs(source['n_per_class'], *args, split=0),
                make_blobs(source['eval_n_per_class'], *args, split=1))
    if kind == 'idx':
        train = load_idx(source['images'], source['labels'], subset=source.get('subset'))
        test = load_idx(source['eval_images'], source['eval_labels'], subset=source.get('eval_subset'))
        return train, test
    if kind == 'cifar':
        label_bytes = source.get('label_bytes', 1)
        train = load_cifar_binary(source['train'], label_bytes, subset=source.get('subset'))
        test = load_cifar_binary(source['eval'], label_bytes, subset=source.get('eval_subset'))
        return train, test
    raise InvalidArgumentError(f"Fuente de datos desconocida: {kind}")
