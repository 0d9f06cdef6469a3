"""
Contenedor de checkpoints.

Formato (versión 1):

    [0:8]    b'FPBCKPT1'
    [8:12]   longitud H de la cabecera, u32 little-endian
    [12:12+H] cabecera JSON UTF-8 con claves ordenadas
    [12+H:]  tensores concatenados, float64 little-endian, orden C

La cabecera lleva `format`, `spec`, `seed`, `epoch`, `sampler`, `metrics`
(libre) y `tensors`: lista de {name, group, shape, offset} con `offset` en
bytes relativo al inicio de la carga útil. Los grupos son `params` y
`momentum`.
"""
import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import CheckpointFormatError, MissingCheckpointError
from .model import NetworkSpec, ParameterSet

MAGIC = b'FPBCKPT1'
FORMAT_VERSION = 1
LE_FLOAT64 = np.dtype('<f8')


@dataclass(eq=False)
class Checkpoint:
    spec: NetworkSpec
    params: ParameterSet
    epoch: int
    sampler: dict = None
    momentum: OrderedDict = field(default_factory=OrderedDict)
    metrics: dict = field(default_factory=dict)

    @property
    def seed(self):
        return self.params.seed


def encode_checkpoint(checkpoint):
    index = []
    chunks = []
    offset = 0
    groups = (('params', checkpoint.params.tensors), ('momentum', checkpoint.momentum))
    for group, tensors in groups:
        for name, value in tensors.items():
            raw = np.ascontiguousarray(value, dtype=LE_FLOAT64).tobytes()
            index.append({'name': name, 'group': group, 'shape': list(value.shape), 'offset': offset})
            chunks.append(raw)
            offset += len(raw)
    header = {
        'format': FORMAT_VERSION,
        'spec': checkpoint.spec.to_dict(),
        'seed': checkpoint.params.seed,
        'epoch': checkpoint.epoch,
        'sampler': checkpoint.sampler,
        'metrics': checkpoint.metrics,
        'tensors': index,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(',', ':')).encode('utf-8')
    return MAGIC + struct.pack('<I', len(header_bytes)) + header_bytes + b''.join(chunks)


def decode_checkpoint(data):
    if len(data) < 12 or data[:8] != MAGIC:
        raise CheckpointFormatError("No es un checkpoint FPBCKPT1")
    (length,) = struct.unpack('<I', data[8:12])
    if len(data) < 12 + length:
        raise CheckpointFormatError("Cabecera de checkpoint truncada")
    header = json.loads(data[12:12 + length].decode('utf-8'))
    if header.get('format') != FORMAT_VERSION:
        raise CheckpointFormatError(f"Versión de formato no soportada: {header.get('format')}")
    payload = data[12 + length:]
    groups = {'params': OrderedDict(), 'momentum': OrderedDict()}
    for entry in header['tensors']:
        count = int(np.prod(entry['shape']))
        end = entry['offset'] + count * LE_FLOAT64.itemsize
        if end > len(payload):
            raise CheckpointFormatError(f"Tensor '{entry['name']}' truncado")
        value = np.frombuffer(payload, dtype=LE_FLOAT64, count=count, offset=entry['offset'])
        groups[entry['group']][entry['name']] = value.astype(np.float64).reshape(entry['shape'])
    return Checkpoint(
        spec=NetworkSpec.from_dict(header['spec']),
        params=ParameterSet(groups['params'], header['seed']),
        epoch=header['epoch'],
        sampler=header.get('sampler'),
        momentum=groups['momentum'],
        metrics=header.get('metrics') or {},
    )


def save_checkpoint(path, checkpoint):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(checkpoint))
    return path


def load_checkpoint(path):
    path = Path(path)
    if not path.is_file():
        raise MissingCheckpointError(f"No existe el checkpoint {path}")
    return decode_checkpoint(path.read_bytes())
