"""
Redes residuales con profundidad estocástica.

El bloque ℓ calcula relu(shortcut(x) + β_ℓ · rama(x)). Con β_ℓ = 0 la rama
no se ejecuta; el shortcut (con su proyección, si existe) se mantiene siempre.
Stem y cabeza nunca se descartan.
"""
import logging
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .core import Graph, conv_output_size
from .exceptions import InvalidSpecError, ShapeMismatchError
from .rng import generator

logger = logging.getLogger(__name__)

AFFINE = 'affine'
CONV = 'conv'
SCALING_NONE = 'none'
SCALING_SURVIVAL = 'survival_probability'


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    width: int
    kernel: int = 3
    stride: int = 1


@dataclass(frozen=True)
class BlockSpec:
    kind: str
    width: int
    stride: int = 1
    kernel: int = 3


@dataclass(frozen=True)
class BlockLayout:
    in_shape: tuple
    out_shape: tuple
    projection: bool


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple
    stem: LayerSpec
    blocks: tuple
    num_classes: int
    name: str = 'custom'

    @property
    def num_blocks(self):
        return len(self.blocks)

    def _layer_out(self, kind, in_shape, width, kernel, stride):
        if kind == AFFINE:
            if len(in_shape) != 1:
                raise InvalidSpecError(f"Capa affine sobre entrada no vectorial {in_shape}")
            if stride != 1:
                raise InvalidSpecError("Las capas affine no admiten stride")
            return (width,)
        if kind == CONV:
            if len(in_shape) != 3:
                raise InvalidSpecError(f"Capa conv sobre entrada no espacial {in_shape}")
            if kernel % 2 == 0 or kernel < 1:
                raise InvalidSpecError(f"Kernel {kernel} no es impar")
            if stride not in (1, 2):
                raise InvalidSpecError(f"Stride {stride} no soportado")
            _, h, w = in_shape
            return (width, conv_output_size(h, kernel, stride), conv_output_size(w, kernel, stride))
        raise InvalidSpecError(f"Tipo de capa desconocido: {kind}")

    def layout(self):
        """Valida el encadenamiento de formas y devuelve (forma tras el stem, bloques)."""
        if self.num_blocks < 1:
            raise InvalidSpecError("La red necesita al menos un bloque residual")
        if self.num_classes < 2:
            raise InvalidSpecError("Se necesitan al menos dos clases")
        shape = self._layer_out(
            self.stem.kind, tuple(self.input_shape), self.stem.width, self.stem.kernel, self.stem.stride
        )
        stem_shape = shape
        layouts = []
        for block in self.blocks:
            out = self._layer_out(block.kind, shape, block.width, block.kernel, block.stride)
            layouts.append(BlockLayout(shape, out, out != shape))
            shape = out
        return stem_shape, tuple(layouts)

    @property
    def feature_shape(self):
        return self.layout()[1][-1].out_shape

    def to_dict(self):
        return {
            'name': self.name,
            'input_shape': list(self.input_shape),
            'num_classes': self.num_classes,
            'stem': vars(self.stem).copy(),
            'blocks': [vars(b).copy() for b in self.blocks],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            input_shape=tuple(data['input_shape']),
            stem=LayerSpec(**data['stem']),
            blocks=tuple(BlockSpec(**b) for b in data['blocks']),
            num_classes=int(data['num_classes']),
            name=data.get('name', 'custom'),
        )


def resmlp(input_shape, num_classes, num_blocks=4, width=64):
    blocks = tuple(BlockSpec(AFFINE, width) for _ in range(num_blocks))
    return NetworkSpec(tuple(input_shape), LayerSpec(AFFINE, width), blocks, num_classes,
                       name=f'resmlp-{num_blocks}')


def rescnn(input_shape, num_classes, widths=(16, 32, 64), blocks_per_stage=2):
    blocks = []
    for stage, width in enumerate(widths):
        for i in range(blocks_per_stage):
            stride = 2 if stage > 0 and i == 0 else 1
            blocks.append(BlockSpec(CONV, width, stride))
    return NetworkSpec(tuple(input_shape), LayerSpec(CONV, widths[0]), tuple(blocks), num_classes,
                       name=f'rescnn-{len(blocks)}')


PRESETS = {
    'resmlp-4': lambda input_shape, num_classes: resmlp(input_shape, num_classes, 4, 64),
    'rescnn-6': lambda input_shape, num_classes: rescnn(input_shape, num_classes),
}


def preset(name, input_shape, num_classes):
    try:
        builder = PRESETS[name]
    except KeyError:
        raise InvalidSpecError(f"Arquitectura desconocida: {name}") from None
    spec = builder(input_shape, num_classes)
    spec.layout()
    return spec


# ======================================================================
#                             PARÁMETROS
# ======================================================================

def _layer_param_shapes(kind, in_shape, width, kernel):
    if kind == AFFINE:
        fan_in = in_shape[0]
        return (fan_in, width), fan_in
    fan_in = in_shape[0] * kernel * kernel
    return (width, in_shape[0], kernel, kernel), fan_in


def parameter_layout(spec):
    """Lista ordenada (nombre de capa, forma del peso, fan_in) de toda la red."""
    stem_shape, blocks = spec.layout()
    layers = []
    shape, fan_in = _layer_param_shapes(spec.stem.kind, spec.input_shape, spec.stem.width, spec.stem.kernel)
    layers.append(('stem', shape, fan_in))
    for i, (block, lay) in enumerate(zip(spec.blocks, blocks)):
        shape, fan_in = _layer_param_shapes(block.kind, lay.in_shape, block.width, block.kernel)
        layers.append((f'blocks.{i}.branch1', shape, fan_in))
        shape, fan_in = _layer_param_shapes(block.kind, lay.out_shape, block.width, block.kernel)
        layers.append((f'blocks.{i}.branch2', shape, fan_in))
        if lay.projection:
            shape, fan_in = _layer_param_shapes(block.kind, lay.in_shape, block.width, 1)
            layers.append((f'blocks.{i}.shortcut', shape, fan_in))
    features = spec.feature_shape[0]
    layers.append(('head', (features, spec.num_classes), features))
    return layers


def branch_parameter_names(spec, block):
    return [f'blocks.{block}.{layer}.{kind}'
            for layer in ('branch1', 'branch2') for kind in ('weight', 'bias')]


def layer_of(name):
    return name.rsplit('.', 1)[0]


def block_of(layer):
    """Índice del bloque cuya rama contiene la capa, o None (stem, cabeza, proyecciones)."""
    parts = layer.split('.')
    if parts[0] == 'blocks' and parts[2].startswith('branch'):
        return int(parts[1])
    return None


@dataclass(frozen=True, eq=False)
class ParameterSet:
    tensors: OrderedDict
    seed: int

    def __getitem__(self, name):
        return self.tensors[name]

    def names(self):
        return list(self.tensors)

    def layers(self):
        groups = OrderedDict()
        for name in self.tensors:
            groups.setdefault(layer_of(name), []).append(name)
        return groups

    def replace(self, updates):
        tensors = OrderedDict(self.tensors)
        tensors.update(updates)
        return ParameterSet(tensors, self.seed)

    def copy(self):
        return ParameterSet(OrderedDict((k, v.copy()) for k, v in self.tensors.items()), self.seed)


def build_network(spec, seed):
    """Pesos gaussianos con std = sqrt(2 / fan_in), sesgos en cero."""
    rng = generator(seed, 'init')
    tensors = OrderedDict()
    for layer, shape, fan_in in parameter_layout(spec):
        tensors[f'{layer}.weight'] = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        out_dim = shape[0] if len(shape) == 4 else shape[1]
        tensors[f'{layer}.bias'] = np.zeros(out_dim)
    logger.debug("Red %s construida: %d tensores, semilla %d", spec.name, len(tensors), seed)
    return ParameterSet(tensors, seed)


# ======================================================================
#                             MÁSCARAS
# ======================================================================

@dataclass(frozen=True)
class BlockMask:
    bits: tuple

    @classmethod
    def all_ones(cls, num_blocks):
        return cls((1,) * num_blocks)

    @classmethod
    def from_bits(cls, bits):
        return cls(tuple(int(b) for b in bits))

    def __len__(self):
        return len(self.bits)

    def __iter__(self):
        return iter(self.bits)

    def __getitem__(self, index):
        return self.bits[index]

    def dropped(self):
        return [i for i, b in enumerate(self.bits) if b == 0]

    @property
    def is_full(self):
        return all(self.bits)


def effective_block_count(mask):
    return int(sum(mask))


# ======================================================================
#                           PASE HACIA ADELANTE
# ======================================================================

@dataclass
class ForwardPass:
    graph: Graph
    logits: int
    input: int
    params: dict
    executed_branches: int
    loss: int = None
    mask: BlockMask = None
    extras: dict = field(default_factory=dict)

    @property
    def logits_value(self):
        return self.graph.value(self.logits)

    @property
    def loss_value(self):
        return float(self.graph.value(self.loss))


def _apply_layer(graph, kind, x, w, b, stride):
    if kind == AFFINE:
        return graph.affine(x, w, b)
    return graph.conv2d(x, w, b, stride=stride)


def forward(params, spec, inputs, mask=None, scaling=SCALING_NONE, probabilities=None, labels=None):
    """
    Construye el grafo de la red (enmascarada) sobre `inputs`. Si se pasan
    `labels` se agrega la pérdida softmax-entropía cruzada. El escalado por
    supervivencia sólo actúa con la máscara completa.
    """
    _, layouts = spec.layout()
    if mask is None:
        mask = BlockMask.all_ones(spec.num_blocks)
    if len(mask) != spec.num_blocks:
        raise ShapeMismatchError(f"Máscara de longitud {len(mask)} para {spec.num_blocks} bloques")
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.shape[1:] != tuple(spec.input_shape):
        raise ShapeMismatchError(f"Entrada {inputs.shape[1:]} no coincide con {tuple(spec.input_shape)}")
    if scaling == SCALING_SURVIVAL and probabilities is None:
        raise ShapeMismatchError("El escalado por supervivencia requiere el vector p")

    graph = Graph()
    x_id = graph.leaf(inputs, 'input')
    leaf = OrderedDict((name, graph.leaf(value, name)) for name, value in params.tensors.items())

    h = graph.relu(_apply_layer(graph, spec.stem.kind, x_id, leaf['stem.weight'], leaf['stem.bias'],
                                spec.stem.stride))
    executed = 0
    for i, (block, lay) in enumerate(zip(spec.blocks, layouts)):
        prefix = f'blocks.{i}'
        if lay.projection:
            shortcut = _apply_layer(graph, block.kind, h, leaf[f'{prefix}.shortcut.weight'],
                                    leaf[f'{prefix}.shortcut.bias'], block.stride)
        else:
            shortcut = h
        if mask[i]:
            executed += 1
            branch = graph.relu(_apply_layer(graph, block.kind, h, leaf[f'{prefix}.branch1.weight'],
                                             leaf[f'{prefix}.branch1.bias'], block.stride))
            branch = _apply_layer(graph, block.kind, branch, leaf[f'{prefix}.branch2.weight'],
                                  leaf[f'{prefix}.branch2.bias'], 1)
            if scaling == SCALING_SURVIVAL and mask.is_full:
                branch = graph.scale(branch, probabilities[i])
            h = graph.relu(graph.add(shortcut, branch))
        else:
            h = graph.relu(shortcut)

    if len(spec.feature_shape) == 3:
        h = graph.global_avg_pool(h)
    logits = graph.affine(h, leaf['head.weight'], leaf['head.bias'])
    result = ForwardPass(graph, logits, x_id, dict(leaf), executed, mask=mask)
    if labels is not None:
        result.loss = graph.softmax_cross_entropy(logits, labels)
    return result


def predict(params, spec, inputs, scaling=SCALING_NONE, probabilities=None):
    return forward(params, spec, inputs, scaling=scaling, probabilities=probabilities).logits_value
