"""
Tensores densos float64 y diferenciación automática en modo reverso.

Un tensor es un `numpy.ndarray` float64 en orden C. El grafo registra cada
primitiva con sus entradas y las activaciones que necesita su regla
backward; `backward()` recorre el grafo una sola vez en orden inverso.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    InvalidArgumentError,
    NonFiniteError,
    NonScalarLossError,
    ShapeMismatchError,
)

logger = logging.getLogger(__name__)


def tensor(data, shape=None):
    arr = np.array(data, dtype=np.float64, order='C')
    if shape is not None:
        arr = arr.reshape(shape)
    check_finite(arr, 'tensor')
    return arr


def check_finite(arr, what, node_id=None):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"Valor no finito en {what}", node_id=node_id)
    return arr


# ======================================================================
#                         KERNELS (im2col / col2im)
# ======================================================================

def conv_output_size(size, kernel, stride):
    pad = kernel // 2
    return (size + 2 * pad - kernel) // stride + 1


def im2col(x, kernel, stride, pad):
    n, c, h, w = x.shape
    out_h = (h + 2 * pad - kernel) // stride + 1
    out_w = (w + 2 * pad - kernel) // stride + 1
    img = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode='constant')
    col = np.empty((n, c, kernel, kernel, out_h, out_w))
    for i in range(kernel):
        i_max = i + stride * out_h
        for j in range(kernel):
            j_max = j + stride * out_w
            col[:, :, i, j, :, :] = img[:, :, i:i_max:stride, j:j_max:stride]
    # (N, C, k, k, oh, ow) -> (N*oh*ow, C*k*k)
    return col.transpose(0, 4, 5, 1, 2, 3).reshape(n * out_h * out_w, -1), out_h, out_w


def col2im(col, x_shape, kernel, stride, pad, out_h, out_w):
    n, c, h, w = x_shape
    col = col.reshape(n, out_h, out_w, c, kernel, kernel).transpose(0, 3, 4, 5, 1, 2)
    img = np.zeros((n, c, h + 2 * pad + stride - 1, w + 2 * pad + stride - 1))
    for i in range(kernel):
        i_max = i + stride * out_h
        for j in range(kernel):
            j_max = j + stride * out_w
            img[:, :, i:i_max:stride, j:j_max:stride] += col[:, :, i, j, :, :]
    return img[:, :, pad:pad + h, pad:pad + w]


def cross_entropy_per_example(logits, labels):
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=1))
    return log_norm - shifted[np.arange(logits.shape[0]), labels]


def softmax(logits):
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=1, keepdims=True)


# ======================================================================
#                              PRIMITIVAS
# ======================================================================

@dataclass(frozen=True)
class Primitive:
    name: str
    forward: object
    backward: object


def _affine_forward(inputs, attrs):
    x, w, b = inputs
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeMismatchError(
            f"affine: x{x.shape} @ w{w.shape} + b{b.shape} no encajan"
        )
    return x @ w + b, {}


def _affine_backward(g, inputs, out, saved, attrs):
    x, w, _ = inputs
    return g @ w.T, x.T @ g, g.sum(axis=0)


def _conv2d_forward(inputs, attrs):
    x, w, b = inputs
    stride = attrs['stride']
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ShapeMismatchError(f"conv2d: x{x.shape}, w{w.shape}, b{b.shape} no encajan")
    kernel = w.shape[2]
    if w.shape[3] != kernel or kernel % 2 == 0:
        raise ShapeMismatchError(f"conv2d: el kernel debe ser cuadrado e impar, no {w.shape[2:]}")
    if stride not in (1, 2):
        raise InvalidArgumentError(f"conv2d: stride {stride} no soportado")
    cols, out_h, out_w = im2col(x, kernel, stride, kernel // 2)
    w_col = w.reshape(w.shape[0], -1)
    out = cols @ w_col.T + b
    out = out.reshape(x.shape[0], out_h, out_w, w.shape[0]).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), {'cols': cols, 'out_hw': (out_h, out_w)}


def _conv2d_backward(g, inputs, out, saved, attrs):
    x, w, _ = inputs
    kernel = w.shape[2]
    out_h, out_w = saved['out_hw']
    g_col = g.transpose(0, 2, 3, 1).reshape(-1, w.shape[0])
    w_col = w.reshape(w.shape[0], -1)
    dw = (g_col.T @ saved['cols']).reshape(w.shape)
    db = g_col.sum(axis=0)
    dcols = g_col @ w_col
    dx = col2im(dcols, x.shape, kernel, attrs['stride'], kernel // 2, out_h, out_w)
    return np.ascontiguousarray(dx), dw, db


def _relu_forward(inputs, attrs):
    (x,) = inputs
    return np.maximum(x, 0.0), {}


def _relu_backward(g, inputs, out, saved, attrs):
    (x,) = inputs
    # subgradiente 0 en x == 0
    return (g * (x > 0.0),)


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{op}: formas distintas {a.shape} y {b.shape}")


def _add_forward(inputs, attrs):
    a, b = inputs
    _same_shape(a, b, 'add')
    return a + b, {}


def _add_backward(g, inputs, out, saved, attrs):
    return g, g


def _mul_forward(inputs, attrs):
    a, b = inputs
    _same_shape(a, b, 'mul')
    return a * b, {}


def _mul_backward(g, inputs, out, saved, attrs):
    a, b = inputs
    return g * b, g * a


def _scale_forward(inputs, attrs):
    (a,) = inputs
    return attrs['factor'] * a, {}


def _scale_backward(g, inputs, out, saved, attrs):
    return (attrs['factor'] * g,)


def _sum_forward(inputs, attrs):
    (a,) = inputs
    return np.array(np.sum(a)), {}


def _sum_backward(g, inputs, out, saved, attrs):
    (a,) = inputs
    return (np.full(a.shape, float(g)),)


def _gap_forward(inputs, attrs):
    (x,) = inputs
    if x.ndim != 4:
        raise ShapeMismatchError(f"global_avg_pool espera (N, C, H, W), no {x.shape}")
    return x.mean(axis=(2, 3)), {}


def _gap_backward(g, inputs, out, saved, attrs):
    (x,) = inputs
    area = x.shape[2] * x.shape[3]
    return (np.broadcast_to((g / area)[:, :, None, None], x.shape).copy(),)


def _flatten_forward(inputs, attrs):
    (x,) = inputs
    return x.reshape(x.shape[0], -1), {}


def _flatten_backward(g, inputs, out, saved, attrs):
    (x,) = inputs
    return (g.reshape(x.shape),)


def _sce_forward(inputs, attrs):
    (logits,) = inputs
    labels = attrs['labels']
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeMismatchError(
            f"softmax_cross_entropy: logits{logits.shape} y etiquetas{labels.shape} no encajan"
        )
    per_example = cross_entropy_per_example(logits, labels)
    return np.array(per_example.mean()), {'per_example': per_example}


def _sce_backward(g, inputs, out, saved, attrs):
    (logits,) = inputs
    labels = attrs['labels']
    batch = logits.shape[0]
    grad = softmax(logits)
    grad[np.arange(batch), labels] -= 1.0
    return (grad * (float(g) / batch),)


PRIMITIVES = {
    p.name: p for p in (
        Primitive('affine', _affine_forward, _affine_backward),
        Primitive('conv2d', _conv2d_forward, _conv2d_backward),
        Primitive('relu', _relu_forward, _relu_backward),
        Primitive('add', _add_forward, _add_backward),
        Primitive('mul', _mul_forward, _mul_backward),
        Primitive('scale', _scale_forward, _scale_backward),
        Primitive('sum', _sum_forward, _sum_backward),
        Primitive('global_avg_pool', _gap_forward, _gap_backward),
        Primitive('flatten', _flatten_forward, _flatten_backward),
        Primitive('softmax_cross_entropy', _sce_forward, _sce_backward),
    )
}


# ======================================================================
#                                GRAFO
# ======================================================================

@dataclass
class Node:
    id: int
    op: str
    inputs: tuple
    value: np.ndarray
    attrs: dict = field(default_factory=dict)
    saved: dict = field(default_factory=dict)
    name: str = None

    @property
    def is_leaf(self):
        return self.op == 'leaf'


class Graph:
    """Registro en orden topológico: las entradas de un nodo siempre lo preceden."""

    def __init__(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def _push(self, op, inputs, value, attrs=None, saved=None, name=None):
        node = Node(len(self.nodes), op, tuple(inputs), value, attrs or {}, saved or {}, name)
        self.nodes.append(node)
        return node.id

    def leaf(self, value, name=None):
        value = np.asarray(value, dtype=np.float64)
        check_finite(value, f"hoja '{name}'" if name else 'hoja', node_id=len(self.nodes))
        return self._push('leaf', (), value, name=name)

    def apply(self, op, inputs, **attrs):
        primitive = PRIMITIVES[op]
        values = [self.nodes[i].value for i in inputs]
        out, saved = primitive.forward(values, attrs)
        return self._push(op, inputs, out, attrs, saved)

    def value(self, node_id):
        return self.nodes[node_id].value

    def leaves(self):
        return [n.id for n in self.nodes if n.is_leaf]

    def ops_used(self):
        return tuple(sorted({n.op for n in self.nodes if not n.is_leaf}))

    def consumers(self, node_id):
        return [n for n in self.nodes if node_id in n.inputs]

    # -------- atajos --------
    def affine(self, x, w, b):
        return self.apply('affine', (x, w, b))

    def conv2d(self, x, w, b, stride=1):
        return self.apply('conv2d', (x, w, b), stride=stride)

    def relu(self, x):
        return self.apply('relu', (x,))

    def add(self, a, b):
        return self.apply('add', (a, b))

    def mul(self, a, b):
        return self.apply('mul', (a, b))

    def scale(self, a, factor):
        return self.apply('scale', (a,), factor=float(factor))

    def sum(self, a):
        return self.apply('sum', (a,))

    def global_avg_pool(self, x):
        return self.apply('global_avg_pool', (x,))

    def flatten(self, x):
        return self.apply('flatten', (x,))

    def softmax_cross_entropy(self, logits, labels):
        loss = self.apply(
            'softmax_cross_entropy', (logits,), labels=np.asarray(labels, dtype=np.int64)
        )
        check_finite(self.value(loss), 'pérdida', node_id=loss)
        return loss


def backward(graph, loss_node, wrt=None):
    """
    Gradiente de la pérdida escalar respecto a cada hoja de `wrt`
    (todas por defecto). Hojas no alcanzables reciben ceros exactos.
    """
    loss = graph.nodes[loss_node]
    if loss.value.size != 1:
        raise NonScalarLossError(
            f"La pérdida debe ser escalar, el nodo {loss_node} tiene forma {loss.value.shape}",
            node_id=loss_node,
        )
    check_finite(loss.value, 'pérdida', node_id=loss_node)

    grads = {loss_node: np.ones_like(loss.value)}
    leaf_grads = {}
    for node in reversed(graph.nodes[:loss_node + 1]):
        g = grads.pop(node.id, None)
        if g is None:
            continue
        if node.is_leaf:
            leaf_grads[node.id] = g
            continue
        primitive = PRIMITIVES[node.op]
        values = [graph.nodes[i].value for i in node.inputs]
        input_grads = primitive.backward(g, values, node.value, node.saved, node.attrs)
        for input_id, ig in zip(node.inputs, input_grads):
            check_finite(ig, f"gradiente de '{node.op}'", node_id=node.id)
            if input_id in grads:
                grads[input_id] = grads[input_id] + ig
            else:
                grads[input_id] = ig

    targets = graph.leaves() if wrt is None else list(wrt)
    result = {}
    for leaf_id in targets:
        g = leaf_grads.get(leaf_id)
        result[leaf_id] = g if g is not None else np.zeros_like(graph.nodes[leaf_id].value)
    return result


# ======================================================================
#                       ORÁCULO DE DIFERENCIAS FINITAS
# ======================================================================

@dataclass
class WorstCoordinate:
    leaf: str
    index: tuple
    analytic: float
    numeric: float
    relative_error: float


@dataclass
class GradCheckReport:
    max_relative_error: float
    tolerance: float
    primitives: tuple
    worst_by_primitive: dict

    @property
    def passed(self):
        return self.max_relative_error <= self.tolerance


def relative_error(analytic, numeric, floor=1e-8):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(function, leaves, h=1e-5, tolerance=1e-4, floor=1e-8):
    """
    Compara backward() contra diferencias centrales (f(w+h) - f(w-h)) / 2h.

    `function(graph, ids)` construye la pérdida escalar en `graph` a partir de
    las hojas `ids` (nombre -> id) y devuelve su id. El reporte guarda la peor
    coordenada por primitiva consumidora de cada hoja.
    """
    if h <= 0:
        raise InvalidArgumentError("h debe ser positivo")
    leaves = {name: np.array(v, dtype=np.float64) for name, v in leaves.items()}

    def evaluate(values):
        g = Graph()
        ids = {name: g.leaf(v, name) for name, v in values.items()}
        return g, ids, function(g, ids)

    graph, ids, loss = evaluate(leaves)
    analytic = backward(graph, loss, wrt=list(ids.values()))

    worst = {}
    max_err = 0.0
    for name, base in leaves.items():
        consumers = sorted({n.op for n in graph.consumers(ids[name])}) or ['unreachable']
        grad = analytic[ids[name]]
        for index in np.ndindex(base.shape):
            plus = dict(leaves)
            minus = dict(leaves)
            plus[name] = base.copy()
            minus[name] = base.copy()
            plus[name][index] += h
            minus[name][index] -= h
            g_p, _, l_p = evaluate(plus)
            g_m, _, l_m = evaluate(minus)
            numeric = (float(g_p.value(l_p)) - float(g_m.value(l_m))) / (2.0 * h)
            err = relative_error(float(grad[index]), numeric, floor)
            max_err = max(max_err, err)
            for op in consumers:
                current = worst.get(op)
                if current is None or err > current.relative_error:
                    worst[op] = WorstCoordinate(name, index, float(grad[index]), numeric, err)

    logger.debug("grad_check: error relativo máximo %.3e", max_err)
    return GradCheckReport(max_err, tolerance, graph.ops_used(), worst)
