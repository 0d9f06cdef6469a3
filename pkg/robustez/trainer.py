"""
Bucles de entrenamiento: FP-Better, FGSM-RS, FGSM sin inicio aleatorio,
PGD-AT y entrenamiento estándar, con SGD con momentum.
"""
import logging
import math
import time
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .attack import INIT_UNIFORM, INIT_ZERO, AttackConfig, fgsm, pgd
from .checkpoints import Checkpoint
from .core import backward, check_finite
from .datasets import augment_batch, minibatches
from .evaluation import (
    MONITOR_FLOOR,
    MONITOR_PEAK,
    accuracy,
    monitor_subset,
    overfitting_monitor,
    robust_accuracy,
)
from .exceptions import InvalidArgumentError, NonFiniteError, ShapeMismatchError, TrainingDivergedError
from .model import (
    SCALING_NONE,
    SCALING_SURVIVAL,
    BlockMask,
    branch_parameter_names,
    build_network,
    effective_block_count,
    forward,
    preset,
)
from .rng import generator
from .sampler import LINEAR, SamplerSchedule, TemporalController, sample_mask

logger = logging.getLogger(__name__)

TARGET_SUBNETWORK = 'subnetwork'
TARGET_FULL = 'full'


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    attack: AttackConfig
    eval_attack: AttackConfig
    batch_size: int = 128
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_decay: float = 0.1
    decay_points: tuple = ()
    sampler_mode: str = LINEAR
    p_min: float = 0.5
    mu: float = 0.04
    update_target: str = TARGET_SUBNETWORK
    pgd_train_steps: int = 2
    network: str = 'resmlp-4'
    eval_scaling: str = SCALING_NONE
    seed: int = 0
    eval_every_epoch: bool = True
    monitor_size: int = 1000
    monitor_peak: float = MONITOR_PEAK
    monitor_floor: float = MONITOR_FLOOR
    augment: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidArgumentError("epochs y batch_size deben ser >= 1")
        for name in ('lr', 'lr_decay'):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise InvalidArgumentError(f"{name} debe ser finito y positivo")
        if not 0 <= self.momentum < 1 or self.weight_decay < 0:
            raise InvalidArgumentError("momentum debe estar en [0, 1) y weight_decay >= 0")
        if any(not 0 < p < 1 for p in self.decay_points):
            raise InvalidArgumentError("Los puntos de decaimiento deben estar en (0, 1)")
        if self.update_target not in (TARGET_SUBNETWORK, TARGET_FULL):
            raise InvalidArgumentError(f"update_target desconocido: {self.update_target}")
        if self.eval_scaling not in (SCALING_NONE, SCALING_SURVIVAL):
            raise InvalidArgumentError(f"Escalado desconocido: {self.eval_scaling}")


# ======================================================================
#                     OPTIMIZADOR Y TASA DE APRENDIZAJE
# ======================================================================

def sgd_momentum_step(params, grads, buffers, lr, momentum, weight_decay):
    """
    g' = g + wd·θ; v <- momentum·v + g'; θ <- θ - lr·v. Sólo se tocan los
    parámetros presentes en `grads`.
    """
    new_params = OrderedDict(params)
    new_buffers = OrderedDict(buffers)
    for name, grad in grads.items():
        theta = params[name]
        if grad.shape != theta.shape:
            raise ShapeMismatchError(f"Gradiente de '{name}' con forma {grad.shape}, se esperaba {theta.shape}")
        check_finite(grad, f"gradiente de '{name}'")
        grad = grad + weight_decay * theta
        velocity = buffers.get(name)
        velocity = grad if velocity is None else momentum * velocity + grad
        new_buffers[name] = velocity
        new_params[name] = theta - lr * velocity
    return new_params, new_buffers


def decay_epochs(config):
    # round() evita que 100/110 * 110 caiga en 99.999...
    return [math.floor(round(p * config.epochs, 9)) for p in config.decay_points]


def lr_at_epoch(config, epoch):
    passed = sum(1 for point in decay_epochs(config) if epoch >= point)
    return config.lr * config.lr_decay ** passed


# ======================================================================
#                               ESTADO
# ======================================================================

@dataclass
class EpochRecord:
    epoch: int
    lr: float
    p_min: float
    expected_blocks: float
    train_adv_loss: float
    train_adv_loss_sum: float
    iterations: int
    executed_fraction: float
    clean_accuracy: float = None
    robust_accuracy: float = None
    monitor_accuracy: float = None
    wall_time: float = field(default=None, compare=False)

    def to_dict(self):
        """Registro determinista (sin tiempo de reloj)."""
        data = asdict(self)
        data.pop('wall_time')
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass
class TrainState:
    params: object
    buffers: OrderedDict
    controller: TemporalController
    epoch: int = 0
    history: list = field(default_factory=list)
    best: Checkpoint = None
    best_robust: float = -1.0

    def snapshot(self, spec):
        return Checkpoint(
            spec=spec,
            params=self.params.copy(),
            epoch=self.epoch - 1,
            sampler=self.controller.to_dict(),
            momentum=OrderedDict((k, v.copy()) for k, v in self.buffers.items()),
            metrics={
                'history': [r.to_dict() for r in self.history],
                'best_robust_accuracy': self.best_robust,
            },
        )

    @classmethod
    def from_checkpoints(cls, last, best=None):
        history = [EpochRecord.from_dict(r) for r in last.metrics.get('history', [])]
        return cls(
            params=last.params.copy(),
            buffers=OrderedDict((k, v.copy()) for k, v in last.momentum.items()),
            controller=TemporalController.from_dict(last.sampler),
            epoch=last.epoch + 1,
            history=history,
            best=best,
            best_robust=last.metrics.get('best_robust_accuracy', -1.0),
        )


@dataclass
class CheckpointPair:
    best: Checkpoint
    last: Checkpoint
    history: list
    collapse_epoch: int = None

    @property
    def best_robust_accuracy(self):
        return self.best.metrics.get('robust_accuracy')


# ======================================================================
#                             ENTRENADORES
# ======================================================================

class AdversarialTrainer:
    """
    Plantilla común. Las subclases deciden el esquema de muestreo, la máscara
    de cada iteración y la perturbación.
    """
    method = None

    def __init__(self, config, spec, on_iteration=None):
        self.config = config
        self.spec = spec
        self.on_iteration = on_iteration

    # -------- ganchos --------
    def schedule(self):
        return SamplerSchedule(self.spec.num_blocks, LINEAR, 1.0, 0.0)

    def sample_mask(self, probabilities, rng):
        return BlockMask.all_ones(self.spec.num_blocks)

    def perturb(self, params, inputs, labels, mask, rng):
        raise NotImplementedError

    # -------- bucle --------
    def initial_state(self):
        params = build_network(self.spec, self.config.seed)
        return TrainState(params, OrderedDict(), TemporalController(self.schedule()))

    def _check_dataset(self, dataset):
        if dataset.input_shape != tuple(self.spec.input_shape):
            raise ShapeMismatchError(
                f"El conjunto tiene forma {dataset.input_shape}, la red espera {tuple(self.spec.input_shape)}"
            )
        if dataset.num_classes != self.spec.num_classes:
            raise ShapeMismatchError(
                f"El conjunto tiene {dataset.num_classes} clases, la red {self.spec.num_classes}"
            )

    def fit(self, train, evaluation=None, state=None):
        evaluation = evaluation or train
        self._check_dataset(train)
        self._check_dataset(evaluation)
        state = state or self.initial_state()
        monitor = monitor_subset(train, self.config.monitor_size, self.config.seed) \
            if self.config.monitor_size else None

        while state.epoch < self.config.epochs:
            started = time.perf_counter()
            record = self.run_epoch(state, train)
            last_epoch = state.epoch == self.config.epochs - 1
            if self.config.eval_every_epoch or last_epoch:
                self.evaluate_epoch(state, record, evaluation, monitor)
            state.controller.end_period()
            record.wall_time = time.perf_counter() - started
            state.history.append(record)
            state.epoch += 1
            if record.robust_accuracy is not None and record.robust_accuracy > state.best_robust:
                state.best_robust = record.robust_accuracy
                state.best = self._tag(state.snapshot(self.spec), record)
            logger.info(
                "[%s] época %d: lr %.4g, p_min %.4f, pérdida adv %.4f, limpia %s, PGD %s, ramas %.4f",
                self.method, record.epoch, record.lr, record.p_min, record.train_adv_loss,
                record.clean_accuracy, record.robust_accuracy, record.executed_fraction,
            )

        last = self._tag(state.snapshot(self.spec), state.history[-1])
        monitored = [r.monitor_accuracy for r in state.history if r.monitor_accuracy is not None]
        collapse = overfitting_monitor(monitored, self.config.monitor_peak, self.config.monitor_floor) \
            if monitored else None
        return CheckpointPair(state.best or last, last, list(state.history), collapse)

    @staticmethod
    def _tag(checkpoint, record):
        checkpoint.metrics['robust_accuracy'] = record.robust_accuracy
        checkpoint.metrics['clean_accuracy'] = record.clean_accuracy
        return checkpoint

    def run_epoch(self, state, train):
        """
        Una época de SGD. `executed_fraction` cuenta las ramas de la máscara
        muestreada, que es la subred del ataque; con update_target=full el
        paso de entrenamiento corre todas las ramas y no entra en la cuenta.
        """
        config = self.config
        epoch = state.epoch
        lr = lr_at_epoch(config, epoch)
        probabilities = state.controller.probabilities
        mask_rng = generator(config.seed, 'masks', epoch)
        attack_rng = generator(config.seed, 'attacks', epoch)
        augment_rng = generator(config.seed, 'augment', epoch)
        executed = 0
        batches = minibatches(train, config.batch_size, config.seed, epoch)

        for iteration, batch in enumerate(batches):
            inputs = batch.inputs
            if config.augment and train.is_image:
                inputs = augment_batch(inputs, augment_rng)
            mask = self.sample_mask(probabilities, mask_rng)
            try:
                delta = self.perturb(state.params, inputs, batch.labels, mask, attack_rng)
                loss, grads = self.training_gradients(state.params, inputs + delta, batch.labels, mask)
            except NonFiniteError as exc:
                raise TrainingDivergedError(
                    f"Valor no finito en la época {epoch}, iteración {iteration}: {exc.detail}",
                    epoch=epoch, iteration=iteration,
                ) from exc
            tensors, state.buffers = sgd_momentum_step(
                state.params.tensors, grads, state.buffers, lr, config.momentum, config.weight_decay
            )
            state.params = state.params.replace(tensors)
            state.controller.record(loss)
            executed += effective_block_count(mask)
            if self.on_iteration is not None:
                self.on_iteration(epoch, iteration, loss, mask)

        iterations = len(batches)
        loss_sum = state.controller.state.l_cur
        return EpochRecord(
            epoch=epoch,
            lr=lr,
            p_min=state.controller.p_min,
            expected_blocks=float(np.sum(probabilities)),
            train_adv_loss=loss_sum / iterations,
            train_adv_loss_sum=loss_sum,
            iterations=iterations,
            executed_fraction=executed / (iterations * self.spec.num_blocks),
        )

    def training_gradients(self, params, inputs, labels, mask):
        """Pérdida y gradientes de θ; con target=subnetwork las ramas descartadas no reciben paso."""
        if self.config.update_target == TARGET_FULL:
            mask = BlockMask.all_ones(self.spec.num_blocks)
        fp = forward(params, self.spec, inputs, mask=mask, labels=labels)
        loss = fp.loss_value
        by_id = backward(fp.graph, fp.loss, wrt=list(fp.params.values()))
        grads = OrderedDict((name, by_id[leaf]) for name, leaf in fp.params.items())
        for block in mask.dropped():
            for name in branch_parameter_names(self.spec, block):
                grads.pop(name, None)
        return loss, grads

    def evaluate_epoch(self, state, record, evaluation, monitor):
        config = self.config
        probabilities = state.controller.probabilities if config.eval_scaling == SCALING_SURVIVAL else None
        record.clean_accuracy = accuracy(state.params, self.spec, evaluation, config.eval_scaling, probabilities)
        record.robust_accuracy = robust_accuracy(
            state.params, self.spec, evaluation, config.eval_attack,
            generator(config.seed, 'eval', state.epoch, 0), config.eval_scaling, probabilities,
        )
        if monitor is not None:
            record.monitor_accuracy = robust_accuracy(
                state.params, self.spec, monitor, config.eval_attack,
                generator(config.seed, 'eval', state.epoch, 1), config.eval_scaling, probabilities,
            )


class FPBetterTrainer(AdversarialTrainer):
    """FGSM-RS sobre subredes muestreadas con p_min ajustado por el controlador temporal."""
    method = 'fp-better'

    def schedule(self):
        return SamplerSchedule(self.spec.num_blocks, self.config.sampler_mode, self.config.p_min, self.config.mu)

    def sample_mask(self, probabilities, rng):
        return sample_mask(probabilities, rng)

    def perturb(self, params, inputs, labels, mask, rng):
        attack = replace(self.config.attack, init=INIT_UNIFORM)
        return fgsm(params, self.spec, mask, inputs, labels, attack, rng).delta


class FGSMRSTrainer(AdversarialTrainer):
    method = 'fgsm-rs'

    def perturb(self, params, inputs, labels, mask, rng):
        attack = replace(self.config.attack, init=INIT_UNIFORM)
        return fgsm(params, self.spec, mask, inputs, labels, attack, rng).delta


class FGSMTrainer(AdversarialTrainer):
    """FGSM-AT sin inicio aleatorio."""
    method = 'fgsm'

    def perturb(self, params, inputs, labels, mask, rng):
        attack = replace(self.config.attack, init=INIT_ZERO)
        return fgsm(params, self.spec, mask, inputs, labels, attack, rng).delta


class PGDATTrainer(AdversarialTrainer):
    method = 'pgd-at'

    def perturb(self, params, inputs, labels, mask, rng):
        attack = self.config.attack.with_steps(self.config.pgd_train_steps)
        return pgd(params, self.spec, inputs, labels, attack, rng).delta


class StandardTrainer(AdversarialTrainer):
    method = 'standard'

    def perturb(self, params, inputs, labels, mask, rng):
        return np.zeros_like(inputs)


TRAINERS = OrderedDict((cls.method, cls) for cls in (
    FPBetterTrainer, FGSMRSTrainer, FGSMTrainer, PGDATTrainer, StandardTrainer,
))


def make_trainer(method, config, spec, on_iteration=None):
    try:
        cls = TRAINERS[method]
    except KeyError:
        raise InvalidArgumentError(f"Método desconocido: {method}") from None
    return cls(config, spec, on_iteration)


def _train(method, config, dataset, eval_dataset=None, spec=None, on_iteration=None):
    spec = spec or preset(config.network, dataset.input_shape, dataset.num_classes)
    return make_trainer(method, config, spec, on_iteration).fit(dataset, eval_dataset)


def train_fp_better(config, dataset, eval_dataset=None, spec=None, on_iteration=None):
    return _train(FPBetterTrainer.method, config, dataset, eval_dataset, spec, on_iteration)


def train_fgsm_rs(config, dataset, eval_dataset=None, spec=None, on_iteration=None):
    return _train(FGSMRSTrainer.method, config, dataset, eval_dataset, spec, on_iteration)


def train_pgd_at(config, dataset, eval_dataset=None, spec=None, on_iteration=None):
    return _train(PGDATTrainer.method, config, dataset, eval_dataset, spec, on_iteration)


def train_standard(config, dataset, eval_dataset=None, spec=None, on_iteration=None):
    return _train(StandardTrainer.method, config, dataset, eval_dataset, spec, on_iteration)
