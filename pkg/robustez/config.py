"""
Carga, sobrescritura y resolución de la configuración de corrida.

Orden de precedencia: archivo, luego `--set clave.punteada=valor` (el último
gana), luego las banderas explícitas de la línea de comandos.
"""
import json
import logging
import math

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path

from .attack import INIT_UNIFORM, AttackConfig, fgsm_config
from .datasets import load_source
from .exceptions import InvalidConfigError, InvalidOverrideError, MissingConfigError
from .model import preset, rescnn, resmlp
from .sampler import schedule_for_ablation
from .serializers import RunConfigSerializer, section_fields
from .trainer import TrainConfig

logger = logging.getLogger(__name__)

RESOLVED_NAME = 'config.resolved.json'


# ==============================================================================
# LECTURA Y SOBRESCRITURAS
# ==============================================================================

def load_config_file(path):
    path = Path(path)
    if not path.is_file():
        raise MissingConfigError(f"No existe el archivo de configuración {path}")
    text = path.read_text(encoding='utf-8')
    try:
        if path.suffix == '.toml':
            return tomllib.loads(text)
        if path.suffix == '.json':
            return json.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise InvalidConfigError(f"{path}: {exc}") from exc
    raise InvalidConfigError(f"Formato de configuración no soportado: {path.suffix} (use .toml o .json)")


def parse_override(text):
    """'train.lr=0.05' -> (['train', 'lr'], 0.05). El valor se lee como JSON o queda como texto."""
    key, sep, raw = text.partition('=')
    key = key.strip()
    if not sep or not key or any(not part for part in key.split('.')):
        raise InvalidOverrideError(f"Sobrescritura inválida '{text}': se espera clave.punteada=valor")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split('.'), value


def apply_overrides(data, overrides):
    fields = section_fields()
    data = json.loads(json.dumps(data))
    for text in overrides:
        path, value = parse_override(text)
        if len(path) == 1:
            known = path[0] in fields[None] or path[0] in fields
        else:
            known = len(path) == 2 and path[0] in fields and path[1] in fields.get(path[0], ())
        if not known:
            raise InvalidOverrideError(f"Clave desconocida en la sobrescritura: {'.'.join(path)}")
        target = data
        for part in path[:-1]:
            node = target.setdefault(part, {})
            if not isinstance(node, dict):
                raise InvalidOverrideError(f"'{part}' no es una sección en '{text}'")
            target = node
        target[path[-1]] = value
    return data


# ==============================================================================
# CONFIGURACIÓN RESUELTA
# ==============================================================================

@dataclass
class RunConfig:
    seed: int
    method: str
    ablation: str
    output_dir: str
    dataset: dict
    network: dict = field(default_factory=dict)
    attack: dict = field(default_factory=dict)
    sampler: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    evaluation: dict = field(default_factory=dict)
    bound: dict = field(default_factory=dict)

    def to_dict(self):
        return json.loads(json.dumps(vars(self)))

    def datasets(self):
        return load_source(self.dataset, self.seed)

    def network_spec(self, dataset):
        net = self.network
        name = net['preset']
        if name.startswith('resmlp') and ('num_blocks' in net or 'width' in net):
            spec = resmlp(dataset.input_shape, dataset.num_classes, net.get('num_blocks', 4), net.get('width', 64))
        elif name.startswith('rescnn') and ('widths' in net or 'blocks_per_stage' in net):
            spec = rescnn(dataset.input_shape, dataset.num_classes, tuple(net.get('widths', (16, 32, 64))),
                          net.get('blocks_per_stage', 2))
        else:
            return preset(name, dataset.input_shape, dataset.num_classes)
        spec.layout()
        return spec

    def clip(self, dataset):
        """Recorte al rango de datos: explícito, o activo sólo si el conjunto declara rango."""
        attack = self.attack
        if attack.get('clip_to_range') is False:
            return None
        if 'clip' in attack:
            return tuple(attack['clip'])
        if attack.get('clip_to_range') or dataset.value_range is not None:
            return dataset.value_range
        return None

    @property
    def epsilon(self):
        return self.attack['epsilon']

    def train_attack(self, dataset):
        eps = self.epsilon
        alpha = self.attack.get('alpha') or (1.25 * eps if eps > 0 else 1.0)
        return AttackConfig(eps, alpha, 1, self.attack['init'], self.clip(dataset))

    def pgd_attack(self, dataset, steps=None):
        eps = self.epsilon
        alpha = self.evaluation.get('pgd_alpha') or (eps / 4 if eps > 0 else 1.0)
        return AttackConfig(eps, alpha, steps or self.evaluation['pgd_steps'], INIT_UNIFORM, self.clip(dataset))

    def fgsm_attack(self, dataset):
        return fgsm_config(self.epsilon, self.clip(dataset))

    def eval_attacks(self, dataset, labels=None):
        """Etiqueta -> AttackConfig para `fgsm` y `pgdK`."""
        attacks = {}
        for label in labels or self.evaluation['attacks']:
            if label == 'fgsm':
                attacks[label] = self.fgsm_attack(dataset)
            else:
                attacks[label] = self.pgd_attack(dataset, int(label[3:]))
        return attacks

    def schedule(self, num_blocks):
        sampler = self.sampler
        schedule = schedule_for_ablation(num_blocks, self.ablation, sampler['p_min'], sampler['mu'])
        if 'mode' in sampler:
            schedule.mode = sampler['mode']
        return schedule

    def iterations(self, dataset):
        return self.train['epochs'] * math.ceil(len(dataset) / self.train['batch_size'])

    def train_config(self, dataset, spec):
        train = self.train
        evaluation = self.evaluation
        schedule = self.schedule(spec.num_blocks)
        return TrainConfig(
            epochs=train['epochs'],
            attack=self.train_attack(dataset),
            eval_attack=self.pgd_attack(dataset),
            batch_size=train['batch_size'],
            lr=train['lr'],
            momentum=train['momentum'],
            weight_decay=train['weight_decay'],
            lr_decay=train['lr_decay'],
            decay_points=tuple(train['decay_points']),
            sampler_mode=schedule.mode,
            p_min=schedule.p_min,
            mu=schedule.mu,
            update_target=train['update_target'],
            pgd_train_steps=train['pgd_train_steps'],
            network=self.network['preset'],
            eval_scaling=evaluation['scaling'],
            seed=self.seed,
            eval_every_epoch=train['eval_every_epoch'],
            monitor_size=evaluation['monitor_size'],
            monitor_peak=evaluation['monitor_peak'],
            monitor_floor=evaluation['monitor_floor'],
            augment=train['augment'],
        )


def resolve(data):
    serializer = RunConfigSerializer(data=data)
    if not serializer.is_valid():
        errores = json.loads(json.dumps(serializer.errors))
        raise InvalidConfigError(f"Configuración inválida: {json.dumps(errores, ensure_ascii=False)}", errores)
    return RunConfig(**json.loads(json.dumps(serializer.validated_data)))


def load_run_config(path, overrides=(), seed=None, method=None, ablation=None, output_dir=None):
    data = load_config_file(path)
    flags = []
    for key, value in (('seed', seed), ('method', method), ('ablation', ablation), ('output_dir', output_dir)):
        if value is not None:
            flags.append(f'{key}={json.dumps(value)}')
    run = resolve(apply_overrides(data, list(overrides) + flags))
    logger.debug("Configuración resuelta desde %s con %d sobrescritura(s)", path, len(overrides))
    return run


def write_resolved(run, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / RESOLVED_NAME
    path.write_text(json.dumps(run.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + '\n', encoding='utf-8')
    return path
