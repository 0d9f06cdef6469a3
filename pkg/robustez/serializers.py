"""
Validación de la configuración de corrida (RunConfig).

Un serializer por sección; toda clave desconocida se rechaza en cualquier
nivel. Los valores por defecto salen de `settings.ROBUSTEZ`.
"""
from django.conf import settings
from rest_framework import serializers

from .attack import INIT_UNIFORM, INIT_ZERO
from .bound import MASK_FULL, MASK_SUBNETWORK
from .model import PRESETS, SCALING_NONE, SCALING_SURVIVAL
from .sampler import ABLATIONS, ABLATION_BOTH, MODES
from .trainer import TARGET_FULL, TARGET_SUBNETWORK, TRAINERS


def defecto(clave):
    return settings.ROBUSTEZ[clave]


class StrictSerializer(serializers.Serializer):
    """Rechaza claves que no correspondan a un campo declarado."""

    def to_internal_value(self, data):
        if not isinstance(data, dict):
            raise serializers.ValidationError({
                'non_field_errors': ['Se esperaba una tabla de claves y valores']
            })
        desconocidas = sorted(set(data) - set(self.fields))
        if desconocidas:
            raise serializers.ValidationError({
                clave: ['Clave desconocida'] for clave in desconocidas
            })
        return super().to_internal_value(data)


# ==============================================================================
# DATOS
# ==============================================================================

class DatasetSerializer(StrictSerializer):
    KINDS = ('blobs', 'idx', 'cifar')
    REQUERIDOS = {
        'blobs': ('n_per_class', 'dims', 'centers', 'sigma'),
        'idx': ('images', 'labels', 'eval_images', 'eval_labels'),
        'cifar': ('train', 'eval'),
    }

    kind = serializers.ChoiceField(choices=KINDS)

    # blobs
    n_per_class = serializers.IntegerField(min_value=1, required=False)
    eval_n_per_class = serializers.IntegerField(min_value=1, required=False)
    dims = serializers.IntegerField(min_value=1, required=False)
    centers = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(), min_length=1),
        min_length=2,
        required=False,
    )
    sigma = serializers.FloatField(required=False)

    # idx
    images = serializers.CharField(required=False)
    labels = serializers.CharField(required=False)
    eval_images = serializers.CharField(required=False)
    eval_labels = serializers.CharField(required=False)

    # cifar
    train = serializers.ListField(child=serializers.CharField(), min_length=1, required=False)
    eval = serializers.ListField(child=serializers.CharField(), min_length=1, required=False)
    label_bytes = serializers.ChoiceField(choices=(1, 2), default=1)

    subset = serializers.IntegerField(min_value=1, required=False)
    eval_subset = serializers.IntegerField(min_value=1, required=False)

    def validate_sigma(self, value):
        if value <= 0:
            raise serializers.ValidationError("sigma debe ser positivo")
        return value

    def validate(self, data):
        faltantes = [c for c in self.REQUERIDOS[data['kind']] if c not in data]
        if faltantes:
            raise serializers.ValidationError({
                c: [f"Obligatorio para kind = {data['kind']}"] for c in faltantes
            })
        if data['kind'] == 'blobs':
            if any(len(center) != data['dims'] for center in data['centers']):
                raise serializers.ValidationError({
                    'centers': [f"Cada centro debe tener {data['dims']} coordenadas"]
                })
            data.setdefault('eval_n_per_class', data['n_per_class'])
        return data


# ==============================================================================
# RED, ATAQUE Y MUESTREO
# ==============================================================================

class NetworkSerializer(StrictSerializer):
    preset = serializers.ChoiceField(choices=sorted(PRESETS), default='resmlp-4')
    num_blocks = serializers.IntegerField(min_value=1, required=False)
    width = serializers.IntegerField(min_value=1, required=False)
    widths = serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=1, required=False)
    blocks_per_stage = serializers.IntegerField(min_value=1, required=False)

    def validate(self, data):
        mlp = data['preset'].startswith('resmlp')
        propias = ('num_blocks', 'width') if mlp else ('widths', 'blocks_per_stage')
        ajenas = [c for c in ('num_blocks', 'width', 'widths', 'blocks_per_stage') if c in data and c not in propias]
        if ajenas:
            raise serializers.ValidationError({
                c: [f"No aplica a la arquitectura {data['preset']}"] for c in ajenas
            })
        return data


class AttackSerializer(StrictSerializer):
    epsilon = serializers.FloatField(min_value=0.0)
    alpha = serializers.FloatField(required=False)
    init = serializers.ChoiceField(choices=(INIT_ZERO, INIT_UNIFORM), default=INIT_UNIFORM)
    clip_to_range = serializers.BooleanField(required=False, allow_null=True, default=None)
    clip = serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2, required=False)

    def validate_alpha(self, value):
        if value <= 0:
            raise serializers.ValidationError("α debe ser positivo")
        return value

    def validate(self, data):
        if 'clip' in data and not data['clip'][0] < data['clip'][1]:
            raise serializers.ValidationError({'clip': ["Se requiere lo < hi"]})
        return data


class SamplerSerializer(StrictSerializer):
    mode = serializers.ChoiceField(choices=MODES, required=False)
    p_min = serializers.FloatField(default=lambda: defecto('P_MIN'))
    mu = serializers.FloatField(min_value=0.0, default=lambda: defecto('MU'))

    def validate_p_min(self, value):
        if not 0 < value <= 1:
            raise serializers.ValidationError("p_min debe estar en (0, 1]")
        return value


# ==============================================================================
# ENTRENAMIENTO, EVALUACIÓN Y COTA
# ==============================================================================

class TrainSerializer(StrictSerializer):
    epochs = serializers.IntegerField(min_value=1)
    batch_size = serializers.IntegerField(min_value=1, default=128)
    lr = serializers.FloatField(default=lambda: defecto('LR'))
    momentum = serializers.FloatField(min_value=0.0, default=lambda: defecto('MOMENTUM'))
    weight_decay = serializers.FloatField(min_value=0.0, default=lambda: defecto('WEIGHT_DECAY'))
    lr_decay = serializers.FloatField(default=lambda: defecto('LR_DECAY'))
    decay_points = serializers.ListField(child=serializers.FloatField(), default=list)
    update_target = serializers.ChoiceField(choices=(TARGET_SUBNETWORK, TARGET_FULL), default=TARGET_SUBNETWORK)
    pgd_train_steps = serializers.IntegerField(min_value=1, default=lambda: defecto('PGD_TRAIN_STEPS'))
    augment = serializers.BooleanField(default=False)
    eval_every_epoch = serializers.BooleanField(default=True)

    def validate_lr(self, value):
        if value <= 0:
            raise serializers.ValidationError("La tasa de aprendizaje debe ser positiva")
        return value

    def validate_lr_decay(self, value):
        if value <= 0:
            raise serializers.ValidationError("El factor de decaimiento debe ser positivo")
        return value

    def validate_momentum(self, value):
        if value >= 1:
            raise serializers.ValidationError("momentum debe ser < 1")
        return value

    def validate_decay_points(self, value):
        if any(not 0 < p < 1 for p in value):
            raise serializers.ValidationError("Los puntos de decaimiento son fracciones en (0, 1)")
        return sorted(value)


class EvaluationSerializer(StrictSerializer):
    pgd_steps = serializers.IntegerField(min_value=1, default=lambda: defecto('PGD_EVAL_STEPS'))
    pgd_alpha = serializers.FloatField(required=False)
    scaling = serializers.ChoiceField(choices=(SCALING_NONE, SCALING_SURVIVAL), default=SCALING_NONE)
    attacks = serializers.ListField(child=serializers.CharField(), default=lambda: ['fgsm', 'pgd10', 'pgd20', 'pgd50'])
    monitor_size = serializers.IntegerField(min_value=0, default=lambda: defecto('MONITOR_SIZE'))
    monitor_peak = serializers.FloatField(default=lambda: defecto('MONITOR_PEAK'))
    monitor_floor = serializers.FloatField(default=lambda: defecto('MONITOR_FLOOR'))
    landscape_grid = serializers.IntegerField(min_value=3, default=lambda: defecto('LANDSCAPE_GRID'))
    landscape_steps = serializers.IntegerField(min_value=1, default=lambda: defecto('LANDSCAPE_STEPS'))

    def validate_attacks(self, value):
        for label in value:
            if label != 'fgsm' and not (label.startswith('pgd') and label[3:].isdigit() and int(label[3:]) >= 1):
                raise serializers.ValidationError(f"Ataque desconocido: {label} (use fgsm o pgdK)")
        return value

    def validate_landscape_grid(self, value):
        if value % 2 == 0:
            raise serializers.ValidationError("La malla debe tener un número impar de puntos")
        return value

    def validate(self, data):
        if not 0 <= data['monitor_floor'] < data['monitor_peak'] <= 1:
            raise serializers.ValidationError({
                'monitor_floor': ["Se requiere 0 <= floor < peak <= 1"]
            })
        return data


class BoundSerializer(StrictSerializer):
    delta_prime = serializers.FloatField(default=lambda: defecto('BOUND_DELTA_PRIME'))
    gamma = serializers.FloatField(default=lambda: defecto('BOUND_GAMMA'))
    c = serializers.FloatField(default=1.0)
    loss_bound = serializers.FloatField(required=False)
    n_batches = serializers.IntegerField(min_value=2, default=lambda: defecto('BOUND_BATCHES'))
    mask_mode = serializers.ChoiceField(choices=(MASK_FULL, MASK_SUBNETWORK), default=MASK_FULL)
    exclude_undefined = serializers.BooleanField(default=False)

    def validate_gamma(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError("γ debe estar en (0, 1)")
        return value

    def validate_delta_prime(self, value):
        if value <= 0:
            raise serializers.ValidationError("δ′ debe ser positivo")
        return value


# ==============================================================================
# CONFIGURACIÓN COMPLETA
# ==============================================================================

class RunConfigSerializer(StrictSerializer):
    OPCIONALES = ('network', 'sampler', 'evaluation', 'bound')

    seed = serializers.IntegerField(min_value=0, default=0)
    method = serializers.ChoiceField(choices=list(TRAINERS), default='fp-better')
    ablation = serializers.ChoiceField(choices=ABLATIONS, default=ABLATION_BOTH)
    output_dir = serializers.CharField(default='runs/default')
    dataset = DatasetSerializer()
    network = NetworkSerializer()
    attack = AttackSerializer()
    sampler = SamplerSerializer()
    train = TrainSerializer()
    evaluation = EvaluationSerializer()
    bound = BoundSerializer()

    def to_internal_value(self, data):
        if isinstance(data, dict):
            data = dict(data)
            for seccion in self.OPCIONALES:
                data.setdefault(seccion, {})
        return super().to_internal_value(data)


def section_fields():
    """Mapa sección -> nombres de campo; las claves de primer nivel van bajo None."""
    raiz = RunConfigSerializer()
    mapa = {None: set()}
    for nombre, campo in raiz.fields.items():
        if isinstance(campo, serializers.Serializer):
            mapa[nombre] = set(campo.fields)
        else:
            mapa[None].add(nombre)
    return mapa


# ==============================================================================
# REPORTES
# ==============================================================================

class EpochRecordSerializer(serializers.Serializer):
    epoch = serializers.IntegerField()
    lr = serializers.FloatField()
    p_min = serializers.FloatField()
    expected_blocks = serializers.FloatField()
    train_adv_loss = serializers.FloatField()
    executed_fraction = serializers.FloatField()
    clean_accuracy = serializers.FloatField(allow_null=True)
    robust_accuracy = serializers.FloatField(allow_null=True)
    monitor_accuracy = serializers.FloatField(allow_null=True)
