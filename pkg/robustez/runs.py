"""
Operaciones de cada subcomando sobre un RunConfig ya resuelto: entrenar,
evaluar, comparar, cota, paisaje y exportación de curvas. Los comandos de
gestión sólo interpretan argumentos y delegan aquí.
"""
import csv
import io
import json
import logging
from collections import OrderedDict
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bound import MASK_SUBNETWORK, bound_report
from .checkpoints import load_checkpoint, save_checkpoint
from .config import write_resolved
from .evaluation import evaluate, loss_landscape
from .exceptions import InvalidArgumentError, MissingCheckpointError
from .rng import generator
from .sampler import TemporalController
from .serializers import EpochRecordSerializer
from .trainer import TrainState, make_trainer

logger = logging.getLogger(__name__)

BEST_NAME = 'best.ckpt'
LAST_NAME = 'last.ckpt'
METRICS_NAME = 'metrics.jsonl'
TIMING_NAME = 'timing.jsonl'
SUMMARY_NAME = 'summary.json'
CURVE_COLUMNS = [
    'run', 'epoch', 'lr', 'p_min', 'expected_blocks', 'train_adv_loss', 'executed_fraction',
    'clean_accuracy', 'robust_accuracy', 'monitor_accuracy',
]
COMPARE_COLUMNS = [
    'method', 'seeds',
    'best_clean', 'best_fgsm', 'best_pgd10',
    'last_clean', 'last_fgsm', 'last_pgd10',
    'collapsed',
]


def _write_json(path, data):
    path.write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + '\n', encoding='utf-8')
    return path


def _write_jsonl(path, rows):
    with open(path, 'w', encoding='utf-8') as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + '\n')
    return path


def _write_csv(path, header, rows):
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def render_table(header, rows):
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


# ==============================================================================
# ENTRENAMIENTO
# ==============================================================================

def train_run(run, out=None, resume=False, on_iteration=None):
    """
    Entrena el método del RunConfig y escribe en `out`: config resuelta,
    best/last.ckpt, metrics.jsonl (determinista), timing.jsonl y summary.json.
    """
    out = Path(out or run.output_dir)
    write_resolved(run, out)
    train, evaluation = run.datasets()
    spec = run.network_spec(train)
    config = run.train_config(train, spec)
    trainer = make_trainer(run.method, config, spec, on_iteration)

    state = None
    if resume:
        last = load_checkpoint(out / LAST_NAME)
        best = load_checkpoint(out / BEST_NAME) if (out / BEST_NAME).is_file() else None
        state = TrainState.from_checkpoints(last, best)
        logger.info("Reanudando %s desde la época %d", run.method, state.epoch)

    logger.info("Entrenando %s (ablación %s, semilla %d) en %s", run.method, run.ablation, run.seed, out)
    pair = trainer.fit(train, evaluation, state)

    save_checkpoint(out / BEST_NAME, pair.best)
    save_checkpoint(out / LAST_NAME, pair.last)
    _write_jsonl(out / METRICS_NAME, [r.to_dict() for r in pair.history])
    _write_jsonl(out / TIMING_NAME, [{'epoch': r.epoch, 'wall_time': r.wall_time} for r in pair.history])
    trajectory = TemporalController.from_dict(pair.last.sampler).trajectory
    _write_json(out / SUMMARY_NAME, {
        'method': run.method,
        'seed': run.seed,
        'best_epoch': pair.best.epoch,
        'best_robust_accuracy': pair.best.metrics.get('robust_accuracy'),
        'last_robust_accuracy': pair.last.metrics.get('robust_accuracy'),
        'collapse_epoch': pair.collapse_epoch,
        'p_min_trajectory': trajectory,
    })
    return pair


# ==============================================================================
# EVALUACIÓN
# ==============================================================================

def checkpoint_path(run, checkpoint=None):
    path = Path(checkpoint) if checkpoint else Path(run.output_dir) / BEST_NAME
    if not path.is_file():
        raise MissingCheckpointError(f"No existe el checkpoint {path}")
    return path


def _probabilities(run, ckpt):
    if run.evaluation['scaling'] == 'none' or not ckpt.sampler:
        return None
    return TemporalController.from_dict(ckpt.sampler).probabilities


def evaluate_run(run, checkpoint=None, attacks=None, out=None):
    ckpt = load_checkpoint(checkpoint_path(run, checkpoint))
    _, dataset = run.datasets()
    report = evaluate(
        ckpt.params, ckpt.spec, dataset, run.eval_attacks(dataset, attacks), run.seed, ckpt.epoch,
        run.evaluation['scaling'], _probabilities(run, ckpt),
    )
    if out is not None:
        report.to_csv(Path(out) / 'eval.csv')
    return report


# ==============================================================================
# COMPARACIÓN
# ==============================================================================

def _mean(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def compare_runs(run, methods, seeds, out=None):
    """Una fila por método: medias sobre semillas de limpia/FGSM/PGD-10 para mejor y último."""
    if len(methods) < 2:
        raise InvalidArgumentError("compare necesita al menos dos métodos")
    out = Path(out or run.output_dir)
    rows = []
    pairs = OrderedDict()
    for method in methods:
        cells = {column: [] for column in COMPARE_COLUMNS[2:]}
        for seed in seeds:
            seeded = replace(run, method=method, seed=seed)
            pair = train_run(seeded, out / method / f'seed{seed}')
            pairs[(method, seed)] = pair
            _, dataset = seeded.datasets()
            attacks = OrderedDict([('fgsm', seeded.fgsm_attack(dataset)), ('pgd10', seeded.pgd_attack(dataset, 10))])
            for tag, ckpt in (('best', pair.best), ('last', pair.last)):
                report = evaluate(ckpt.params, ckpt.spec, dataset, attacks, seed, ckpt.epoch)
                cells[f'{tag}_clean'].append(report.clean_accuracy)
                cells[f'{tag}_fgsm'].append(report.robust_accuracy['fgsm'])
                cells[f'{tag}_pgd10'].append(report.robust_accuracy['pgd10'])
            cells['collapsed'].append(pair.collapse_epoch is not None)
        row = [method, ' '.join(str(s) for s in seeds)]
        row += [_mean(cells[c]) for c in COMPARE_COLUMNS[2:-1]]
        row.append(sum(cells['collapsed']))
        rows.append(row)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / 'compare.csv', COMPARE_COLUMNS, rows)
    return rows, pairs


# ==============================================================================
# COTA Y PAISAJE
# ==============================================================================

def bound_run(run, checkpoint=None, out=None):
    ckpt = load_checkpoint(checkpoint_path(run, checkpoint))
    train, heldout = run.datasets()
    params = run.bound
    probabilities = None
    if params['mask_mode'] == MASK_SUBNETWORK:
        if not ckpt.sampler:
            raise InvalidArgumentError("El checkpoint no guarda estado del muestreador")
        probabilities = TemporalController.from_dict(ckpt.sampler).probabilities
    report = bound_report(
        ckpt.params, ckpt.spec, train, run.pgd_attack(train), run.iterations(train),
        delta_prime=params['delta_prime'], gamma=params['gamma'], c=params['c'], m=params.get('loss_bound'),
        batch_size=run.train['batch_size'], n_batches=params['n_batches'], mask_mode=params['mask_mode'],
        probabilities=probabilities, heldout=heldout, seed=run.seed, exclude_undefined=params['exclude_undefined'],
    )
    data = report.to_dict()
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        _write_json(Path(out) / 'bound.json', data)
    return data


def landscape_run(run, checkpoint=None, index=0, out=None):
    ckpt = load_checkpoint(checkpoint_path(run, checkpoint))
    _, dataset = run.datasets()
    if not 0 <= index < len(dataset):
        raise InvalidArgumentError(f"Índice {index} fuera del conjunto de evaluación ({len(dataset)})")
    landscape = loss_landscape(
        ckpt.params, ckpt.spec, dataset.examples[index], int(dataset.labels[index]), run.epsilon,
        run.evaluation['landscape_grid'], generator(run.seed, 'eval', 2, index),
        steps=run.evaluation['landscape_steps'],
    )
    if out is not None:
        landscape.to_csv(Path(out) / 'landscape.csv')
    return landscape


# ==============================================================================
# CURVAS
# ==============================================================================

def read_metrics(path):
    path = Path(path)
    if not path.is_file():
        raise InvalidArgumentError(f"No existe el registro de métricas {path}")
    records = []
    with open(path, encoding='utf-8') as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            serializer = EpochRecordSerializer(data=json.loads(line))
            if not serializer.is_valid():
                raise InvalidArgumentError(f"{path}:{number}: registro inválido {dict(serializer.errors)}")
            records.append(serializer.validated_data)
    return records


def export_curves(metrics_paths, out):
    """Tabla larga lista para graficar: una fila por (corrida, época)."""
    rows = []
    for path in metrics_paths:
        run_name = '/'.join(Path(path).resolve().parent.parts[-2:])
        for record in read_metrics(path):
            rows.append([run_name] + [record.get(c) for c in CURVE_COLUMNS[1:]])
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out, CURVE_COLUMNS, rows)
    return rows
