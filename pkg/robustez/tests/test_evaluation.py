import csv
import math
import tempfile
from pathlib import Path
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from robustez.attack import INIT_UNIFORM, AttackConfig, fgsm_config
from robustez.datasets import DatasetHandle, make_blobs
from robustez.evaluation import (
    accuracy,
    empirical_risk,
    evaluate,
    grid_coefficients,
    landscape_grid,
    loss_landscape,
    monitor_subset,
    overfitting_monitor,
    per_example_losses,
    robust_accuracy,
)
from robustez.exceptions import InvalidArgumentError
from robustez.model import build_network, forward, resmlp
from robustez.rng import generator

CENTERS = [[1.0, 1.0], [-1.0, -1.0]]


def constant_network(spec):
    params = build_network(spec, 0)
    return params.replace({
        'head.weight': np.zeros_like(params['head.weight']),
        'head.bias': np.zeros_like(params['head.bias']),
    })


class PrecisionTest(SimpleTestCase):

    def setUp(self):
        self.spec = resmlp((2,), 2, 2, 8)
        self.dataset = make_blobs(20, 2, CENTERS, 0.1, 0)

    def test_modelo_constante_acierta_la_mitad(self):
        params = constant_network(self.spec)
        self.assertEqual(accuracy(params, self.spec, self.dataset), 0.5)
        attack = AttackConfig(0.3, 0.1, 3, INIT_UNIFORM)
        self.assertEqual(robust_accuracy(params, self.spec, self.dataset, attack, generator(0, 'eval')), 0.5)

    def test_epsilon_cero_robusta_igual_a_limpia(self):
        params = build_network(self.spec, 4)
        attacks = {
            'fgsm': fgsm_config(0.0),
            'pgd3': AttackConfig(0.0, 1.0, 3, INIT_UNIFORM),
        }
        report = evaluate(params, self.spec, self.dataset, attacks, seed=2, epoch=7)
        self.assertEqual(report.robust_accuracy, {'fgsm': report.clean_accuracy, 'pgd3': report.clean_accuracy})

    def test_riesgo_empirico_es_la_media(self):
        params = build_network(self.spec, 0)
        with mock.patch('robustez.evaluation.per_example_losses', return_value=np.array([0.2, 0.6])):
            self.assertAlmostEqual(empirical_risk(params, self.spec, self.dataset), 0.4, delta=1e-12)

    def test_riesgo_de_conjunto_duplicado(self):
        params = build_network(self.spec, 1)
        doubled = DatasetHandle(np.concatenate([self.dataset.examples] * 2),
                                np.concatenate([self.dataset.labels] * 2), 2)
        self.assertAlmostEqual(empirical_risk(params, self.spec, doubled),
                               empirical_risk(params, self.spec, self.dataset), delta=1e-12)

    def test_riesgo_del_modelo_constante(self):
        params = constant_network(self.spec)
        self.assertAlmostEqual(empirical_risk(params, self.spec, self.dataset), math.log(2), delta=1e-12)

    def test_riesgo_invariante_a_permutaciones(self):
        params = build_network(self.spec, 3)
        dataset = make_blobs(200, 2, CENTERS, 0.5, 1)
        losses = per_example_losses(params, self.spec, dataset)
        oracle = math.fsum(float(v) for v in losses) / len(dataset)
        for seed in range(3):
            order = np.random.default_rng(seed).permutation(len(dataset))
            permuted = dataset.take(order)
            self.assertAlmostEqual(empirical_risk(params, self.spec, permuted), oracle, delta=1e-12)
        self.assertAlmostEqual(empirical_risk(params, self.spec, dataset), oracle, delta=1e-12)

    def test_pgd50_no_supera_a_pgd10(self):
        params = build_network(self.spec, 4)
        dataset = make_blobs(500, 2, CENTERS, 0.5, 2)
        self.assertGreaterEqual(len(dataset), 1000)
        pgd10 = robust_accuracy(params, self.spec, dataset, AttackConfig(0.5, 0.125, 10, INIT_UNIFORM),
                                generator(0, 'eval', 1, 0))
        pgd50 = robust_accuracy(params, self.spec, dataset, AttackConfig(0.5, 0.125, 50, INIT_UNIFORM),
                                generator(0, 'eval', 1, 1))
        self.assertLessEqual(pgd50, pgd10 + 0.01)

    def test_reporte_csv(self):
        params = build_network(self.spec, 0)
        report = evaluate(params, self.spec, self.dataset, {'fgsm': fgsm_config(0.1)}, epoch=3)
        with tempfile.TemporaryDirectory() as tmp:
            path = report.to_csv(Path(tmp) / 'eval.csv')
            with open(path, newline='') as f:
                rows = list(csv.reader(f))
        self.assertEqual(rows[0], ['epoch', 'clean_accuracy', 'empirical_risk', 'robust_fgsm'])
        self.assertEqual(rows[1][0], '3')
        self.assertEqual(float(rows[1][1]), report.clean_accuracy)


class MonitorTest(SimpleTestCase):

    def test_colapso_detectado(self):
        self.assertEqual(overfitting_monitor([0.40, 0.42, 0.41, 0.02, 0.01]), 3)

    def test_sin_colapso(self):
        self.assertIsNone(overfitting_monitor([0.1, 0.2, 0.3, 0.4]))
        self.assertIsNone(overfitting_monitor([0.0, 0.0, 0.0]))
        self.assertIsNone(overfitting_monitor([0.15, 0.01]))

    def test_historial_vacio(self):
        with self.assertRaises(InvalidArgumentError):
            overfitting_monitor([])

    def test_subconjunto_fijo(self):
        dataset = make_blobs(30, 2, CENTERS, 0.1, 0)
        a = monitor_subset(dataset, 10, 5)
        b = monitor_subset(dataset, 10, 5)
        self.assertEqual(len(a), 10)
        np.testing.assert_array_equal(a.examples, b.examples)
        self.assertIs(monitor_subset(dataset, 100, 5), dataset)


class PaisajeTest(SimpleTestCase):

    def setUp(self):
        self.spec = resmlp((2,), 2, 2, 8)
        self.params = build_network(self.spec, 9)
        self.example = np.array([0.7, 1.1])

    def test_centro_igual_a_la_perdida_limpia(self):
        landscape = loss_landscape(self.params, self.spec, self.example, 0, 0.3, 5, generator(0, 'eval'), steps=5)
        clean = forward(self.params, self.spec, self.example[None], labels=np.array([0])).loss_value
        self.assertEqual(landscape.center, clean)
        self.assertEqual(landscape.losses.shape, (5, 5))

    def test_direcciones_con_norma_epsilon(self):
        landscape = loss_landscape(self.params, self.spec, self.example, 1, 0.3, 3, generator(0, 'eval'), steps=5)
        np.testing.assert_allclose(np.abs(landscape.rademacher_direction), 0.3)
        self.assertAlmostEqual(np.max(np.abs(landscape.adversarial_direction)), 0.3, delta=1e-12)

    def test_malla_sobre_funcion_lineal(self):
        grid = landscape_grid(lambda x: float(x.sum()), np.zeros(2), np.array([0.5, 0.0]),
                              np.array([0.0, 0.5]), 0.5, 3)
        np.testing.assert_allclose(grid.losses, [[-1.0, -0.5, 0.0], [-0.5, 0.0, 0.5], [0.0, 0.5, 1.0]])

    def test_coeficientes(self):
        np.testing.assert_allclose(grid_coefficients(0.2, 5), [-0.2, -0.1, 0.0, 0.1, 0.2])
        for bad in (2, 4, 1):
            with self.assertRaises(InvalidArgumentError):
                grid_coefficients(0.2, bad)

    def test_epsilon_cero_invalido(self):
        with self.assertRaises(InvalidArgumentError):
            loss_landscape(self.params, self.spec, self.example, 0, 0.0, 3, generator(0, 'eval'))

    def test_csv(self):
        landscape = loss_landscape(self.params, self.spec, self.example, 0, 0.3, 3, generator(0, 'eval'), steps=2)
        with tempfile.TemporaryDirectory() as tmp:
            path = landscape.to_csv(Path(tmp) / 'landscape.csv')
            rows = path.read_text().splitlines()
        self.assertEqual(len(rows), 4)
        self.assertTrue(rows[0].startswith('adv\\rad,'))
        self.assertEqual(len(rows[1].split(',')), 4)
