import json
import math
from collections import OrderedDict

import numpy as np
from django.test import SimpleTestCase

from robustez.attack import INIT_UNIFORM, AttackConfig
from robustez.bound import (
    CONSTANT_LABEL,
    MASK_SUBNETWORK,
    BoundInputs,
    bound_report,
    compute_bound,
    epsilon0,
    estimate_laplace_b,
    generalization_bound,
    intensity_from_gradients,
    laplace_scale,
    layerwise_intensity,
    privacy_epsilon,
)
from robustez.datasets import DatasetHandle, make_blobs
from robustez.exceptions import InvalidArgumentError, UndefinedRatioError
from robustez.model import branch_parameter_names, build_network, layer_of, resmlp
from robustez.rng import generator

CENTERS = [[1.0, 1.0], [-1.0, -1.0]]


class FormulasTest(SimpleTestCase):

    def test_epsilon0_a_mano(self):
        self.assertAlmostEqual(epsilon0([2, 2], 1, 100, 0.1), 0.8, delta=1e-12)
        self.assertAlmostEqual(epsilon0([1, 1, 1], 3, 100, 0.5), 2 * 3 / 50, delta=1e-12)

    def test_factor_uno_es_neutro(self):
        self.assertEqual(epsilon0([2.5, 1.0, 0.7], 1.3, 50, 0.2), epsilon0([2.5, 0.7], 1.3, 50, 0.2))

    def test_quitar_factores_mayores_a_uno_no_aumenta(self):
        ratios = [1.5, 0.8, 2.0, 1.1]
        full = epsilon0(ratios, 1.0, 10, 1.0)
        for i, r in enumerate(ratios):
            if r >= 1:
                self.assertLessEqual(epsilon0(ratios[:i] + ratios[i + 1:], 1.0, 10, 1.0), full)

    def test_epsilon0_dominio(self):
        for n, b in ((0, 0.1), (10, 0.0), (-1, 1.0)):
            with self.assertRaises(InvalidArgumentError):
                epsilon0([1.0], 1.0, n, b)

    def test_razon_indefinida(self):
        with self.assertRaises(UndefinedRatioError):
            epsilon0([2.0, None], 1, 100, 0.1)
        self.assertAlmostEqual(epsilon0([2.0, None], 1, 100, 0.1, exclude_undefined=True), 0.4, delta=1e-12)

    def test_privacidad_de_referencia(self):
        epsilon, delta = privacy_epsilon(0.01, 100, 1000, 1e-3)
        expected = 0.01 * math.sqrt(200 * math.log(1e6)) + 100 * 0.01 * math.expm1(0.01)
        self.assertAlmostEqual(epsilon, 0.5357, delta=1e-3)
        self.assertAlmostEqual(epsilon, expected, delta=1e-12)
        self.assertEqual(delta, 1e-3 / 1000)

    def test_sin_fuga(self):
        self.assertEqual(privacy_epsilon(0.0, 50, 200, 1e-3), (0.0, 1e-3 / 200))

    def test_privacidad_creciente_en_epsilon0(self):
        values = [privacy_epsilon(e, 100, 1000, 1e-3)[0] for e in np.linspace(0.001, 0.1, 10)]
        self.assertTrue(all(a < b for a, b in zip(values, values[1:])))

    def test_privacidad_dominio(self):
        with self.assertRaises(InvalidArgumentError):
            privacy_epsilon(0.01, 0, 1000, 1e-3)
        with self.assertRaises(InvalidArgumentError):
            privacy_epsilon(0.01, 10, 1000, 0.0)

    def test_cota_a_mano(self):
        self.assertAlmostEqual(generalization_bound(0.0, 0.0, 1.0, 100, math.exp(-1)), 0.1, delta=1e-12)
        self.assertAlmostEqual(generalization_bound(0.0, 0.0, 5.0, 400, 0.05, c=2.0),
                               2 * math.sqrt(math.log(20) / 400), delta=1e-12)

    def test_cota_monotona(self):
        grid = np.linspace(0.0, 2.0, 9)
        by_eps = [generalization_bound(e, 1e-6, 1.0, 1000, 0.05) for e in grid]
        by_delta = [generalization_bound(0.5, d, 1.0, 1000, 0.05) for d in np.linspace(0, 1, 9)]
        by_m = [generalization_bound(0.5, 1e-6, m, 1000, 0.05) for m in grid]
        for values in (by_eps, by_delta, by_m):
            self.assertTrue(all(a <= b for a, b in zip(values, values[1:])))
        sqrt_terms = [generalization_bound(0.0, 0.0, 1.0, n, 0.05) for n in (10, 100, 1000, 10000)]
        self.assertTrue(all(a > b for a, b in zip(sqrt_terms, sqrt_terms[1:])))

    def test_compute_bound_encadena(self):
        inputs = BoundInputs(t=100, n=1000, delta_prime=1e-3, b=0.1, l_erm=0.05,
                             ratios=OrderedDict(a=1.0, b=1.0), m=2.0, gamma=0.05)
        report = compute_bound(inputs)
        self.assertAlmostEqual(report.epsilon0, 2 * 0.05 / 100, delta=1e-15)
        self.assertEqual(report.delta, 1e-3 / 1000)
        self.assertEqual(report.bound, generalization_bound(report.epsilon, report.delta, 2.0, 1000, 0.05))
        self.assertEqual(report.constant_label, CONSTANT_LABEL)


class IntensidadTest(SimpleTestCase):

    LAYERS = OrderedDict(a=['a.w'], b=['b.w'])

    def test_razones_a_mano(self):
        clean = [{'a.w': np.array([3.0, 4.0]), 'b.w': np.array([1.0])},
                 {'a.w': np.array([0.0, 1.0]), 'b.w': np.array([2.0])}]
        adversarial = [{'a.w': np.array([6.0, 8.0]), 'b.w': np.array([1.0])},
                       {'a.w': np.array([0.0, 2.0]), 'b.w': np.array([4.0])}]
        result = intensity_from_gradients(self.LAYERS, clean, adversarial)
        self.assertEqual(dict(result.ratios), {'a': 2.0, 'b': 2.0})
        self.assertAlmostEqual(result.intensity, math.sqrt(101 / 26), delta=1e-12)
        self.assertAlmostEqual(result.l_erm, math.sqrt(26), delta=1e-12)
        self.assertEqual(result.scanned_batches, 2)

    def test_capa_nunca_activa_vale_uno(self):
        clean = [{'a.w': np.array([1.0]), 'b.w': np.array([1.0])}]
        adversarial = [{'a.w': np.array([3.0]), 'b.w': np.array([7.0])}]
        result = intensity_from_gradients(self.LAYERS, clean, adversarial, active=[{'a'}])
        self.assertEqual(dict(result.ratios), {'a': 3.0, 'b': 1.0})

    def test_denominador_nulo(self):
        clean = [{'a.w': np.array([0.0]), 'b.w': np.array([1.0])}]
        adversarial = [{'a.w': np.array([1.0]), 'b.w': np.array([1.0])}]
        result = intensity_from_gradients(self.LAYERS, clean, adversarial)
        self.assertIsNone(result.ratios['a'])
        self.assertEqual(result.undefined_layers, ['a'])

    def test_gradiente_limpio_nulo(self):
        zero = [{'a.w': np.zeros(1), 'b.w': np.zeros(1)}]
        with self.assertRaises(UndefinedRatioError):
            intensity_from_gradients(self.LAYERS, zero, zero)

    def test_epsilon_cero_da_uno(self):
        spec = resmlp((2,), 2, 2, 8)
        params = build_network(spec, 2)
        dataset = make_blobs(20, 2, CENTERS, 0.3, 0)
        result = layerwise_intensity(params, spec, dataset, AttackConfig(0.0, 1.0, 3, INIT_UNIFORM), batch_size=10)
        self.assertEqual(set(result.ratios.values()), {1.0})
        self.assertEqual(result.intensity, 1.0)
        self.assertEqual(list(result.ratios), list(params.layers()))

    def test_subred_con_bloque_siempre_descartado(self):
        spec = resmlp((2,), 2, 2, 8)
        params = build_network(spec, 2)
        dataset = make_blobs(20, 2, CENTERS, 0.3, 0)
        result = layerwise_intensity(params, spec, dataset, AttackConfig(0.2, 0.1, 2, INIT_UNIFORM),
                                     mask_mode=MASK_SUBNETWORK, probabilities=np.array([0.0, 1.0]), batch_size=10)
        for name in branch_parameter_names(spec, 0):
            self.assertEqual(result.ratios[layer_of(name)], 1.0)
            self.assertIsNone(result.numerators[layer_of(name)])

    def test_subred_sin_probabilidades(self):
        spec = resmlp((2,), 2, 2, 8)
        with self.assertRaises(InvalidArgumentError):
            layerwise_intensity(build_network(spec, 0), spec, make_blobs(5, 2, CENTERS, 0.3, 0),
                                AttackConfig(0.1, 0.1), mask_mode=MASK_SUBNETWORK)


class LaplaceTest(SimpleTestCase):

    def test_recupera_escala_sintetica(self):
        samples = generator(0, 'bound', 9).laplace(0.0, 0.5, size=10000)
        self.assertAlmostEqual(laplace_scale(samples, 0.0), 0.5, delta=0.05)

    def test_equivariante_a_escala(self):
        samples = generator(1, 'bound', 9).normal(size=(50, 6))
        center = samples.mean(axis=0)
        self.assertAlmostEqual(laplace_scale(2 * samples, 2 * center), 2 * laplace_scale(samples, center),
                               delta=1e-12)

    def test_gradientes_identicos_dan_cero(self):
        spec = resmlp((2,), 2, 2, 8)
        params = build_network(spec, 0)
        dataset = DatasetHandle(np.tile([0.5, -0.2], (32, 1)), np.zeros(32, dtype=np.int64), 2)
        b = estimate_laplace_b(params, spec, dataset, 8, 3, AttackConfig(0.1, 0.025, 2))
        self.assertAlmostEqual(b, 0.0, delta=1e-12)

    def test_lotes_insuficientes(self):
        spec = resmlp((2,), 2, 2, 8)
        params = build_network(spec, 0)
        dataset = make_blobs(8, 2, CENTERS, 0.3, 0)
        with self.assertRaises(InvalidArgumentError):
            estimate_laplace_b(params, spec, dataset, 8, 1, AttackConfig(0.1, 0.025))
        with self.assertRaises(InvalidArgumentError):
            estimate_laplace_b(params, spec, dataset, 8, 3, AttackConfig(0.1, 0.025))


class ReporteTest(SimpleTestCase):

    def test_reporte_completo(self):
        spec = resmlp((2,), 2, 2, 8)
        params = build_network(spec, 5)
        train = make_blobs(40, 2, CENTERS, 0.3, 0)
        heldout = make_blobs(20, 2, CENTERS, 0.3, 0, split=1)
        report = bound_report(params, spec, train, AttackConfig(0.2, 0.05, 3, INIT_UNIFORM), iterations=50,
                              batch_size=16, n_batches=3, heldout=heldout, seed=4)
        self.assertEqual(report.delta, 1e-3 / 80)
        self.assertGreaterEqual(report.epsilon, 0.0)
        self.assertEqual(report.inputs.n, 80)
        self.assertEqual(report.inputs.tau, 16)
        self.assertIsNotNone(report.heldout_risk)
        data = report.to_dict()
        json.dumps(data)
        self.assertEqual(set(data['inputs']['ratios']), set(params.layers()))
        self.assertEqual(data['constant_label'], CONSTANT_LABEL)
