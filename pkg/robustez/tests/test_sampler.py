import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st

from robustez.exceptions import InvalidArgumentError
from robustez.model import effective_block_count
from robustez.rng import generator
from robustez.sampler import (
    LINEAR,
    UNIFORM,
    SamplerSchedule,
    TemporalController,
    TemporalState,
    expected_effective_blocks,
    sample_mask,
    schedule_for_ablation,
    spatial_probabilities,
    temporal_update,
)

LINEAL_8 = (0.9375, 0.875, 0.8125, 0.75, 0.6875, 0.625, 0.5625, 0.5)


class EsquemaEspacialTest(SimpleTestCase):

    def test_lineal_ocho_bloques(self):
        p = spatial_probabilities(8, 0.5, LINEAR)
        np.testing.assert_allclose(p, LINEAL_8, rtol=0, atol=1e-12)
        self.assertAlmostEqual(expected_effective_blocks(p), 5.75, delta=1e-12)

    def test_uniforme_y_degenerado(self):
        self.assertEqual(expected_effective_blocks(spatial_probabilities(8, 0.5, UNIFORM)), 4.0)
        np.testing.assert_array_equal(spatial_probabilities(8, 1.0), np.ones(8))
        self.assertEqual(expected_effective_blocks(np.ones(8)), 8)

    def test_p_min_fuera_de_rango(self):
        for p_min in (0.0, -0.1, 1.01):
            with self.assertRaises(InvalidArgumentError):
                spatial_probabilities(4, p_min)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 64), st.floats(0.01, 1.0))
    def test_lineal_es_afin(self, blocks, p_min):
        p = spatial_probabilities(blocks, p_min)
        self.assertAlmostEqual(p[-1], p_min, delta=1e-12)
        np.testing.assert_allclose(-np.diff(p), (1 - p_min) / blocks, rtol=0, atol=1e-12)
        self.assertTrue(np.all((p > 0) & (p <= 1)))


class MuestreoTest(SimpleTestCase):

    def test_extremos(self):
        rng = generator(0, 'masks')
        self.assertTrue(sample_mask(np.ones(5), rng).is_full)
        self.assertEqual(effective_block_count(sample_mask(np.zeros(5), rng)), 0)

    def test_estadisticas_de_veinte_mil_mascaras(self):
        draws = 20000
        p = np.array(LINEAL_8)
        rng = generator(11, 'masks')
        bits = np.array([sample_mask(p, rng).bits for _ in range(draws)])
        bound = 4 * np.sqrt(p * (1 - p) / draws)
        self.assertTrue(np.all(np.abs(bits.mean(axis=0) - p) <= bound), bits.mean(axis=0))
        mean_blocks = bits.sum(axis=1).mean()
        spread = 4 * np.sqrt(np.sum(p * (1 - p)) / draws)
        self.assertLessEqual(abs(mean_blocks - p.sum()), spread)

    def test_determinista_con_el_mismo_flujo(self):
        p = np.full(6, 0.5)
        a = [sample_mask(p, generator(4, 'masks', 2)) for _ in range(3)]
        b = [sample_mask(p, generator(4, 'masks', 2)) for _ in range(3)]
        self.assertEqual(a, b)


class ControladorTemporalTest(SimpleTestCase):

    def test_empate_conserva(self):
        self.assertEqual(temporal_update(TemporalState(10.0, 10.0), 0.5, 0.04), 0.5)

    def test_descenso_incrementa(self):
        self.assertEqual(temporal_update(TemporalState(10.0, 9.5), 0.5, 0.04), 0.54)

    def test_tope_en_uno(self):
        self.assertEqual(temporal_update(TemporalState(10.0, 9.0), 0.98, 0.04), 1.0)

    def test_sin_periodo_previo(self):
        self.assertEqual(temporal_update(TemporalState(None, 3.0), 0.5, 0.04), 0.5)

    def _trayectoria(self, epoch_losses, p_min=0.5, mu=0.04):
        controller = TemporalController(SamplerSchedule(4, LINEAR, p_min, mu))
        used = []
        for losses in epoch_losses:
            used.append(controller.p_min)
            for loss in losses:
                controller.record(loss)
            controller.end_period()
        return used, controller

    def test_trayectoria_con_perdidas_decrecientes(self):
        used, _ = self._trayectoria([[4.0, 4.0], [3.0, 3.0], [2.0, 2.0], [1.0, 1.0]])
        self.assertEqual(used, [0.5, 0.5, 0.5 + 0.04, 0.5 + 0.04 + 0.04])

    def test_trayectoria_mixta(self):
        used, controller = self._trayectoria([[2.0], [3.0], [3.0], [1.0], [0.5]])
        # épocas: sin comparación, sube, empate, baja, baja
        self.assertEqual(used, [0.5, 0.5, 0.5, 0.5, 0.5 + 0.04])
        self.assertEqual(controller.trajectory[-1], 0.5 + 0.04 + 0.04)

    def test_mu_cero_es_identidad(self):
        used, _ = self._trayectoria([[5.0], [4.0], [3.0]], mu=0.0)
        self.assertEqual(used, [0.5, 0.5, 0.5])

    def test_acumulador_suma_en_orden(self):
        controller = TemporalController(SamplerSchedule(2))
        losses = [0.1, 0.2, 0.3]
        for loss in losses:
            controller.record(loss)
        self.assertEqual(controller.state.l_cur, (0.1 + 0.2) + 0.3)
        self.assertEqual(controller.state.period, 3)

    def test_serializacion(self):
        _, controller = self._trayectoria([[2.0], [1.0]])
        restored = TemporalController.from_dict(controller.to_dict())
        self.assertEqual(restored.to_dict(), controller.to_dict())

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 100), min_size=1, max_size=30))
    def test_trayectoria_monotona_con_pasos_de_mu(self, sums):
        used, controller = self._trayectoria([[s] for s in sums])
        steps = np.diff(controller.trajectory)
        self.assertTrue(np.all(steps >= 0))
        self.assertLessEqual(controller.trajectory[-1], 1.0)
        for step, before in zip(steps, controller.trajectory):
            self.assertTrue(step == 0 or abs(step - min(0.04, 1.0 - before)) < 1e-12)


class AblacionTest(SimpleTestCase):

    def test_mapeo(self):
        spatial = schedule_for_ablation(4, 'spatial', 0.5, 0.04)
        temporal = schedule_for_ablation(4, 'temporal', 0.5, 0.04)
        both = schedule_for_ablation(4, 'both', 0.5, 0.04)
        self.assertEqual((spatial.mode, spatial.mu), (LINEAR, 0.0))
        self.assertEqual((temporal.mode, temporal.mu), (UNIFORM, 0.04))
        self.assertEqual((both.mode, both.mu), (LINEAR, 0.04))
        with self.assertRaises(InvalidArgumentError):
            schedule_for_ablation(4, 'nada', 0.5, 0.04)
