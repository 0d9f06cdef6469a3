import json
import tempfile
from pathlib import Path

from django.test import SimpleTestCase, override_settings
from django.conf import settings

from robustez.config import (
    RESOLVED_NAME,
    apply_overrides,
    load_config_file,
    load_run_config,
    parse_override,
    resolve,
    write_resolved,
)
from robustez.exceptions import InvalidConfigError, InvalidOverrideError, MissingConfigError
from robustez.sampler import LINEAR, UNIFORM

BASE = {
    'seed': 1,
    'method': 'fp-better',
    'output_dir': 'runs/prueba',
    'dataset': {
        'kind': 'blobs', 'n_per_class': 10, 'dims': 2,
        'centers': [[1.0, 1.0], [-1.0, -1.0]], 'sigma': 0.1,
    },
    'attack': {'epsilon': 0.3},
    'train': {'epochs': 2},
}


def with_changes(section=None, **values):
    data = json.loads(json.dumps(BASE))
    target = data.setdefault(section, {}) if section else data
    target.update(values)
    return data


class ResolucionTest(SimpleTestCase):

    def test_valores_por_defecto(self):
        run = resolve(BASE)
        self.assertEqual(run.ablation, 'both')
        self.assertEqual(run.network['preset'], 'resmlp-4')
        self.assertEqual((run.sampler['p_min'], run.sampler['mu']), (0.5, 0.04))
        self.assertEqual(run.train['lr'], settings.ROBUSTEZ['LR'])
        self.assertEqual(run.train['batch_size'], 128)
        self.assertEqual(run.evaluation['pgd_steps'], 10)
        self.assertEqual(run.evaluation['attacks'], ['fgsm', 'pgd10', 'pgd20', 'pgd50'])
        self.assertEqual(run.bound['gamma'], 0.05)
        self.assertEqual(run.dataset['eval_n_per_class'], 10)

    @override_settings(ROBUSTEZ={**settings.ROBUSTEZ, 'P_MIN': 0.7, 'LR': 0.2})
    def test_defectos_desde_settings(self):
        run = resolve(BASE)
        self.assertEqual(run.sampler['p_min'], 0.7)
        self.assertEqual(run.train['lr'], 0.2)

    def test_clave_desconocida(self):
        for data in (with_changes(extra=1), with_changes('train', learning_rate=0.1),
                     with_changes('dataset', color='rojo')):
            with self.assertRaises(InvalidConfigError) as ctx:
                resolve(data)
            self.assertIn('Clave desconocida', json.dumps(ctx.exception.errores, ensure_ascii=False))

    def test_campos_obligatorios_por_tipo(self):
        data = with_changes()
        data['dataset'] = {'kind': 'idx', 'images': 'x'}
        with self.assertRaises(InvalidConfigError) as ctx:
            resolve(data)
        self.assertIn('labels', ctx.exception.errores['dataset'])

    def test_valores_fuera_de_rango(self):
        for data in (with_changes('sampler', p_min=0.0), with_changes('train', lr=-1),
                     with_changes('evaluation', landscape_grid=4), with_changes('evaluation', attacks=['cw']),
                     with_changes('network', preset='resmlp-4', widths=[4])):
            with self.assertRaises(InvalidConfigError):
                resolve(data)

    def test_ataques_derivados(self):
        run = resolve(BASE)
        train, _ = run.datasets()
        self.assertEqual(run.train_attack(train).alpha, 1.25 * 0.3)
        pgd = run.pgd_attack(train)
        self.assertEqual((pgd.alpha, pgd.steps, pgd.init), (0.3 / 4, 10, 'uniform'))
        self.assertIsNone(pgd.clip)
        self.assertEqual(run.fgsm_attack(train).alpha, 0.3)
        self.assertEqual(list(run.eval_attacks(train, ['fgsm', 'pgd3'])), ['fgsm', 'pgd3'])

    def test_recorte_explicito(self):
        run = resolve(with_changes('attack', epsilon=0.1, clip=[-2.0, 2.0]))
        train, _ = run.datasets()
        self.assertEqual(run.train_attack(train).clip, (-2.0, 2.0))

    def test_ablacion_a_esquema(self):
        self.assertEqual(resolve(with_changes(ablation='temporal')).schedule(4).mode, UNIFORM)
        spatial = resolve(with_changes(ablation='spatial')).schedule(4)
        self.assertEqual((spatial.mode, spatial.mu), (LINEAR, 0.0))
        forced = resolve(with_changes('sampler', mode='uniform')).schedule(4)
        self.assertEqual((forced.mode, forced.mu), (UNIFORM, 0.04))

    def test_configuracion_de_entrenamiento(self):
        run = resolve(with_changes('train', epochs=110, decay_points=[105 / 110, 100 / 110]))
        train, _ = run.datasets()
        config = run.train_config(train, run.network_spec(train))
        self.assertEqual(config.decay_points, (100 / 110, 105 / 110))
        self.assertEqual(config.network, 'resmlp-4')
        self.assertEqual(run.iterations(train), 110 * 1)

    def test_red_a_medida(self):
        run = resolve(with_changes('network', preset='resmlp-4', num_blocks=3, width=5))
        train, _ = run.datasets()
        spec = run.network_spec(train)
        self.assertEqual(spec.num_blocks, 3)


class SobrescriturasTest(SimpleTestCase):

    def test_interpretacion(self):
        self.assertEqual(parse_override('train.lr=0.05'), (['train', 'lr'], 0.05))
        self.assertEqual(parse_override('method=fgsm-rs'), (['method'], 'fgsm-rs'))
        self.assertEqual(parse_override('evaluation.attacks=["fgsm"]'), (['evaluation', 'attacks'], ['fgsm']))
        for bad in ('train.lr', '=3', 'train..lr=1'):
            with self.assertRaises(InvalidOverrideError):
                parse_override(bad)

    def test_la_ultima_gana(self):
        data = apply_overrides(BASE, ['train.lr=0.05', 'train.lr=0.01', 'sampler.mu=0'])
        self.assertEqual(data['train']['lr'], 0.01)
        self.assertEqual(data['sampler'], {'mu': 0})
        self.assertNotIn('lr', BASE['train'])

    def test_clave_desconocida(self):
        for bad in ('train.learning_rate=1', 'nada=1', 'train.lr.x=1'):
            with self.assertRaises(InvalidOverrideError):
                apply_overrides(BASE, [bad])


class ArchivoTest(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_archivo_inexistente(self):
        with self.assertRaises(MissingConfigError):
            load_config_file(self.dir / 'no.toml')

    def test_formato_no_soportado(self):
        path = self.dir / 'run.yaml'
        path.write_text('seed: 1')
        with self.assertRaises(InvalidConfigError):
            load_config_file(path)

    def test_toml_invalido(self):
        path = self.dir / 'run.toml'
        path.write_text('seed = ')
        with self.assertRaises(InvalidConfigError):
            load_config_file(path)

    def test_toml_del_repositorio(self):
        path = Path(settings.BASE_DIR) / 'configs' / 'blobs_resmlp4.toml'
        run = load_run_config(path)
        self.assertEqual((run.method, run.attack['epsilon'], run.train['epochs']), ('fp-better', 0.3, 30))

    def test_banderas_ganan_a_las_sobrescrituras(self):
        path = self.dir / 'run.json'
        path.write_text(json.dumps(BASE))
        run = load_run_config(path, ['seed=5', 'method="standard"'], seed=9, output_dir=str(self.dir / 'x'))
        self.assertEqual((run.seed, run.method, run.output_dir), (9, 'standard', str(self.dir / 'x')))

    def test_eco_de_la_configuracion_resuelta(self):
        run = resolve(BASE)
        path = write_resolved(run, self.dir / 'salida')
        self.assertEqual(path.name, RESOLVED_NAME)
        self.assertEqual(json.loads(path.read_text()), run.to_dict())
        self.assertEqual(resolve(json.loads(path.read_text())), run)
