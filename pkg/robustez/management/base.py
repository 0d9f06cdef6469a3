"""
Base común de los subcomandos: banderas compartidas, carga del RunConfig y
traducción de errores del motor a una línea JSON.
"""
import json
import logging

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from ..config import load_run_config
from ..exceptions import InvalidConfigError, InvalidOverrideError, MissingConfigError, RobustezError

logger = logging.getLogger('robustez')

EXIT_FAILURE = 1
EXIT_USAGE = 2
USAGE_ERRORS = (MissingConfigError, InvalidConfigError, InvalidOverrideError)


def error_line(codigo, detail, **extra):
    return json.dumps({'error': codigo, 'detail': detail, **extra}, ensure_ascii=False, sort_keys=True)


class RobustezCommand(BaseCommand):
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Archivo TOML o JSON de la corrida')
        parser.add_argument('--set', action='append', default=[], dest='overrides', metavar='CLAVE=VALOR',
                            help='Sobrescritura clave.punteada=valor (repetible, gana la última)')
        parser.add_argument('--out', help='Directorio de salida (por defecto output_dir)')
        parser.add_argument('--seed', type=int)
        parser.add_argument('--method')
        parser.add_argument('--ablation')

    def load_run(self, options):
        return load_run_config(
            options['config'], options['overrides'], seed=options['seed'], method=options['method'],
            ablation=options['ablation'], output_dir=options['out'],
        )

    def registrar(self, options):
        return options.get('register') or settings.FPBETTER_REGISTRAR

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except RobustezError as exc:
            logger.debug("%s: %s", exc.codigo, exc.detail)
            returncode = EXIT_USAGE if isinstance(exc, USAGE_ERRORS) else EXIT_FAILURE
            raise CommandError(error_line(exc.codigo, exc.detail), returncode=returncode) from exc
        except OSError as exc:
            logger.debug("IO_ERROR: %s", exc)
            raise CommandError(error_line('IO_ERROR', str(exc)), returncode=EXIT_FAILURE) from exc
