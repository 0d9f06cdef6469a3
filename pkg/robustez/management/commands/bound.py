import json

from ...runs import bound_run
from ..base import RobustezCommand


class Command(RobustezCommand):
    help = 'Calcula la intensidad robustificada, (ε, δ) y la cota de generalización para un checkpoint'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--checkpoint', help='Ruta del checkpoint (por defecto <out>/best.ckpt)')

    def handle(self, *args, **options):
        run = self.load_run(options)
        report = bound_run(run, options['checkpoint'], out=run.output_dir)
        self.stdout.write(json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False))
