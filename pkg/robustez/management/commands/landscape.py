from pathlib import Path

from ...runs import landscape_run
from ..base import RobustezCommand


class Command(RobustezCommand):
    help = 'Escribe la malla del paisaje de pérdida (dirección adversaria x dirección rademacher)'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--checkpoint', help='Ruta del checkpoint (por defecto <out>/best.ckpt)')
        parser.add_argument('--index', type=int, default=0, help='Ejemplo del conjunto de evaluación')

    def handle(self, *args, **options):
        run = self.load_run(options)
        landscape = landscape_run(run, options['checkpoint'], options['index'], out=run.output_dir)
        self.stdout.write(
            f"Paisaje {len(landscape.coefficients)}x{len(landscape.coefficients)} en "
            f"{Path(run.output_dir) / 'landscape.csv'} (centro {landscape.center:.6g})"
        )
