from ...runs import export_curves
from ..base import RobustezCommand


class Command(RobustezCommand):
    help = 'Convierte uno o más metrics.jsonl en una tabla de curvas por época lista para graficar'

    def add_arguments(self, parser):
        parser.add_argument('metrics', nargs='+', help='Archivos metrics.jsonl')
        parser.add_argument('--out', required=True, help='CSV de salida')

    def handle(self, *args, **options):
        rows = export_curves(options['metrics'], options['out'])
        self.stdout.write(f"{len(rows)} fila(s) escritas en {options['out']}")
