from ...models import Experimento
from ...runs import COMPARE_COLUMNS, compare_runs, render_table
from ...trainer import TRAINERS
from ..base import EXIT_USAGE, CommandError, RobustezCommand


class Command(RobustezCommand):
    help = 'Entrena varios métodos sobre las mismas semillas y emite la tabla comparativa (mejor y último)'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--methods', default='fp-better,fgsm-rs,pgd-at,standard')
        parser.add_argument('--seeds', default='1,2,3')
        parser.add_argument('--register', action='store_true', help='Registrar cada corrida en la base de datos')

    def handle(self, *args, **options):
        methods = [m.strip() for m in options['methods'].split(',') if m.strip()]
        unknown = [m for m in methods if m not in TRAINERS]
        if unknown:
            raise CommandError(f"Método desconocido: {', '.join(unknown)}", returncode=EXIT_USAGE)
        try:
            seeds = [int(s) for s in options['seeds'].split(',') if s.strip()]
        except ValueError:
            raise CommandError(f"Semillas inválidas: {options['seeds']}", returncode=EXIT_USAGE) from None
        run = self.load_run(options)
        rows, pairs = compare_runs(run, methods, seeds)
        if self.registrar(options):
            for (method, seed), pair in pairs.items():
                Experimento.objects.create(
                    metodo=method, ablacion=run.ablation, semilla=seed,
                    directorio_salida=f'{run.output_dir}/{method}/seed{seed}', configuracion=run.to_dict(),
                ).completar(pair)
        self.stdout.write(render_table(COMPARE_COLUMNS, rows), ending='')
