from ...runs import evaluate_run, render_table
from ..base import EXIT_USAGE, CommandError, RobustezCommand


class Command(RobustezCommand):
    help = 'Evalúa un checkpoint: precisión limpia, robusta por ataque y riesgo empírico'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--checkpoint', help='Ruta del checkpoint (por defecto <out>/best.ckpt)')
        parser.add_argument('--attacks', help='Lista separada por comas, p. ej. fgsm,pgd10,pgd50')

    def handle(self, *args, **options):
        attacks = [a.strip() for a in options['attacks'].split(',')] if options['attacks'] else None
        for label in attacks or ():
            if label != 'fgsm' and not (label.startswith('pgd') and label[3:].isdigit() and int(label[3:]) > 0):
                raise CommandError(f"Ataque desconocido: {label} (use fgsm o pgdK)", returncode=EXIT_USAGE)
        run = self.load_run(options)
        report = evaluate_run(run, options['checkpoint'], attacks, out=run.output_dir)
        self.stdout.write(render_table(report.header(), [report.row()]), ending='')
