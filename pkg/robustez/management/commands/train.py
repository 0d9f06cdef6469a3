import json

from ...models import Experimento
from ...runs import train_run
from ..base import RobustezCommand


class Command(RobustezCommand):
    help = 'Entrena un modelo (fp-better, fgsm-rs, fgsm, pgd-at o standard) y guarda checkpoints y métricas'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--resume', action='store_true', help='Continuar desde last.ckpt del directorio de salida')
        parser.add_argument('--register', action='store_true', help='Registrar la corrida en la base de datos')

    def handle(self, *args, **options):
        run = self.load_run(options)
        experimento = None
        if self.registrar(options):
            experimento = Experimento.objects.create(
                metodo=run.method, ablacion=run.ablation, semilla=run.seed,
                directorio_salida=run.output_dir, configuracion=run.to_dict(),
            )
        try:
            pair = train_run(run, resume=options['resume'])
        except Exception as exc:
            if experimento is not None:
                experimento.fallar(exc)
            raise
        if experimento is not None:
            experimento.completar(pair)
        self.stdout.write(json.dumps({
            'method': run.method,
            'output_dir': run.output_dir,
            'best_epoch': pair.best.epoch,
            'best_robust_accuracy': pair.best.metrics.get('robust_accuracy'),
            'last_robust_accuracy': pair.last.metrics.get('robust_accuracy'),
            'collapse_epoch': pair.collapse_epoch,
        }, sort_keys=True))
