from django.core.exceptions import ValidationError
from django.core.validators import MaxValueValidator, MinValueValidator
from django.db import models


class TimeStampedModel(models.Model):
    creado_en = models.DateTimeField(auto_now_add=True, verbose_name="Fecha de Creación")
    actualizado_en = models.DateTimeField(auto_now=True, verbose_name="Última Actualización")

    class Meta:
        abstract = True


FRACCION = [MinValueValidator(0.0), MaxValueValidator(1.0)]


class Experimento(TimeStampedModel):

    class Metodo(models.TextChoices):
        FP_BETTER = 'fp-better', 'FP-Better'
        FGSM_RS = 'fgsm-rs', 'FGSM-RS'
        FGSM = 'fgsm', 'FGSM sin inicio aleatorio'
        PGD_AT = 'pgd-at', 'PGD-AT'
        STANDARD = 'standard', 'Entrenamiento estándar'

    class Ablacion(models.TextChoices):
        ESPACIAL = 'spatial', 'Sólo espacial'
        TEMPORAL = 'temporal', 'Sólo temporal'
        AMBAS = 'both', 'Espacial y temporal'

    class Estado(models.TextChoices):
        EN_CURSO = 'EC', 'En curso'
        COMPLETADO = 'CO', 'Completado'
        FALLIDO = 'FA', 'Fallido'

    metodo = models.CharField(
        max_length=16,
        choices=Metodo.choices,
        verbose_name="Método",
        db_index=True
    )
    ablacion = models.CharField(
        max_length=16,
        choices=Ablacion.choices,
        default=Ablacion.AMBAS,
        verbose_name="Ablación"
    )
    semilla = models.PositiveIntegerField(verbose_name="Semilla")
    directorio_salida = models.CharField(
        max_length=500,
        verbose_name="Directorio de Salida",
        help_text="Donde quedan checkpoints y métricas"
    )
    configuracion = models.JSONField(
        default=dict,
        verbose_name="Configuración Resuelta"
    )
    estado = models.CharField(
        max_length=2,
        choices=Estado.choices,
        default=Estado.EN_CURSO,
        verbose_name="Estado",
        db_index=True
    )
    detalle_error = models.TextField(blank=True, verbose_name="Detalle del Error")
    precision_robusta_mejor = models.FloatField(
        null=True, blank=True, validators=FRACCION, verbose_name="PGD-10 (mejor)"
    )
    precision_robusta_ultima = models.FloatField(
        null=True, blank=True, validators=FRACCION, verbose_name="PGD-10 (último)"
    )
    epoca_mejor = models.PositiveIntegerField(null=True, blank=True, verbose_name="Época del Mejor")
    epoca_colapso = models.PositiveIntegerField(
        null=True,
        blank=True,
        verbose_name="Época de Colapso",
        help_text="Sobreajuste catastrófico detectado por el monitor"
    )

    class Meta:
        verbose_name = "Experimento"
        verbose_name_plural = "Experimentos"
        ordering = ['-creado_en']
        indexes = [
            models.Index(fields=['metodo', 'semilla'], name='experimento_metodo_semilla'),
        ]

    def __str__(self):
        return f"{self.get_metodo_display()} / semilla {self.semilla} ({self.get_estado_display()})"

    def clean(self):
        super().clean()
        if self.epoca_colapso is not None and self.epoca_colapso == 0:
            raise ValidationError({
                'epoca_colapso': 'El colapso requiere al menos una época previa'
            })

    def save(self, *args, **kwargs):
        self.full_clean()
        super().save(*args, **kwargs)

    def completar(self, pair):
        """Cierra el experimento con el par de checkpoints del entrenador."""
        self.estado = self.Estado.COMPLETADO
        self.precision_robusta_mejor = pair.best.metrics.get('robust_accuracy')
        self.precision_robusta_ultima = pair.last.metrics.get('robust_accuracy')
        self.epoca_mejor = pair.best.epoch
        self.epoca_colapso = pair.collapse_epoch
        self.save()
        MetricaEpoca.objects.bulk_create([
            MetricaEpoca.desde_registro(self, record) for record in pair.history
        ])

    def fallar(self, error):
        self.estado = self.Estado.FALLIDO
        self.detalle_error = str(error)
        self.save()

    def tuvo_colapso(self):
        return self.epoca_colapso is not None


class MetricaEpoca(TimeStampedModel):
    experimento = models.ForeignKey(
        Experimento,
        on_delete=models.CASCADE,
        related_name='metricas',
        verbose_name="Experimento"
    )
    epoca = models.PositiveIntegerField(verbose_name="Época")
    lr = models.FloatField(verbose_name="Tasa de Aprendizaje")
    p_min = models.FloatField(validators=FRACCION, verbose_name="p_min")
    bloques_esperados = models.FloatField(verbose_name="E(L̃)")
    perdida_adversaria = models.FloatField(verbose_name="Pérdida Adversaria Media")
    fraccion_ejecutada = models.FloatField(validators=FRACCION, verbose_name="Fracción de Ramas Ejecutadas")
    precision_limpia = models.FloatField(null=True, blank=True, validators=FRACCION, verbose_name="Precisión Limpia")
    precision_robusta = models.FloatField(null=True, blank=True, validators=FRACCION, verbose_name="PGD-10")
    precision_monitor = models.FloatField(
        null=True, blank=True, validators=FRACCION, verbose_name="PGD-10 sobre Entrenamiento"
    )

    class Meta:
        verbose_name = "Métrica por Época"
        verbose_name_plural = "Métricas por Época"
        ordering = ['experimento', 'epoca']
        constraints = [
            models.UniqueConstraint(fields=['experimento', 'epoca'], name='metrica_epoca_unica'),
        ]

    def __str__(self):
        return f"{self.experimento_id} - época {self.epoca}"

    @classmethod
    def desde_registro(cls, experimento, record):
        return cls(
            experimento=experimento,
            epoca=record.epoch,
            lr=record.lr,
            p_min=record.p_min,
            bloques_esperados=record.expected_blocks,
            perdida_adversaria=record.train_adv_loss,
            fraccion_ejecutada=record.executed_fraction,
            precision_limpia=record.clean_accuracy,
            precision_robusta=record.robust_accuracy,
            precision_monitor=record.monitor_accuracy,
        )
