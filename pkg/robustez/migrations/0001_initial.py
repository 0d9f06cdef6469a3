import django.core.validators
import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='Experimento',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('creado_en', models.DateTimeField(auto_now_add=True, verbose_name='Fecha de Creación')),
                ('actualizado_en', models.DateTimeField(auto_now=True, verbose_name='Última Actualización')),
                ('metodo', models.CharField(choices=[('fp-better', 'FP-Better'), ('fgsm-rs', 'FGSM-RS'), ('fgsm', 'FGSM sin inicio aleatorio'), ('pgd-at', 'PGD-AT'), ('standard', 'Entrenamiento estándar')], db_index=True, max_length=16, verbose_name='Método')),
                ('ablacion', models.CharField(choices=[('spatial', 'Sólo espacial'), ('temporal', 'Sólo temporal'), ('both', 'Espacial y temporal')], default='both', max_length=16, verbose_name='Ablación')),
                ('semilla', models.PositiveIntegerField(verbose_name='Semilla')),
                ('directorio_salida', models.CharField(help_text='Donde quedan checkpoints y métricas', max_length=500, verbose_name='Directorio de Salida')),
                ('configuracion', models.JSONField(default=dict, verbose_name='Configuración Resuelta')),
                ('estado', models.CharField(choices=[('EC', 'En curso'), ('CO', 'Completado'), ('FA', 'Fallido')], db_index=True, default='EC', max_length=2, verbose_name='Estado')),
                ('detalle_error', models.TextField(blank=True, verbose_name='Detalle del Error')),
                ('precision_robusta_mejor', models.FloatField(blank=True, null=True, validators=[django.core.validators.MinValueValidator(0.0), django.core.validators.MaxValueValidator(1.0)], verbose_name='PGD-10 (mejor)')),
                ('precision_robusta_ultima', models.FloatField(blank=True, null=True, validators=[django.core.validators.MinValueValidator(0.0), django.core.validators.MaxValueValidator(1.0)], verbose_name='PGD-10 (último)')),
                ('epoca_mejor', models.PositiveIntegerField(blank=True, null=True, verbose_name='Época del Mejor')),
                ('epoca_colapso', models.PositiveIntegerField(blank=True, help_text='Sobreajuste catastrófico detectado por el monitor', null=True, verbose_name='Época de Colapso')),
            ],
            options={
                'verbose_name': 'Experimento',
                'verbose_name_plural': 'Experimentos',
                'ordering': ['-creado_en'],
                'indexes': [models.Index(fields=['metodo', 'semilla'], name='experimento_metodo_semilla')],
            },
        ),
        migrations.CreateModel(
            name='MetricaEpoca',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('creado_en', models.DateTimeField(auto_now_add=True, verbose_name='Fecha de Creación')),
                ('actualizado_en', models.DateTimeField(auto_now=True, verbose_name='Última Actualización')),
                ('epoca', models.PositiveIntegerField(verbose_name='Época')),
                ('lr', models.FloatField(verbose_name='Tasa de Aprendizaje')),
                ('p_min', models.FloatField(validators=[django.core.validators.MinValueValidator(0.0), django.core.validators.MaxValueValidator(1.0)], verbose_name='p_min')),
                ('bloques_esperados', models.FloatField(verbose_name='E(L̃)')),
                ('perdida_adversaria', models.FloatField(verbose_name='Pérdida Adversaria Media')),
                ('fraccion_ejecutada', models.FloatField(validators=[django.core.validators.MinValueValidator(0.0), django.core.validators.MaxValueValidator(1.0)], verbose_name='Fracción de Ramas Ejecutadas')),
                ('precision_limpia', models.FloatField(blank=True, null=True, validators=[django.core.validators.MinValueValidator(0.0), django.core.validators.MaxValueValidator(1.0)], verbose_name='Precisión Limpia')),
                ('precision_robusta', models.FloatField(blank=True, null=True, validators=[django.core.validators.MinValueValidator(0.0), django.core.validators.MaxValueValidator(1.0)], verbose_name='PGD-10')),
                ('precision_monitor', models.FloatField(blank=True, null=True, validators=[django.core.validators.MinValueValidator(0.0), django.core.validators.MaxValueValidator(1.0)], verbose_name='PGD-10 sobre Entrenamiento')),
                ('experimento', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='metricas', to='robustez.experimento', verbose_name='Experimento')),
            ],
            options={
                'verbose_name': 'Métrica por Época',
                'verbose_name_plural': 'Métricas por Época',
                'ordering': ['experimento', 'epoca'],
                'constraints': [models.UniqueConstraint(fields=('experimento', 'epoca'), name='metrica_epoca_unica')],
            },
        ),
    ]
