from django.contrib import admin

from .models import Experimento, MetricaEpoca


class MetricaEpocaInline(admin.TabularInline):
    model = MetricaEpoca
    extra = 0
    can_delete = False
    readonly_fields = [
        'epoca', 'lr', 'p_min', 'bloques_esperados', 'perdida_adversaria',
        'fraccion_ejecutada', 'precision_limpia', 'precision_robusta', 'precision_monitor',
    ]


@admin.register(Experimento)
class ExperimentoAdmin(admin.ModelAdmin):
    list_display = [
        'id', 'metodo', 'ablacion', 'semilla', 'estado',
        'precision_robusta_mejor', 'precision_robusta_ultima', 'epoca_colapso', 'creado_en',
    ]
    list_filter = ['metodo', 'ablacion', 'estado']
    search_fields = ['directorio_salida']
    readonly_fields = ['creado_en', 'actualizado_en']
    inlines = [MetricaEpocaInline]


@admin.register(MetricaEpoca)
class MetricaEpocaAdmin(admin.ModelAdmin):
    list_display = ['experimento', 'epoca', 'lr', 'p_min', 'precision_limpia', 'precision_robusta']
    list_filter = ['experimento__metodo']
