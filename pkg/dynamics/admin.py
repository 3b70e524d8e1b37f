"""
Dynamics module admin configuration.
"""

from django.contrib import admin
from .models import SimulationRun, DiagnosticsSample, ValidationReport


class DiagnosticsSampleInline(admin.TabularInline):
    model = DiagnosticsSample
    extra = 0
    fields = ['step', 't', 'min_sigma', 'gauge', 'energy', 'max_xt', 'rt_violated']
    readonly_fields = fields
    can_delete = False


@admin.register(SimulationRun)
class SimulationRunAdmin(admin.ModelAdmin):
    """模擬執行管理"""

    list_display = ['id', 'label', 'status', 'stop_reason', 'final_t', 'steps', 'created_at']
    list_filter = ['status', 'stop_reason']
    search_fields = ['label', 'output_dir']
    readonly_fields = ['created_at', 'finished_at']
    inlines = [DiagnosticsSampleInline]


@admin.register(ValidationReport)
class ValidationReportAdmin(admin.ModelAdmin):
    """驗證報告管理"""

    list_display = ['id', 'level', 'passed', 'duration', 'created_at']
    list_filter = ['level', 'passed']
    readonly_fields = ['created_at']
