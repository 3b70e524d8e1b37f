"""
Dynamics module serializers.
"""

from rest_framework import serializers
from .models import SimulationRun, DiagnosticsSample, ValidationReport


class SimulationRunSerializer(serializers.ModelSerializer):
    """模擬執行序列化器"""

    status_display = serializers.CharField(source='get_status_display', read_only=True)
    sample_count = serializers.IntegerField(source='samples.count', read_only=True)

    class Meta:
        model = SimulationRun
        fields = [
            'id', 'label', 'status', 'status_display', 'stop_reason',
            'final_t', 'steps', 'output_dir', 'sample_count',
            'created_at', 'finished_at'
        ]


class SimulationRunDetailSerializer(SimulationRunSerializer):
    """模擬執行詳細序列化器"""

    class Meta(SimulationRunSerializer.Meta):
        fields = SimulationRunSerializer.Meta.fields + ['config', 'summary']


class DiagnosticsSampleSerializer(serializers.ModelSerializer):
    """診斷取樣序列化器"""

    class Meta:
        model = DiagnosticsSample
        exclude = ['run']


class ValidationReportSerializer(serializers.ModelSerializer):
    """驗證報告序列化器"""

    level_display = serializers.CharField(source='get_level_display', read_only=True)

    class Meta:
        model = ValidationReport
        fields = ['id', 'level', 'level_display', 'passed', 'results', 'duration', 'created_at']
