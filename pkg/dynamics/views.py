"""
Dynamics module views.
"""

from rest_framework import viewsets
from rest_framework.decorators import action
from rest_framework.response import Response
from rest_framework.permissions import IsAuthenticated
from .models import SimulationRun, ValidationReport
from .monitor import monitor_inequalities
from .serializers import (
    SimulationRunSerializer, SimulationRunDetailSerializer,
    DiagnosticsSampleSerializer, ValidationReportSerializer,
)


class SimulationRunViewSet(viewsets.ReadOnlyModelViewSet):
    """模擬執行（只讀）"""
    queryset = SimulationRun.objects.all()
    permission_classes = [IsAuthenticated]
    filterset_fields = ['status', 'stop_reason']
    search_fields = ['label']
    ordering_fields = ['created_at', 'final_t']
    ordering = ['-created_at']

    def get_serializer_class(self):
        if self.action == 'retrieve':
            return SimulationRunDetailSerializer
        return SimulationRunSerializer

    @action(detail=True, methods=['get'])
    def samples(self, request, pk=None):
        """診斷取樣序列"""
        run = self.get_object()
        serializer = DiagnosticsSampleSerializer(run.samples.all(), many=True)
        return Response(serializer.data)

    @action(detail=True, methods=['get'])
    def monitor(self, request, pk=None):
        """以儲存的取樣重新檢查弦弧比不等式"""
        run = self.get_object()
        tol = float((run.config or {}).get('diag.monitor_tol', 1e-3))
        report = monitor_inequalities(run.samples.order_by('step'), tol=tol)
        return Response(report.as_dict())


class ValidationReportViewSet(viewsets.ReadOnlyModelViewSet):
    """驗證報告（只讀）"""
    queryset = ValidationReport.objects.all()
    serializer_class = ValidationReportSerializer
    permission_classes = [IsAuthenticated]
    filterset_fields = ['level', 'passed']
    ordering_fields = ['created_at']
    ordering = ['-created_at']
