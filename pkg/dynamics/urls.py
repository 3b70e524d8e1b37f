"""
Dynamics module URL configuration.
"""

from django.urls import path, include
from rest_framework.routers import DefaultRouter
from . import views

router = DefaultRouter()
router.register(r'runs', views.SimulationRunViewSet)
router.register(r'validation-reports', views.ValidationReportViewSet)

urlpatterns = [
    path('', include(router.urls)),
]
