"""
Dynamics models for Muskat3D.
動力學模組 - 模擬執行紀錄模型
"""

import math

from django.db import models
from django.utils.translation import gettext_lazy as _


class SimulationRun(models.Model):
    """
    模擬執行
    """

    class Status(models.TextChoices):
        RUNNING = 'running', _('執行中')
        FINISHED = 'finished', _('已完成')
        STOPPED = 'stopped', _('條件停止')
        FAILED = 'failed', _('失敗')

    label = models.CharField(
        max_length=200,
        blank=True,
        verbose_name=_('名稱')
    )
    config = models.JSONField(
        default=dict,
        verbose_name=_('有效設定')
    )
    status = models.CharField(
        max_length=20,
        choices=Status.choices,
        default=Status.RUNNING,
        verbose_name=_('狀態')
    )
    stop_reason = models.CharField(
        max_length=40,
        blank=True,
        verbose_name=_('停止原因')
    )
    final_t = models.FloatField(
        default=0.0,
        verbose_name=_('結束時間')
    )
    steps = models.PositiveIntegerField(
        default=0,
        verbose_name=_('步數')
    )
    output_dir = models.CharField(
        max_length=500,
        blank=True,
        verbose_name=_('輸出目錄')
    )
    summary = models.JSONField(
        null=True,
        blank=True,
        verbose_name=_('執行摘要')
    )
    created_at = models.DateTimeField(
        auto_now_add=True,
        verbose_name=_('建立時間')
    )
    finished_at = models.DateTimeField(
        null=True,
        blank=True,
        verbose_name=_('結束於')
    )

    class Meta:
        verbose_name = _('模擬執行')
        verbose_name_plural = _('模擬執行')
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.label or f'run {self.pk}'} ({self.get_status_display()})"


class DiagnosticsSample(models.Model):
    """
    診斷取樣
    """

    run = models.ForeignKey(
        SimulationRun,
        on_delete=models.CASCADE,
        related_name='samples',
        verbose_name=_('模擬執行')
    )
    step = models.PositiveIntegerField(verbose_name=_('步序'))
    t = models.FloatField(verbose_name=_('時間'))
    min_sigma = models.FloatField(verbose_name=_('最小 σ'))
    gauge = models.FloatField(verbose_name=_('弦弧比'))
    inv_n = models.FloatField(verbose_name=_('法向量倒數上界'))
    f_inf = models.FloatField(verbose_name=_('f 上界'))
    g_inf = models.FloatField(verbose_name=_('g 上界'))
    r1 = models.FloatField(verbose_name=_('Darcy 殘差 r1'))
    r2 = models.FloatField(verbose_name=_('Darcy 殘差 r2'))
    x_norm4 = models.FloatField(verbose_name=_('Sobolev 範數'))
    energy = models.FloatField(null=True, blank=True, verbose_name=_('能量'))
    omega_iters = models.PositiveIntegerField(verbose_name=_('Ω 迭代次數'))
    omega_res = models.FloatField(verbose_name=_('Ω 殘差'))
    max_xt = models.FloatField(verbose_name=_('最大速度'))
    grad_xt = models.FloatField(default=0.0, verbose_name=_('速度梯度上界'))
    amplitude = models.FloatField(default=0.0, verbose_name=_('振幅'))
    rt_violated = models.BooleanField(default=False, verbose_name=_('違反 R-T 條件'))

    class Meta:
        verbose_name = _('診斷取樣')
        verbose_name_plural = _('診斷取樣')
        ordering = ['run', 'step']
        unique_together = [['run', 'step']]

    def __str__(self):
        return f'{self.run_id} step {self.step} t={self.t:.6g}'

    @classmethod
    def from_record(cls, run, step, record):
        values = {}
        for field in cls._meta.get_fields():
            name = getattr(field, 'attname', None)
            if name in (None, 'id', 'run_id', 'step'):
                continue
            value = getattr(record, name)
            if isinstance(value, float) and not math.isfinite(value):
                value = None
            values[name] = value
        return cls(run=run, step=step, **values)


class ValidationReport(models.Model):
    """
    驗證報告
    """

    class Level(models.TextChoices):
        FAST = 'fast', _('快速')
        FULL = 'full', _('完整')

    level = models.CharField(
        max_length=10,
        choices=Level.choices,
        verbose_name=_('層級')
    )
    passed = models.BooleanField(
        default=False,
        verbose_name=_('是否通過')
    )
    results = models.JSONField(
        default=list,
        verbose_name=_('各項結果')
    )
    duration = models.FloatField(
        default=0.0,
        verbose_name=_('耗時（秒）')
    )
    created_at = models.DateTimeField(
        auto_now_add=True,
        verbose_name=_('建立時間')
    )

    class Meta:
        verbose_name = _('驗證報告')
        verbose_name_plural = _('驗證報告')
        ordering = ['-created_at']

    def __str__(self):
        verdict = 'pass' if self.passed else 'fail'
        return f'{self.get_level_display()} validation {verdict}'
