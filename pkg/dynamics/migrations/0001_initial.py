# Generated by Django 5.2.10 on 2026-10-17 09:00

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='SimulationRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('label', models.CharField(blank=True, max_length=200, verbose_name='名稱')),
                ('config', models.JSONField(default=dict, verbose_name='有效設定')),
                ('status', models.CharField(choices=[('running', '執行中'), ('finished', '已完成'), ('stopped', '條件停止'), ('failed', '失敗')], default='running', max_length=20, verbose_name='狀態')),
                ('stop_reason', models.CharField(blank=True, max_length=40, verbose_name='停止原因')),
                ('final_t', models.FloatField(default=0.0, verbose_name='結束時間')),
                ('steps', models.PositiveIntegerField(default=0, verbose_name='步數')),
                ('output_dir', models.CharField(blank=True, max_length=500, verbose_name='輸出目錄')),
                ('summary', models.JSONField(blank=True, null=True, verbose_name='執行摘要')),
                ('created_at', models.DateTimeField(auto_now_add=True, verbose_name='建立時間')),
                ('finished_at', models.DateTimeField(blank=True, null=True, verbose_name='結束於')),
            ],
            options={
                'verbose_name': '模擬執行',
                'verbose_name_plural': '模擬執行',
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='ValidationReport',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('level', models.CharField(choices=[('fast', '快速'), ('full', '完整')], max_length=10, verbose_name='層級')),
                ('passed', models.BooleanField(default=False, verbose_name='是否通過')),
                ('results', models.JSONField(default=list, verbose_name='各項結果')),
                ('duration', models.FloatField(default=0.0, verbose_name='耗時（秒）')),
                ('created_at', models.DateTimeField(auto_now_add=True, verbose_name='建立時間')),
            ],
            options={
                'verbose_name': '驗證報告',
                'verbose_name_plural': '驗證報告',
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='DiagnosticsSample',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('step', models.PositiveIntegerField(verbose_name='步序')),
                ('t', models.FloatField(verbose_name='時間')),
                ('min_sigma', models.FloatField(verbose_name='最小 σ')),
                ('gauge', models.FloatField(verbose_name='弦弧比')),
                ('inv_n', models.FloatField(verbose_name='法向量倒數上界')),
                ('f_inf', models.FloatField(verbose_name='f 上界')),
                ('g_inf', models.FloatField(verbose_name='g 上界')),
                ('r1', models.FloatField(verbose_name='Darcy 殘差 r1')),
                ('r2', models.FloatField(verbose_name='Darcy 殘差 r2')),
                ('x_norm4', models.FloatField(verbose_name='Sobolev 範數')),
                ('energy', models.FloatField(blank=True, null=True, verbose_name='能量')),
                ('omega_iters', models.PositiveIntegerField(verbose_name='Ω 迭代次數')),
                ('omega_res', models.FloatField(verbose_name='Ω 殘差')),
                ('max_xt', models.FloatField(verbose_name='最大速度')),
                ('grad_xt', models.FloatField(default=0.0, verbose_name='速度梯度上界')),
                ('amplitude', models.FloatField(default=0.0, verbose_name='振幅')),
                ('rt_violated', models.BooleanField(default=False, verbose_name='違反 R-T 條件')),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='samples', to='dynamics.simulationrun', verbose_name='模擬執行')),
            ],
            options={
                'verbose_name': '診斷取樣',
                'verbose_name_plural': '診斷取樣',
                'ordering': ['run', 'step'],
                'unique_together': {('run', 'step')},
            },
        ),
    ]
