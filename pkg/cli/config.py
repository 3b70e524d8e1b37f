"""
Run configuration: flat ``key = value`` text validated by DRF serializers.
命令列模組 - 設定檔解析

One serializer per key section; every field carries its default, so the
validated data of all sections is the complete effective configuration.
"""

import math
import re
from dataclasses import dataclass, replace

from rest_framework import serializers

from birkhoff_rott.quadrature import QuadratureConfig
from core.exceptions import ConfigSchemaError
from dynamics.config import (
    DT_POLICIES, DiagConfig, GuardConfig, OutputConfig, RunConfig, SolverConfig, TimeConfig,
)
from layerpot.params import FluidParams
from layerpot.solver import METHODS
from spectral.grid import ParamGrid
from surface.state import MARGIN_POLICIES
from .initial_data import KINDS, PERIODIC_CHOICES, InitialDataSpec

LINE = re.compile(r'^(?P<key>[A-Za-z_][\w]*\.[A-Za-z_][\w]*)\s*=\s*(?P<value>.*?)\s*$')


class GridSerializer(serializers.Serializer):
    """網格設定"""

    n = serializers.IntegerField(default=32, min_value=8)
    L = serializers.FloatField(default=math.pi)

    def validate_n(self, value):
        if value & (value - 1):
            raise serializers.ValidationError('must be a power of two')
        return value

    def validate_L(self, value):
        if not math.isfinite(value) or value <= 0:
            raise serializers.ValidationError('must be positive and finite')
        return value


class FluidSerializer(serializers.Serializer):
    """流體參數"""

    mu1 = serializers.FloatField(default=1.0)
    mu2 = serializers.FloatField(default=1.0)
    rho1 = serializers.FloatField(default=0.0)
    rho2 = serializers.FloatField(default=1.0)

    def validate(self, attrs):
        if attrs['mu1'] <= 0 or attrs['mu2'] <= 0:
            raise serializers.ValidationError({'mu1': 'viscosities must be positive'})
        return attrs


class TimeSerializer(serializers.Serializer):
    """時間步設定"""

    dt_policy = serializers.ChoiceField(choices=DT_POLICIES, default='cfl')
    dt = serializers.FloatField(default=0.01)
    cfl = serializers.FloatField(default=0.5)
    dt_max = serializers.FloatField(default=0.1)
    t_end = serializers.FloatField(default=1.0, min_value=0.0)
    max_steps = serializers.IntegerField(default=100000, min_value=1)

    def validate(self, attrs):
        for name in ('dt', 'cfl', 'dt_max'):
            if not attrs[name] > 0:
                raise serializers.ValidationError({name: 'must be positive'})
        return attrs


class SolverSerializer(serializers.Serializer):
    """Ω 求解設定"""

    method = serializers.ChoiceField(choices=METHODS, default='gmres')
    tol = serializers.FloatField(default=1e-10)
    max_iter = serializers.IntegerField(default=200, min_value=1)
    restart = serializers.IntegerField(default=30, min_value=1)

    def validate_tol(self, value):
        if not value > 0:
            raise serializers.ValidationError('must be positive')
        return value


class QuadSerializer(serializers.Serializer):
    """主值積分設定"""

    ring = serializers.IntegerField(default=3, min_value=1)
    cutoff = serializers.FloatField(default=0.0, min_value=0.0)


class RunSerializer(serializers.Serializer):
    """執行模式與停止條件"""

    guarded = serializers.BooleanField(default=True)
    deterministic = serializers.BooleanField(default=True)
    sigma_min = serializers.FloatField(default=0.0, min_value=0.0)
    gauge_max = serializers.FloatField(default=1e3)
    inv_n_max = serializers.FloatField(default=1e6)
    amplitude_max = serializers.FloatField(default=10.0)
    margin_policy = serializers.ChoiceField(choices=MARGIN_POLICIES, default='warn')
    seed = serializers.IntegerField(default=0, min_value=0)

    def validate(self, attrs):
        for name in ('gauge_max', 'inv_n_max', 'amplitude_max'):
            if not attrs[name] > 0:
                raise serializers.ValidationError({name: 'must be positive'})
        return attrs


class DiagSerializer(serializers.Serializer):
    """診斷設定"""

    gauge_stride = serializers.IntegerField(default=4, min_value=1)
    gauge_exact = serializers.BooleanField(default=False)
    sobolev_k = serializers.IntegerField(default=4, min_value=1)
    monitor_tol = serializers.FloatField(default=1e-3, min_value=0.0)


class InitSerializer(serializers.Serializer):
    """初始資料設定"""

    kind = serializers.ChoiceField(choices=KINDS, default='flat')
    k1 = serializers.IntegerField(default=1)
    k2 = serializers.IntegerField(default=0)
    eps = serializers.FloatField(default=1e-4, min_value=0.0)
    amplitude = serializers.FloatField(default=0.1, min_value=0.0)
    width = serializers.FloatField(default=0.5)
    center1 = serializers.FloatField(default=0.0)
    center2 = serializers.FloatField(default=0.0)
    path = serializers.CharField(default='', allow_blank=True, trim_whitespace=True)
    periodic = serializers.ChoiceField(choices=PERIODIC_CHOICES, default='auto')
    isothermalize = serializers.BooleanField(default=False)
    iso_tol = serializers.FloatField(default=1e-2)
    iso_max_iter = serializers.IntegerField(default=200, min_value=0)

    def validate_width(self, value):
        if not value > 0:
            raise serializers.ValidationError('must be positive')
        return value

    def validate(self, attrs):
        if attrs['kind'] == 'file' and not attrs['path']:
            raise serializers.ValidationError({'path': 'required when kind = file'})
        return attrs


class OutputSerializer(serializers.Serializer):
    """輸出設定"""

    dir = serializers.CharField(default='runs/default')
    cadence = serializers.IntegerField(default=10, min_value=1)
    persist = serializers.BooleanField(default=True)


SECTIONS = {
    'grid': GridSerializer,
    'fluid': FluidSerializer,
    'time': TimeSerializer,
    'solver': SolverSerializer,
    'quad': QuadSerializer,
    'run': RunSerializer,
    'diag': DiagSerializer,
    'init': InitSerializer,
    'output': OutputSerializer,
}


def known_keys():
    return [
        f'{section}.{name}'
        for section, serializer in SECTIONS.items()
        for name in serializer().fields
    ]


def parse_lines(text):
    """``key = value`` pairs; ``#`` starts a comment, blank lines are skipped."""
    known = set(known_keys())
    values = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        match = LINE.match(line)
        if match is None:
            raise ConfigSchemaError(f'line {number}: expected "section.key = value", got {raw.strip()!r}')
        key, value = match['key'], match['value']
        if key not in known:
            raise ConfigSchemaError(f'line {number}: unknown key {key!r}', key=key)
        if key in values:
            raise ConfigSchemaError(f'line {number}: duplicate key {key!r}', key=key)
        values[key] = value
    return values


def validate_values(values):
    """Validate raw strings section by section; returns the full typed mapping."""
    effective = {}
    for section, serializer_class in SECTIONS.items():
        prefix = f'{section}.'
        data = {key[len(prefix):]: value for key, value in values.items() if key.startswith(prefix)}
        serializer = serializer_class(data=data)
        if not serializer.is_valid():
            name, messages = next(iter(serializer.errors.items()))
            key = prefix + name if name != 'non_field_errors' else section
            raise ConfigSchemaError(f'{key}: {" ".join(str(m) for m in messages)}', key=key)
        for name in serializer_class().fields:
            effective[prefix + name] = serializer.validated_data[name]
    return effective


def format_setting(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_effective(effective):
    """All keys in canonical order, floats with repr."""
    return ''.join(f'{key} = {format_setting(effective[key])}\n' for key in known_keys())


@dataclass(frozen=True)
class LoadedConfig:
    """解析後的設定"""

    effective: dict
    run: RunConfig

    @property
    def text(self):
        return render_effective(self.effective)

    def with_grid(self, grid):
        effective = dict(self.effective, **{'grid.n': grid.n, 'grid.L': grid.L})
        check_cutoff(effective)
        try:
            return LoadedConfig(effective, replace(self.run, grid=grid))
        except ValueError as exc:
            raise ConfigSchemaError(str(exc)) from exc


def check_cutoff(effective):
    """The pair-quadrature cutoff radius cannot exceed the box half-width."""
    cutoff, L = effective['quad.cutoff'], effective['grid.L']
    if cutoff and cutoff > L:
        raise ConfigSchemaError(
            f'quad.cutoff: {cutoff!r} exceeds the box half-width grid.L = {L!r}', key='quad.cutoff',
        )


def build_run_config(effective, label=''):
    check_cutoff(effective)
    section = lambda name: {
        key.split('.', 1)[1]: value for key, value in effective.items() if key.startswith(name + '.')
    }
    quad = section('quad')
    init = section('init')
    try:
        guard = GuardConfig(**section('run'))
        return RunConfig(
            grid=ParamGrid(**section('grid')),
            fluid=FluidParams(**section('fluid')),
            time=TimeConfig(**section('time')),
            solver=SolverConfig(**section('solver')),
            quad=QuadratureConfig(
                ring=quad['ring'], deterministic=guard.deterministic,
                cutoff=quad['cutoff'] or None,
            ),
            run=guard,
            diag=DiagConfig(**section('diag')),
            output=OutputConfig(**section('output')),
            init=InitialDataSpec(seed=guard.seed, **init),
            label=label,
        )
    except ConfigSchemaError:
        raise
    except ValueError as exc:
        raise ConfigSchemaError(str(exc)) from exc


def load_config(text, label=''):
    effective = validate_values(parse_lines(text))
    return LoadedConfig(effective, build_run_config(effective, label))


def load_config_file(path):
    try:
        with open(path, encoding='utf-8') as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigSchemaError(f'cannot read configuration {path}: {exc.strerror}') from exc
    return load_config(text, label=str(path))


def load_overrides(pairs):
    """``k=v`` items from the command line, validated like a configuration file."""
    return load_config('\n'.join(pairs))
