"""
Per-step diagnostics record and its text formats.
動力學模組 - 診斷紀錄
"""

import math
from dataclasses import asdict, dataclass, fields

CSV_COLUMNS = (
    't', 'min_sigma', 'gauge', 'inv_n', 'f_inf', 'g_inf', 'r1', 'r2',
    'x_norm4', 'energy', 'omega_iters', 'omega_res', 'max_xt',
)

EXTRA_COLUMNS = (
    't', 'dt', 'grad_xt', 'iso_j', 'amplitude', 'gauge_exact', 'gauge_rate',
    'rt_dissipation', 'margin_ratio',
)


def format_value(value):
    """Round-trip text: 17 significant digits for floats."""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    value = float(value)
    if math.isnan(value):
        return 'nan'
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return f'{value:.17g}'


def finite_or_none(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


@dataclass(frozen=True)
class DiagnosticsRecord:
    """
    單步診斷紀錄

    Quantities at the start of a step. ``energy`` is +inf and
    ``rt_violated`` is set when min σ ≤ 0 in unguarded runs.
    """

    t: float
    min_sigma: float
    gauge: float
    inv_n: float
    f_inf: float
    g_inf: float
    r1: float
    r2: float
    x_norm4: float
    energy: float
    omega_iters: int
    omega_res: float
    max_xt: float
    dt: float = 0.0
    grad_xt: float = 0.0
    iso_j: float = 0.0
    amplitude: float = 0.0
    gauge_exact: float = math.nan
    gauge_rate: float = 0.0
    rt_dissipation: float = 0.0
    margin_ratio: float = 0.0
    rt_violated: bool = False
    omega_method: str = ''

    def csv_row(self):
        return [format_value(getattr(self, name)) for name in CSV_COLUMNS]

    def extras_row(self):
        return [format_value(getattr(self, name)) for name in EXTRA_COLUMNS]

    def as_dict(self):
        """JSON-safe mapping; non-finite floats become None."""
        return {key: finite_or_none(value) for key, value in asdict(self).items()}

    @classmethod
    def field_names(cls):
        return tuple(f.name for f in fields(cls))
