"""
Report on the discrete gauge and Rayleigh-Taylor inequalities.
動力學模組 - 不等式監測

Per interval [t₀, t₁]:

  ΔF/Δt ≤ F²·‖∇X_t‖∞ · (1 + tol)

with F and ‖∇X_t‖∞ taken at the larger endpoint value, and the
finite-difference series d(1/min σ)/dt, reported without a bound.
"""

import math
from dataclasses import asdict, dataclass, field

MIN_RECORDS = 3


@dataclass(frozen=True)
class GaugeInterval:
    t0: float
    t1: float
    rate: float
    bound: float
    margin: float
    violated: bool


@dataclass
class MonitorReport:
    """不等式監測報告"""

    insufficient: bool = False
    intervals: list = field(default_factory=list)
    sigma_rate: list = field(default_factory=list)
    tolerance: float = 0.0

    @property
    def violations(self):
        return [interval for interval in self.intervals if interval.violated]

    @property
    def passed(self):
        return not self.insufficient and not self.violations

    def as_dict(self):
        return {
            'insufficient': self.insufficient,
            'passed': self.passed,
            'tolerance': self.tolerance,
            'violations': len(self.violations),
            'worst_margin': min((i.margin for i in self.intervals), default=None),
            'intervals': [_finite(asdict(interval)) for interval in self.intervals],
            'sigma_rate': [None if not math.isfinite(v) else v for v in self.sigma_rate],
        }


def _finite(mapping):
    return {
        key: (None if isinstance(value, float) and not math.isfinite(value) else value)
        for key, value in mapping.items()
    }


def _inverse(value):
    return 1.0 / value if value > 0.0 else math.inf


def monitor_inequalities(history, tol=1e-3):
    """
    ``history`` is a time-ordered sequence of objects with ``t``, ``gauge``,
    ``grad_xt`` and ``min_sigma`` attributes (records or stored samples).
    """
    history = list(history)
    report = MonitorReport(tolerance=tol)
    if len(history) < MIN_RECORDS:
        report.insufficient = True
        return report

    for before, after in zip(history, history[1:]):
        span = after.t - before.t
        if span <= 0.0:
            continue
        rate = (after.gauge - before.gauge) / span
        gauge = max(before.gauge, after.gauge)
        bound = gauge * gauge * max(before.grad_xt, after.grad_xt)
        margin = bound * (1.0 + tol) - rate
        report.intervals.append(GaugeInterval(
            t0=before.t, t1=after.t, rate=rate, bound=bound, margin=margin,
            violated=margin < 0.0,
        ))
        report.sigma_rate.append(
            (_inverse(after.min_sigma) - _inverse(before.min_sigma)) / span
        )
    return report
