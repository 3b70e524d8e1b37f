"""
Error hierarchy for Muskat3D.
核心模組 - 模擬例外類別

Every error raised by the numerical apps derives from Muskat3DError and
carries a ``stop_reason`` slug; the run loop records that slug when a step
aborts.
"""


class Muskat3DError(Exception):
    """模擬錯誤基底類別"""

    stop_reason = 'error'

    def __init__(self, message='', **context):
        super().__init__(message)
        self.context = context

    def as_dict(self):
        return {
            'stop_reason': self.stop_reason,
            'message': str(self),
            **{key: value for key, value in self.context.items()},
        }


class InvalidFieldError(Muskat3DError, ValueError):
    """欄位資料無效（非有限值或形狀錯誤）"""

    stop_reason = 'invalid-field'


class ResolutionError(Muskat3DError, ValueError):
    """網格解析度不足"""

    stop_reason = 'resolution'


class DegenerateSurfaceError(Muskat3DError):
    """曲面退化（法向量過小）"""

    stop_reason = 'degenerate-normal'

    def __init__(self, message='', min_normal=None, **context):
        super().__init__(message, min_normal=min_normal, **context)
        self.min_normal = min_normal


class SelfIntersectionError(Muskat3DError):
    """曲面自交"""

    stop_reason = 'self-intersection'


class BoundaryMarginError(Muskat3DError):
    """邊界留白條件不成立"""

    stop_reason = 'boundary-margin'

    def __init__(self, message='', ratio=None, **context):
        super().__init__(message, ratio=ratio, **context)
        self.ratio = ratio


class IsothermalizationError(Muskat3DError):
    """等溫參數化失敗"""

    stop_reason = 'isothermalize'


class SolverDivergenceError(Muskat3DError):
    """Ω 方程求解未收斂"""

    stop_reason = 'omega-solve'

    def __init__(self, message='', best_residual=None, iterations=None, **context):
        super().__init__(message, best_residual=best_residual, iterations=iterations, **context)
        self.best_residual = best_residual
        self.iterations = iterations


class RayleighTaylorViolation(Muskat3DError):
    """Rayleigh-Taylor 條件不成立"""

    stop_reason = 'rayleigh-taylor'

    def __init__(self, message='', min_sigma=None, **context):
        super().__init__(message, min_sigma=min_sigma, **context)
        self.min_sigma = min_sigma


class PointTooCloseError(Muskat3DError, ValueError):
    """取樣點離曲面過近"""

    stop_reason = 'point-too-close'


class SnapshotFormatError(Muskat3DError):
    """快照檔格式錯誤"""

    stop_reason = 'snapshot-format'

    def __init__(self, message='', offset=0, **context):
        super().__init__(f'{message} (byte offset {offset})', offset=offset, **context)
        self.offset = offset


class ConfigSchemaError(Muskat3DError):
    """設定檔格式錯誤"""

    stop_reason = 'config'

    def __init__(self, message='', key=None, **context):
        super().__init__(message, key=key, **context)
        self.key = key
