"""Error hierarchy shared by the library and the experiment scripts."""


class SpecLabError(Exception):
    """Base class for every error raised by speclab."""


class ConfigError(SpecLabError, ValueError):
    """Experiment configuration failed schema validation.

    Args:
        errors (dict): Dotted field path -> list of messages.
    """

    def __init__(self, errors: dict):
        self.errors = errors
        message = "; ".join(f"{path}: {', '.join(reasons)}" for path, reasons in sorted(errors.items()))
        super().__init__(f"invalid experiment configuration - {message}")


class GridError(SpecLabError, ValueError):
    pass


class PotentialError(SpecLabError, ValueError):
    pass


class EigensolveError(SpecLabError):

    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class ProjectionError(SpecLabError, ValueError):
    pass


class DecayRadiusError(SpecLabError):

    def __init__(self, message: str, recommended_half_width: float = None):
        super().__init__(message)
        self.recommended_half_width = recommended_half_width


class SensorError(SpecLabError, ValueError):
    pass


class SweepError(SpecLabError, ValueError):
    pass


class LiftingError(SpecLabError, ValueError):
    pass


class MultiplierError(SpecLabError):

    def __init__(self, message: str, worst_point=None):
        super().__init__(message)
        self.worst_point = worst_point


class DoublingIndexError(SpecLabError, ValueError):
    pass


class HeatControlError(SpecLabError, ValueError):
    pass


class ControlError(SpecLabError):

    def __init__(self, message: str, residual_history=None):
        super().__init__(message)
        self.residual_history = residual_history or []


class CacheError(SpecLabError):
    pass
