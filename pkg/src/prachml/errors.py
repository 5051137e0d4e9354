"""Exception hierarchy shared by the toolkit."""


class PrachError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(PrachError, ValueError):
    """Invalid cell, channel, scenario or training configuration."""


class SpecError(ConfigError):
    """Invalid transmission description (e.g. delay beyond the cell bound)."""


class FrontEndError(PrachError, ValueError):
    pass


class DetectionError(PrachError, ValueError):
    pass


class CalibrationError(PrachError, ValueError):
    pass


class DataError(PrachError, ValueError):
    """Malformed, mixed or out-of-range dataset content."""


class InferenceError(PrachError, ValueError):
    pass


class ModelLoadError(PrachError, ValueError):
    """Model or dataset file that cannot be decoded."""


class EvaluationError(PrachError, ValueError):
    pass
