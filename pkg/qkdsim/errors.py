#exception hierarchy


class QkdSimError(Exception):
    """Base class for every error raised by qkdsim."""


class InvalidArgumentError(QkdSimError, ValueError):
    pass


class EmptySpectrumError(InvalidArgumentError):
    pass


class UndefinedEstimateError(QkdSimError):
    pass


class ConfigError(QkdSimError, ValueError):
    pass


class CalibrationError(QkdSimError):
    pass


class PhysicsError(QkdSimError):
    pass
