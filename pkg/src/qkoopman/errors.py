"""Exception types raised across the package."""


class QKoopmanError(Exception):
    """Base class for all package errors."""


class ConfigError(QKoopmanError, ValueError):
    pass


class DomainError(QKoopmanError, ValueError):
    pass


class SizeError(QKoopmanError, ValueError):
    pass


class TruncationError(QKoopmanError):
    """Fock truncation too small for the populated levels."""


class IntegrationDivergedError(QKoopmanError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ClassificationError(QKoopmanError):
    """No cutoff rank produced a usable linear/forcing split."""


class LadderAmbiguityError(QKoopmanError):
    def __init__(self, message, frequencies=None):
        super().__init__(message)
        self.frequencies = frequencies


class UnresolvedSidebandsError(QKoopmanError):
    def __init__(self, message, frequencies=None, residual=None):
        super().__init__(message)
        self.frequencies = frequencies
        self.residual = residual
