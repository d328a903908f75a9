class MecAoiError(Exception):
    """Base class for every error raised by mecaoi"""


class InvalidParams(MecAoiError, ValueError):
    """Model parameters outside their domain (negative rates, bad weights, ...)"""


class InvalidConfig(MecAoiError, ValueError):
    """Simulation or experiment configuration that cannot be run"""


class SingularSystem(MecAoiError):
    """A balance or correlation system is (numerically) singular"""


class NonConvergence(MecAoiError):
    """A solver stopped at its iteration budget without meeting its tolerance"""
