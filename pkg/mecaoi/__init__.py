"""Age-of-Information analysis and mean-field offloading games for MEC networks."""
from .errors import InvalidConfig, InvalidParams, MecAoiError, NonConvergence, SingularSystem

__all__ = ['MecAoiError', 'InvalidParams', 'InvalidConfig', 'SingularSystem', 'NonConvergence']
