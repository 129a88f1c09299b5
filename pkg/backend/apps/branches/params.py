"""
Model coefficients of the predator-prey system.
"""
from dataclasses import dataclass, replace

from apps.common.exceptions import ConfigurationError


@dataclass(frozen=True)
class ModelParams:
    """
    alpha1, alpha2: prey self-limitation and predation loss
    beta1, beta2:   predator self-limitation and conversion gain
    gamma:          predator pressure on prey dispersal (cross-diffusion)
    """

    alpha1: float = 1.0
    alpha2: float = 1.0
    beta1: float = 1.0
    beta2: float = 0.03
    gamma: float = 0.5

    def __post_init__(self):
        for name in ('alpha1', 'beta1'):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be > 0, got {getattr(self, name)}")
        # zero interaction terms decouple the species
        for name in ('alpha2', 'beta2', 'gamma'):
            if not getattr(self, name) >= 0:
                raise ConfigurationError(f"{name} must be >= 0, got {getattr(self, name)}")

    def with_changes(self, **changes) -> 'ModelParams':
        return replace(self, **changes)

    def to_dict(self):
        return {
            'alpha1': self.alpha1,
            'alpha2': self.alpha2,
            'beta1': self.beta1,
            'beta2': self.beta2,
            'gamma': self.gamma,
        }
