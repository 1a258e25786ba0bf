"""Extremality certificates for unital completely positive maps on
finite-dimensional von Neumann algebras."""

from .algebra import AlgebraModel, AlgebraSpec, Block, build, embed, membership
from .channel import (
    DensityState,
    KrausChannel,
    apply,
    from_choi,
    minimal_kraus,
    random_channel,
    random_phi_channel,
    stinespring_support,
    to_choi,
)
from .linalg import (
    CertError,
    IndeterminateError,
    InvalidInputError,
    NumericalError,
    ToleranceConfig,
)

__version__ = "0.1.0"
