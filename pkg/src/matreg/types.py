"""Array alias and the proximable-function protocol."""

from __future__ import annotations

from typing import TYPE_CHECKING, Protocol, runtime_checkable

import numpy as np
from numpy.typing import NDArray

if TYPE_CHECKING:
    from .prox import ProxEvaluation

FloatArray = NDArray[np.float64]


@runtime_checkable
class TProximable(Protocol):
    """A closed convex function with a computable proximal mapping.

    Penalties and the squared loss implement this so that Moreau
    envelopes and the dual objective can be assembled generically.
    """

    def value(self, x: FloatArray) -> float:
        """Evaluate the unscaled function at ``x``."""
        ...

    def prox(self, x: FloatArray, t: float) -> ProxEvaluation:
        """Proximal mapping of ``t`` times the function, with its certificate."""
        ...

