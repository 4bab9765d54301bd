"""Sequential Action Control on matrix Lie groups.

Subpackages:
    liegroup   -- SO(3)/SE(2)/SE(3) kernel: exp/log, adjoints, exact dexp/dexpinv
    models     -- plant dynamics on (group x R^k): kinematic car, quadrotor
    objective  -- log-constructed quadratic costs and their exact gradients
    sac        -- the SAC controller: costates, mode insertion gradient, actions
    sto        -- switching-time optimization: transition gradients and descent
    harness    -- Lie group RK4 integration, scenarios, Monte Carlo, CLI backend
"""

from .liegroup import GroupKind, GroupElement
from .models import HybridState

__all__ = ["GroupKind", "GroupElement", "HybridState"]

__version__ = "0.1.0"
