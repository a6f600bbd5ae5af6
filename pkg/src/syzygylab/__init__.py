"""syzygylab: a planar three-body simulation and verification laboratory.

Core pieces: Newtonian dynamics with Jacobi splittings (`dynamics`), the
shape-sphere reduction and collinearity height (`shape`), event-aware
propagation with Levi-Civita regularization of binary collisions
(`propagate`), syzygy classification and experiments (`syzygy`), far-field
Kepler estimates and comparison problems (`asymptotics`), and a command
line driver (`cli`).
"""

from .dynamics import (
    ConservedSet,
    EnergySplit,
    JacobiState,
    MassTriple,
    PhaseState,
    accelerations,
    conserved,
    coupling_formula,
    coupling_gradient_xi,
    energy_split,
    jacobi_split,
)
from .shape import (
    CollisionRays,
    ShapePoint,
    SigmaSeries,
    collision_rays,
    configuration_from_shape,
    equilateral_state,
    lagrange_height,
    potential_phi_derivative,
    q_potential_term,
    shape_height,
    shape_height_and_rate,
    shape_point,
    sigma_series,
)
from .propagate import (
    PropagationOptions,
    Trajectory,
    TrajectoryStatus,
    hierarchical_state,
    lagrange_collapse_time,
    lagrange_homothety,
    levi_civita_passage,
    propagate,
    sample_initial_conditions,
)
from .syzygy import (
    SyzygyEvent,
    SyzygySequence,
    classify_syzygy,
    first_syzygy_experiment,
    sturm_zero_check,
    syzygy_sequence,
)
from .asymptotics import (
    DoublingWitness,
    ExcursionMetrics,
    SandwichProblem,
    comparison_sandwich,
    doubling_interval,
    excursion_metrics,
    far_field_bounds,
    model_kepler,
    scaled_kepler,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
