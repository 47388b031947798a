"""Landau-Zener transition probability under nonselective measurements.

Times are rescaled so the two-level system reads
``i a' = -(t/2) a + sqrt(gamma) b``, ``i b' = sqrt(gamma) a + (t/2) b``.
"""

from .adiabatic import (
    AngleSchedule,
    analytic_seed,
    adiabatic_population_matrix,
    adiabatic_probability,
    classify_theorem2,
    envelope_max,
    maximin_evaluate,
    maximin_solve,
    optimize_adiabatic,
    refine_de,
    tau_omega,
)
from .antiadiabatic import (
    dp_min_fresnel,
    first_order_objective,
    first_order_population,
    optimize_antiadiabatic,
    refine,
    table1,
)
from .dp_exact import GridSpec, ValueTable, build_tables, interpolate_p, optimize_dp, value_f0
from .errors import ConvergenceError, InvalidInputError, InvalidIntervalError, LZError
from .lz_core import (
    FRESNEL_LIMIT,
    Coupling,
    fresnel,
    hyp2f2,
    lz_probability,
    population_matrix,
    propagate,
)
from .objective import (
    MeasurementSchedule,
    OptimizationResult,
    apply_measurement,
    bloch_angle,
    mirror,
    transition_probability,
    upper_bound,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
