"""Discrete-velocity kinetic solver for bounded domains with thermostatted walls."""

__version__ = "0.1.0"

from .velocity import (VelocityGrid, WeightSpec, DistributionField, build_grid,
                       maxwellian, integrate, norm_H, norm_Linf_omega)
from .collision import (LinearizedOperator, MacroMoments, AngularRule, kernel_k,
                        collision_frequency, build_linearized, apply_K, apply_C,
                        project_Pi, apply_Q, moments, measure_CQ)
from .geometry import (Slab, Cylinder, Disk, SignedDistance, BoundaryHit,
                       specular_reflect, backward_exit, zeta_S, auxiliary_n1)
from .boundary import (WallModel, wall_temperature, wall_maxwellian,
                       apply_maxwell_bc, inflow_psi, boundary_flux_residual)
from .transport import (SolverConfig, DecaySeries, step_mild, solve_linear_evolution,
                        solve_nonlinear_evolution, fit_decay_rate)
from .steady import (SteadyReport, solve_linear_steady, solve_ness, ness_residual,
                     verify_ness_scaling)
from .hypocoercivity import (AuditGeometry, HypoForm, DissipationReport, hypo_inner,
                             hypo_norm, check_equivalence, select_eta, dissipation_audit,
                             boundary_functionals)
