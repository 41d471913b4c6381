"""Frequency-resolved phonon transport and relaxation-time reconstruction.

The package solves a linearized BGK transport equation for phonon energy
distributions, computes macroscopic heat-conduction diagnostics including the
diffusion limit, and reconstructs the frequency-dependent relaxation time from
boundary-temperature measurements via adjoint gradients and stochastic
gradient descent.
"""

from phonon_inverse.collision import (
    apply_collision,
    apply_collision_g,
    kernel_projection,
    mean_mu_omega,
    mean_omega,
    temperature_of,
    weighted_inner,
)
from phonon_inverse.diagnostics import (
    MacroTrace,
    accumulation_kappa,
    bulk_kappa,
    chapman_enskog_residual,
    compute_macro_trace,
    heat_flux,
    macro_trace_from_values,
    pointwise_kappa,
    settled_kappa,
    solve_heat_reference,
    to_g,
    write_macro_trace_csv,
)
from phonon_inverse.grid import GridConfig, PhaseGrid, build_grid
from phonon_inverse.inverse import (
    SourceTestPair,
    arrival_time,
    build_pair,
    central_difference,
    fd_gradient_oracle,
    forward_map,
    forward_map_batch,
    frechet_gradient,
    frequency_sweep_pairs,
    generate_data,
    gradient_aligned_directions,
    lipschitz_probe,
    loss,
    loss_and_gradient,
    omega_inner,
    omega_norm,
    total_loss,
)
from phonon_inverse.material import (
    MaterialModel,
    build_material,
    constant_g_star,
    constant_tau,
    default_g_star,
    eval_tau,
    eval_velocity,
    ground_truth_tau,
    initial_guess_tau,
    tabulated_g_star,
    tabulated_tau,
)
from phonon_inverse.optimize import (
    HistoryRow,
    OptimizerState,
    PairObjective,
    gradient_geometry,
    initial_state,
    min_pairwise_cosine,
    norm_ratio_spread,
    recombine_gradients,
    reconstruction_error,
    run_sgd,
    sgd_step_adagrad,
    sgd_step_armijo,
)
from phonon_inverse.transport import (
    BoundarySource,
    Trajectory,
    gaussian_bump,
    gaussian_source,
    solve_adjoint,
    solve_forward,
    solve_forward_batch,
    source_table,
)

__all__ = [
    "BoundarySource",
    "GridConfig",
    "HistoryRow",
    "MacroTrace",
    "MaterialModel",
    "OptimizerState",
    "PairObjective",
    "PhaseGrid",
    "SourceTestPair",
    "Trajectory",
    "accumulation_kappa",
    "apply_collision",
    "apply_collision_g",
    "arrival_time",
    "build_grid",
    "build_material",
    "build_pair",
    "bulk_kappa",
    "central_difference",
    "chapman_enskog_residual",
    "compute_macro_trace",
    "constant_g_star",
    "constant_tau",
    "default_g_star",
    "eval_tau",
    "eval_velocity",
    "fd_gradient_oracle",
    "forward_map",
    "forward_map_batch",
    "frechet_gradient",
    "frequency_sweep_pairs",
    "gaussian_bump",
    "gaussian_source",
    "generate_data",
    "gradient_aligned_directions",
    "gradient_geometry",
    "ground_truth_tau",
    "heat_flux",
    "initial_guess_tau",
    "initial_state",
    "kernel_projection",
    "lipschitz_probe",
    "loss",
    "loss_and_gradient",
    "macro_trace_from_values",
    "mean_mu_omega",
    "mean_omega",
    "min_pairwise_cosine",
    "norm_ratio_spread",
    "omega_inner",
    "omega_norm",
    "pointwise_kappa",
    "recombine_gradients",
    "reconstruction_error",
    "run_sgd",
    "settled_kappa",
    "sgd_step_adagrad",
    "sgd_step_armijo",
    "solve_adjoint",
    "solve_forward",
    "solve_forward_batch",
    "solve_heat_reference",
    "source_table",
    "tabulated_g_star",
    "tabulated_tau",
    "temperature_of",
    "to_g",
    "total_loss",
    "weighted_inner",
]

__version__ = "0.1.0"
