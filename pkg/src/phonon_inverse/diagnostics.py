"""Macroscopic observables and diffusion-limit diagnostics.

From a kinetic solution this module extracts the temperature T(t, x), the
heat flux q(t, x), the spatial temperature gradient, and the pointwise
conductivity kappa = -q / dT_dx (Fourier's law read backwards).  It also
provides the bulk conductivity integral the pointwise values relax to, the
accumulation (partial-spectrum) variant, an explicit reference solver for
the limiting heat equation, and the first-order expansion residual that
quantifies how far a field is from the diffusive regime.

Conventions: all spectral averages are the grid module's normalized means,
used consistently on both sides of every kinetic-vs-bulk comparison, so the
checks do not depend on the absolute normalization of g*.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from phonon_inverse.grid import FloatArray, PhaseGrid
from phonon_inverse.material import MaterialModel
from phonon_inverse.transport import BoundarySource, SourceFunction, solve_forward

logger = logging.getLogger(__name__)

# Pointwise conductivity is a ratio against the temperature gradient; below
# this fraction of the global temperature scale the gradient is considered
# flat and kappa undefined (stored as NaN, flagged in kappa_defined).
GRADIENT_FLOOR_FRACTION = 1e-8


@dataclass(frozen=True)
class MacroTrace:
    """Per-(t, x) macroscopic fields extracted from a kinetic run.

    ``kappa`` is NaN wherever ``kappa_defined`` is False (temperature too
    flat for the Fourier ratio to mean anything).
    """

    t_nodes: FloatArray
    x_nodes: FloatArray
    q: FloatArray
    temperature: FloatArray
    dT_dx: FloatArray
    kappa: FloatArray
    kappa_defined: FloatArray


def to_g(values_h: FloatArray, material: MaterialModel) -> FloatArray:
    """Convert h-formulation values to the original variables g = tau * h."""
    return values_h * material.tau


def heat_flux(
    values_g: FloatArray, material: MaterialModel, grid: PhaseGrid,
    epsilon: float | None = None,
) -> FloatArray | float:
    """Spectral heat flux (1/epsilon) * mean_{mu,omega}(mu v g).

    ``values_g`` is in g-variables with trailing (mu, omega) axes; leading
    axes (t and/or x) pass through.
    """
    eps = grid.epsilon if epsilon is None else float(epsilon)
    weight = (
        np.outer(grid.mu_weights / grid.mu_weights.sum(),
                 grid.omega_weights / grid.omega_weights.sum())
        * grid.mu_nodes[:, None]
        * material.velocity
        / eps
    )
    result = np.einsum("...mo,mo->...", values_g, weight)
    if result.ndim == 0:
        return float(result)
    return result


def _macro_moment_weights(
    material: MaterialModel, grid: PhaseGrid, epsilon: float
) -> FloatArray:
    """Weight tables turning streamed h-moments into (temperature, flux)."""
    quad = np.outer(grid.mu_weights / grid.mu_weights.sum(),
                    grid.omega_weights / grid.omega_weights.sum())
    h_star_mean = float((grid.omega_weights / grid.omega_weights.sum()) @ material.h_star)
    temperature_w = quad / h_star_mean
    flux_w = quad * grid.mu_nodes[:, None] * (material.velocity * material.tau) / epsilon
    return np.stack([temperature_w, flux_w])


def _assemble_macro_trace(
    t_nodes: FloatArray, x_nodes: FloatArray,
    temperature: FloatArray, q: FloatArray, dx: float,
) -> MacroTrace:
    dT_dx = np.gradient(temperature, dx, axis=1, edge_order=2)
    kappa, defined = _kappa_ratio(q, temperature, dT_dx)
    return MacroTrace(
        t_nodes=t_nodes, x_nodes=x_nodes, q=q, temperature=temperature,
        dT_dx=dT_dx, kappa=kappa, kappa_defined=defined,
    )


def _kappa_ratio(
    q: FloatArray, temperature: FloatArray, dT_dx: FloatArray
) -> tuple[FloatArray, FloatArray]:
    floor = GRADIENT_FLOOR_FRACTION * np.abs(temperature).max()
    defined = np.abs(dT_dx) >= floor if floor > 0.0 else np.abs(dT_dx) > 0.0
    kappa = np.full(q.shape, np.nan)
    np.divide(-q, dT_dx, out=kappa, where=defined)
    return kappa, defined


def compute_macro_trace(
    material: MaterialModel,
    grid: PhaseGrid,
    source: BoundarySource | SourceFunction,
    epsilon: float | None = None,
) -> MacroTrace:
    """Run the forward solver in streaming-moment mode and extract the trace.

    Only (n_t, n_x, 2) moment storage is needed, so this handles long small-
    epsilon runs whose full trajectories would not fit comfortably in memory.
    """
    eps = grid.epsilon if epsilon is None else float(epsilon)
    weights = _macro_moment_weights(material, grid, eps)
    traj = solve_forward(
        material, grid, source, epsilon=eps,
        store_trajectory=False, moment_weights=weights,
    )
    temperature = traj.moments[:, :, 0]
    q = traj.moments[:, :, 1]
    return _assemble_macro_trace(grid.t_nodes, grid.x_nodes, temperature, q, grid.dx)


def macro_trace_from_values(
    values_h: FloatArray,
    material: MaterialModel,
    grid: PhaseGrid,
    epsilon: float | None = None,
    t_nodes: FloatArray | None = None,
) -> MacroTrace:
    """Extract the macroscopic trace from a stored h-trajectory.

    ``values_h`` may cover any subset of time slices; ``t_nodes`` labels them
    and defaults to the grid's full time axis.
    """
    eps = grid.epsilon if epsilon is None else float(epsilon)
    t_nodes = grid.t_nodes if t_nodes is None else np.asarray(t_nodes, dtype=float)
    expected = (t_nodes.size, grid.n_x, grid.n_mu, grid.n_omega)
    if values_h.shape != expected:
        raise ValueError(
            f"values_h shape {values_h.shape} does not match {expected}; "
            "pass t_nodes when the trajectory covers a subset of times"
        )
    weights = _macro_moment_weights(material, grid, eps)
    moments = np.einsum("txmo,kmo->txk", values_h, weights)
    return _assemble_macro_trace(
        t_nodes, grid.x_nodes, moments[:, :, 0], moments[:, :, 1], grid.dx
    )


def pointwise_kappa(macro: MacroTrace) -> tuple[FloatArray, FloatArray]:
    """Fourier ratio kappa = -q / dT_dx with its defined-mask.

    Recomputed from the stored fields; identical to the cached columns.
    """
    return _kappa_ratio(macro.q, macro.temperature, macro.dT_dx)


def settled_kappa(
    macro: MacroTrace, x_probe: float = 0.5, settle_time: float = 0.125
) -> tuple[float, float]:
    """Late-time pointwise conductivity at one station and its drift.

    Returns (settled value, relative drift), where the settled value is the
    final-time kappa at the x node nearest ``x_probe`` and the drift is the
    largest relative deviation from it over t > ``settle_time``.
    """
    ix = int(np.argmin(np.abs(macro.x_nodes - x_probe)))
    late = macro.t_nodes > settle_time
    if not late.any():
        raise ValueError(
            f"no time nodes after settle_time={settle_time}; horizon is "
            f"{macro.t_nodes[-1]}"
        )
    window = macro.kappa[late, ix]
    if not np.all(macro.kappa_defined[late, ix]):
        raise ValueError(
            f"kappa undefined somewhere after t={settle_time} at x="
            f"{macro.x_nodes[ix]}; the gradient is too flat to read a conductivity"
        )
    settled = float(window[-1])
    drift = float(np.abs(window - settled).max() / abs(settled))
    return settled, drift


def bulk_kappa(material: MaterialModel, grid: PhaseGrid) -> float:
    """Bulk conductivity: one third of the normalized mean of tau v^2 g*."""
    w = grid.omega_weights / grid.omega_weights.sum()
    return float(w @ (material.tau * material.velocity**2 * material.g_star)) / 3.0


def accumulation_kappa(
    material: MaterialModel, grid: PhaseGrid, omega_lo: float, omega_hi: float
) -> float:
    """Partial-spectrum conductivity over [omega_lo, omega_hi).

    Sums the frequency channels whose nodes fall inside the window (the
    upper edge becomes inclusive once it reaches the top of the band),
    normalized like :func:`bulk_kappa`, so the full window reproduces the
    bulk value and complementary windows add exactly.
    """
    omega = grid.omega_nodes
    if omega_lo > omega_hi:
        raise ValueError(f"inverted window [{omega_lo}, {omega_hi}]")
    if omega_lo < omega[0] - 1e-12 or omega_hi > omega[-1] + 1e-12:
        raise ValueError(
            f"window [{omega_lo}, {omega_hi}] exceeds the frequency band "
            f"[{omega[0]}, {omega[-1]}]"
        )
    if omega_hi - omega_lo <= 1e-15:
        return 0.0
    integrand = material.tau * material.velocity**2 * material.g_star / 3.0
    weights = grid.omega_weights / grid.omega_weights.sum()
    if omega_hi >= omega[-1] - 1e-12:
        upper = omega <= omega_hi + 1e-12
    else:
        upper = omega < omega_hi - 1e-12
    inside = (omega >= omega_lo - 1e-12) & upper
    return float(np.sum(weights[inside] * integrand[inside]))


def solve_heat_reference(
    kappa_over_capacity: float,
    initial_u: FloatArray,
    grid: PhaseGrid,
    left_trace: FloatArray | None = None,
    substeps: int | None = None,
) -> FloatArray:
    """Explicit reference solution of the limiting heat equation.

    Integrates du/dt = D d2u/dx2 with D = ``kappa_over_capacity`` over the
    grid's (t, x) nodes in conservative (flux) form.  Both walls are
    insulating (zero flux, mirroring the kinetic system's specular right
    wall); passing ``left_trace`` instead prescribes u(t, 0), the setup used
    when comparing against a kinetic run's boundary temperature.

    Each output step is internally divided into the fewest substeps
    satisfying the diffusion bound dt <= dx^2 / (2 D); an explicit
    ``substeps`` that violates it is refused.
    """
    diffusivity = float(kappa_over_capacity)
    if diffusivity <= 0.0:
        raise ValueError(f"diffusivity must be positive, got {diffusivity}")
    initial_u = np.asarray(initial_u, dtype=float)
    if initial_u.shape != (grid.n_x,):
        raise ValueError(
            f"initial_u must have one value per x node ({grid.n_x}), "
            f"got shape {initial_u.shape}"
        )
    limit = grid.dx**2 / (2.0 * diffusivity)
    if substeps is None:
        substeps = max(1, math.ceil(grid.dt / limit * (1.0 + 1e-12)))
    elif grid.dt / substeps > limit * (1.0 + 1e-12):
        raise ValueError(
            f"diffusion CFL violation: dt/substeps = {grid.dt / substeps:.6g} "
            f"exceeds dx^2 / (2 D) = {limit:.6g}"
        )
    if left_trace is not None:
        left_trace = np.asarray(left_trace, dtype=float)
        if left_trace.shape != (grid.n_t,):
            raise ValueError(
                f"left_trace must have one value per time node ({grid.n_t}), "
                f"got shape {left_trace.shape}"
            )

    ratio = diffusivity * (grid.dt / substeps) / grid.dx**2
    u = np.zeros((grid.n_t, grid.n_x))
    u[0] = initial_u
    if left_trace is not None:
        u[0, 0] = left_trace[0]
    current = u[0].copy()
    for n in range(1, grid.n_t):
        for k in range(1, substeps + 1):
            flux = np.diff(current)
            current[1:-1] += ratio * (flux[1:] - flux[:-1])
            # half-width end cells: factor 2 keeps the update conservative
            current[0] += 2.0 * ratio * flux[0]
            current[-1] -= 2.0 * ratio * flux[-1]
            if left_trace is not None:
                s = grid.t_nodes[n - 1] + (k / substeps) * grid.dt
                current[0] = np.interp(s, grid.t_nodes, left_trace)
        u[n] = current
    logger.debug(
        "heat reference: %d steps x %d substeps, D=%g", grid.n_t - 1, substeps, diffusivity
    )
    return u


def chapman_enskog_residual(
    slice_g: FloatArray,
    material: MaterialModel,
    grid: PhaseGrid,
    epsilon: float | None = None,
) -> float:
    """Relative distance of a g-snapshot from its first-order diffusive form.

    The expansion predicts g ~ g* u - epsilon mu v tau g* du/dx with u the
    measured temperature.  Returns the quadrature-weighted relative L2 norm
    of the defect; order one in the ballistic regime, small and shrinking
    with epsilon in the diffusive regime.
    """
    eps = grid.epsilon if epsilon is None else float(epsilon)
    if slice_g.shape != (grid.n_x, grid.n_mu, grid.n_omega):
        raise ValueError(
            f"expected a single-time slice of shape "
            f"{(grid.n_x, grid.n_mu, grid.n_omega)}, got {slice_g.shape}"
        )
    w_omega = grid.omega_weights / grid.omega_weights.sum()
    h_star_mean = float(w_omega @ material.h_star)
    u = (
        np.einsum(
            "xmo,m,o->x",
            slice_g / material.tau,
            grid.mu_weights / grid.mu_weights.sum(),
            w_omega,
        )
        / h_star_mean
    )
    du_dx = np.gradient(u, grid.dx, edge_order=2)
    leading = material.g_star * u[:, None, None]
    first_order = (
        -grid.mu_nodes[:, None]
        * (material.velocity * material.tau * material.g_star)
        * du_dx[:, None, None]
    )
    defect = slice_g - leading - eps * first_order

    def weighted_norm(field: FloatArray) -> float:
        quad = np.einsum(
            "xmo,x,m,o->",
            field**2,
            grid.x_weights / grid.x_weights.sum(),
            grid.mu_weights / grid.mu_weights.sum(),
            w_omega,
        )
        return math.sqrt(quad)

    return weighted_norm(defect) / weighted_norm(slice_g)


def write_macro_trace_csv(macro: MacroTrace, path) -> None:
    """Dump a macroscopic trace as CSV rows (t, x, q, T, dT_dx, kappa, kappa_defined)."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "x", "q", "T", "dT_dx", "kappa", "kappa_defined"])
        for i, t in enumerate(macro.t_nodes):
            for j, x in enumerate(macro.x_nodes):
                writer.writerow(
                    [
                        format(t, ".17g"),
                        format(x, ".17g"),
                        format(macro.q[i, j], ".17g"),
                        format(macro.temperature[i, j], ".17g"),
                        format(macro.dT_dx[i, j], ".17g"),
                        format(macro.kappa[i, j], ".17g"),
                        int(macro.kappa_defined[i, j]),
                    ]
                )
