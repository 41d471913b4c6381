"""Phase-space discretization and the normalized bracket averages.

The computational phase space is (t, x, mu, omega): time, position in [0, 1],
direction cosine in (-1, 1), and phonon frequency on a truncated band
[omega_min, omega_max].  All averaging conventions used by the solvers and
diagnostics live here: Gauss-Legendre quadrature in mu, trapezoid rule in
t and x, uniform per-channel weights in omega, every bracket normalized by
the measure of the integrated domain so that the average of a constant is
that constant.

The omega axis is a set of discrete frequency channels rather than samples
of a smooth integrand, so each node carries one full cell weight domega.
Trapezoid weights in omega would halve the band-edge channels in every
frequency average — including the temperature normalization — which makes
the edge relaxation times disproportionately cheap levers for the inverse
problem and measurably biases gradient-descent reconstructions at the band
edge.  Equal weights keep all channels on the same footing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

FloatArray = np.ndarray

AXIS_NAMES = ("t", "x", "mu", "omega")

# Tolerance for "does the step divide the span" when counting nodes; guards
# against float dust such as 3.6 / 0.4 = 8.999999999999998.
_COUNT_EPS = 1e-9


def _node_count(start: float, end: float, step: float) -> int:
    return int(np.floor((end - start) / step + _COUNT_EPS)) + 1


def _trapezoid_weights(nodes: FloatArray) -> FloatArray:
    """Trapezoid quadrature weights for a uniform 1-D grid.

    A single-node axis gets weight 1 so that the normalized mean degenerates
    to the value itself.
    """
    n = nodes.size
    if n == 1:
        return np.ones(1)
    step = float(nodes[1] - nodes[0])
    weights = np.full(n, step)
    weights[0] = 0.5 * step
    weights[-1] = 0.5 * step
    return weights


def _channel_weights(nodes: FloatArray) -> FloatArray:
    """Equal per-node cell weights for a discrete-channel axis (omega).

    Every node carries one full cell of measure; see the module docstring for
    why the band edges must not be half-weighted.
    """
    n = nodes.size
    if n == 1:
        return np.ones(1)
    step = float(nodes[1] - nodes[0])
    return np.full(n, step)


@dataclass(frozen=True)
class GridConfig:
    """Parameters from which :func:`build_grid` constructs a :class:`PhaseGrid`.

    ``max_speed`` is the largest characteristic speed max |mu * v(omega)| of
    the material the grid will be used with; when provided, the constructor
    enforces the advective CFL condition dt <= epsilon * dx / max_speed.
    ``min_relaxation_time`` likewise enables the explicit-relaxation guard
    dt <= 0.5 * epsilon**2 * min_relaxation_time.  Both checks are repeated
    at solve time with the actual material, so omitting them here only delays
    the failure, it never hides it.
    """

    dt: float
    dx: float
    domega: float
    n_mu: int
    t_end: float
    omega_min: float
    omega_max: float
    t_start: float = 0.0
    x_start: float = 0.0
    x_end: float = 1.0
    epsilon: float = 1.0
    max_speed: float | None = None
    min_relaxation_time: float | None = None


@dataclass(frozen=True)
class PhaseGrid:
    """Immutable discretization of (t, x, mu, omega) with quadrature weights.

    ``mu_weights`` sum to 2 (the full measure of (-1, 1)); ``t_weights`` and
    ``x_weights`` are raw trapezoid weights summing to the spans of their
    axes; ``omega_weights`` are equal per-channel weights of one cell domega
    each (summing to n_omega * domega).  :meth:`average` divides by those
    sums, so the stored weights stay usable for unnormalized integrals (the
    Frechet pairing in omega needs them raw).
    """

    t_nodes: FloatArray
    x_nodes: FloatArray
    mu_nodes: FloatArray
    mu_weights: FloatArray
    omega_nodes: FloatArray
    t_weights: FloatArray
    x_weights: FloatArray
    omega_weights: FloatArray
    epsilon: float

    def __post_init__(self) -> None:
        for name in ("t_nodes", "x_nodes", "mu_nodes", "mu_weights",
                     "omega_nodes", "t_weights", "x_weights", "omega_weights"):
            getattr(self, name).setflags(write=False)

    # -- sizes and spacings ------------------------------------------------
    @property
    def n_t(self) -> int:
        return self.t_nodes.size

    @property
    def n_x(self) -> int:
        return self.x_nodes.size

    @property
    def n_mu(self) -> int:
        return self.mu_nodes.size

    @property
    def n_omega(self) -> int:
        return self.omega_nodes.size

    @property
    def dt(self) -> float:
        return float(self.t_nodes[1] - self.t_nodes[0])

    @property
    def dx(self) -> float:
        return float(self.x_nodes[1] - self.x_nodes[0])

    @property
    def domega(self) -> float:
        if self.n_omega == 1:
            return 0.0
        return float(self.omega_nodes[1] - self.omega_nodes[0])

    @property
    def t_span(self) -> float:
        return float(self.t_nodes[-1] - self.t_nodes[0])

    @property
    def omega_span(self) -> float:
        return float(self.omega_nodes[-1] - self.omega_nodes[0])

    @property
    def positive_mu(self) -> FloatArray:
        """Boolean mask of the mu nodes with mu > 0."""
        return self.mu_nodes > 0.0

    # -- bracket averages ----------------------------------------------------
    def _axis_weights(self, name: str, mu_range: str) -> tuple[FloatArray, FloatArray | None]:
        """Normalized weights for one axis, plus an optional node mask."""
        if name == "t":
            weights = self.t_weights
        elif name == "x":
            weights = self.x_weights
        elif name == "mu":
            if mu_range == "full":
                weights = self.mu_weights
            elif mu_range in ("positive", "negative"):
                mask = self.positive_mu if mu_range == "positive" else ~self.positive_mu
                sub = self.mu_weights[mask]
                return sub / sub.sum(), mask
            else:
                raise ValueError(
                    f"unknown mu_range {mu_range!r}; expected 'full', 'positive' or 'negative'"
                )
        elif name == "omega":
            weights = self.omega_weights
        else:
            raise ValueError(f"unknown axis {name!r}; expected one of {AXIS_NAMES}")
        return weights / weights.sum(), None

    def average(
        self,
        values: FloatArray,
        axes: Sequence[str],
        over: str | Iterable[str],
        mu_range: str = "full",
    ) -> FloatArray | float:
        """Normalized mean of ``values`` over a subset of its axes.

        ``axes`` names the dimensions of ``values`` in order, drawn from
        ``("t", "x", "mu", "omega")`` (a leading batch dimension may be named
        anything else and is never averaged).  ``over`` selects which of those
        to integrate out; each integral is divided by the measure of its
        domain, so the average of a constant field is that constant over any
        variable set.  ``mu_range`` restricts the mu integral to one
        half-range, normalized by the half measure (it requires "mu" in
        ``over``).

        Returns a scalar when every axis is averaged out.
        """
        axes = tuple(axes)
        if len(axes) != values.ndim:
            raise ValueError(
                f"axes {axes} name {len(axes)} dimensions but values has shape {values.shape}"
            )
        over_names = (over,) if isinstance(over, str) else tuple(over)
        for name in over_names:
            if name not in axes:
                raise ValueError(f"cannot average over {name!r}: not among axes {axes}")
        if mu_range != "full" and "mu" not in over_names:
            raise ValueError("mu_range restriction requires averaging over 'mu'")

        result = values
        live_axes = list(axes)
        for name in over_names:
            dim = live_axes.index(name)
            weights, mask = self._axis_weights(name, mu_range if name == "mu" else "full")
            if mask is not None:
                result = np.compress(mask, result, axis=dim)
            result = np.moveaxis(result, dim, -1) @ weights
            live_axes.pop(dim)
        if result.ndim == 0:
            return float(result)
        return result


def build_grid(config: GridConfig) -> PhaseGrid:
    """Construct the phase-space grid, validating stability constraints.

    Raises ``ValueError`` for nonpositive spacings, an odd number of mu nodes
    (a mu = 0 node would break both upwinding and the specular-reflection
    pairing), omega_min <= 0, and any violated CFL bound.
    """
    for label, value in (("dt", config.dt), ("dx", config.dx), ("domega", config.domega)):
        if not value > 0.0:
            raise ValueError(f"{label} must be positive, got {value}")
    if config.omega_min <= 0.0:
        raise ValueError(f"omega_min must be positive, got {config.omega_min}")
    if config.omega_max <= config.omega_min:
        raise ValueError(
            f"omega_max must exceed omega_min, got [{config.omega_min}, {config.omega_max}]"
        )
    if config.t_end <= config.t_start:
        raise ValueError(f"empty time horizon [{config.t_start}, {config.t_end}]")
    if config.x_end <= config.x_start:
        raise ValueError(f"empty spatial domain [{config.x_start}, {config.x_end}]")
    if config.n_mu < 2 or config.n_mu % 2 != 0:
        raise ValueError(
            f"n_mu must be even and >= 2, got {config.n_mu}; an odd count places a node "
            "at mu = 0, which has no upwind direction and no reflection partner"
        )
    if not config.epsilon > 0.0:
        raise ValueError(f"epsilon must be positive, got {config.epsilon}")

    if config.max_speed is not None:
        limit = config.epsilon * config.dx / config.max_speed
        if config.dt > limit * (1.0 + 1e-12):
            raise ValueError(
                f"CFL violation: dt = {config.dt} exceeds epsilon * dx / max_speed = "
                f"{limit:.6g} (max characteristic speed {config.max_speed:.6g}, "
                f"epsilon {config.epsilon}); reduce dt or refine dx"
            )
    if config.min_relaxation_time is not None:
        guard = 0.5 * config.epsilon**2 * config.min_relaxation_time
        if config.dt > guard * (1.0 + 1e-12):
            raise ValueError(
                f"relaxation-stability violation: dt = {config.dt} exceeds "
                f"0.5 * epsilon^2 * min relaxation time = {guard:.6g}; the explicit "
                "collision update would amplify"
            )

    t_nodes = config.t_start + config.dt * np.arange(
        _node_count(config.t_start, config.t_end, config.dt), dtype=float
    )
    x_nodes = config.x_start + config.dx * np.arange(
        _node_count(config.x_start, config.x_end, config.dx), dtype=float
    )
    omega_nodes = config.omega_min + config.domega * np.arange(
        _node_count(config.omega_min, config.omega_max, config.domega), dtype=float
    )

    mu_nodes, mu_weights = np.polynomial.legendre.leggauss(config.n_mu)
    # Symmetrize so that the reflection pairing mu[i] == -mu[-1 - i] is exact
    # in floating point, not merely up to the quadrature solver's rounding.
    mu_nodes = 0.5 * (mu_nodes - mu_nodes[::-1])
    mu_weights = 0.5 * (mu_weights + mu_weights[::-1])

    grid = PhaseGrid(
        t_nodes=t_nodes,
        x_nodes=x_nodes,
        mu_nodes=mu_nodes,
        mu_weights=mu_weights,
        omega_nodes=omega_nodes,
        t_weights=_trapezoid_weights(t_nodes),
        x_weights=_trapezoid_weights(x_nodes),
        omega_weights=_channel_weights(omega_nodes),
        epsilon=float(config.epsilon),
    )
    logger.debug(
        "built grid: %d t-nodes, %d x-nodes, %d mu-nodes, %d omega-nodes, epsilon=%g",
        grid.n_t, grid.n_x, grid.n_mu, grid.n_omega, grid.epsilon,
    )
    return grid
