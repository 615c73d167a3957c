"""Domain types and the stateless link formulas shared by every scheduler.

Conventions used across the package: rates are in nats (natural log;
divide by ``LN2`` for bits), the egress-interference budget ``I`` is a
whole-band power in Watts, and the noise-rise dB target is referenced to
the total in-band noise power ``P_N = N0 * B``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

LN2 = math.log(2.0)

__all__ = [
    "LN2",
    "UserLink",
    "Allocation",
    "NoiseRiseBudget",
    "SolverConfig",
    "budget_watts",
    "shannon_rate",
    "normalized_interference",
    "egress_interference",
    "ingress_interference",
    "noise_rise_budget_from_db",
]


def _check_finite(name, value):
    if math.isnan(value) or math.isinf(value):
        raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class UserLink:
    """Scheduling inputs for one mobile station as seen by its serving cell.

    ``norm_sinr`` (e) is the serving-link gain divided by the total
    noise-plus-interference power in the band, in 1/Watt, so ``p * e`` is
    the term inside the rate log at full band.  ``norm_interference`` (l)
    is the summed channel gain toward all non-serving base stations, i.e.
    interference injected per Watt transmitted.  ``max_power`` is None in
    the interference-limited regime where the budget, not the amplifier,
    caps the transmit power.
    """

    id: int | str
    weight: float
    norm_sinr: float
    norm_interference: float
    max_power: float | None = None

    def __post_init__(self):
        _check_finite("weight", self.weight)
        _check_finite("norm_sinr", self.norm_sinr)
        if self.weight < 0 or self.norm_sinr < 0:
            raise ValueError("weight and norm_sinr must be >= 0")
        l = self.norm_interference
        if not (math.isfinite(l) and l > 0):
            raise ValueError(f"norm_interference must be finite and > 0, got {l!r}")
        if self.max_power is not None and not self.max_power > 0:
            raise ValueError(f"max_power must be positive when given, got {self.max_power!r}")


@dataclass(frozen=True)
class NoiseRiseBudget:
    """Egress-interference cap: the dB target plus its linear value in Watts."""

    target_db: float
    linear_budget: float

    def __post_init__(self):
        if not (math.isfinite(self.linear_budget) and self.linear_budget > 0):
            raise ValueError(f"linear_budget must be finite and > 0, got {self.linear_budget!r}")


def noise_rise_budget_from_db(target_db, n0_density, bandwidth):
    """Convert a noise-rise target in dB to a linear egress budget.

    The reference is the total in-band noise power ``P_N = n0_density *
    bandwidth``; a target of gamma dB then tolerates interference
    ``I = P_N * (10**(gamma/10) - 1)`` before the received noise plus
    interference exceeds gamma over the noise floor.
    """
    if not target_db > 0:
        raise ValueError(f"target_db must be > 0, got {target_db!r}")
    if not n0_density > 0:
        raise ValueError(f"n0_density must be > 0, got {n0_density!r}")
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be > 0, got {bandwidth!r}")
    p_noise = n0_density * bandwidth
    return NoiseRiseBudget(float(target_db), p_noise * (10.0 ** (target_db / 10.0) - 1.0))


def budget_watts(budget):
    """Accept either a :class:`NoiseRiseBudget` or a plain power in Watts."""
    if isinstance(budget, NoiseRiseBudget):
        return budget.linear_budget
    value = float(budget)
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"budget must be a positive power in Watts, got {budget!r}")
    return value


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and iteration limits for the joint solver."""

    tol_bandwidth: float = 1e-9
    tol_convergence: float = 1e-8
    tol_kkt: float = 1e-6
    max_iterations: int = 200
    epsilon_floor: float = 1e-6

    def __post_init__(self):
        for name in ("tol_bandwidth", "tol_convergence", "tol_kkt", "epsilon_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class Allocation:
    """Per-cell scheduling outcome: bandwidth fractions and powers per user.

    ``lambda1``/``lambda2`` are the duals of the egress budget and of the
    bandwidth constraint when produced by the joint solver and None for
    the greedy schedulers.  ``objective`` is the weighted sum rate in nats
    with the bandwidth factor omitted.
    """

    x: list
    p: list
    lambda1: float | None = None
    lambda2: float | None = None
    objective: float = 0.0
    iterations: int = 0
    converged: bool | None = None
    certified: bool | None = None
    kkt_residual: float | None = None
    trace: list | None = None

    def __post_init__(self):
        if len(self.x) != len(self.p):
            raise ValueError("x and p must have the same length")
        for xi, pi in zip(self.x, self.p):
            if xi < 0 or pi < 0:
                raise ValueError("bandwidth fractions and powers must be >= 0")
            if xi == 0 and pi != 0:
                raise ValueError("power assigned to a user holding no bandwidth")


def shannon_rate(x, p, e, bandwidth=1.0):
    """Rate ``B * x * log(1 + p*e/x)`` in nats/s, with rate 0 at x == 0.

    The x == 0 value is the continuous extension (x*log(1+pe/x) -> 0 for
    finite p*e), so a user holding power but no bandwidth delivers nothing
    rather than raising.
    """
    for name, v in (("x", x), ("p", p), ("e", e), ("bandwidth", bandwidth)):
        if math.isnan(v):
            raise ValueError(f"{name} must not be NaN")
    if x < 0 or p < 0 or e < 0:
        raise ValueError("x, p and e must be >= 0")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be > 0")
    if x == 0:
        return 0.0
    return bandwidth * x * math.log1p(p * e / x)


def normalized_interference(serving_gain, downlink_sir):
    """Per-Watt egress interference ``l`` estimated from the downlink SIR.

    By channel reciprocity the gain sum toward all non-serving stations
    equals ``serving_gain / downlink_sir``, so a base station can estimate
    l from its mobiles' ordinary channel-quality reports without any
    inter-cell message exchange.
    """
    if not serving_gain > 0:
        raise ValueError(f"serving_gain must be > 0, got {serving_gain!r}")
    if not downlink_sir > 0:
        raise ValueError(f"downlink_sir must be > 0, got {downlink_sir!r}")
    return serving_gain / downlink_sir


def egress_interference(powers, norm_interferences):
    """Total interference a cell injects into its neighbors: sum of l_i * p_i."""
    if len(powers) != len(norm_interferences):
        raise ValueError("powers and norm_interferences must have the same length")
    total = 0.0
    for p, l in zip(powers, norm_interferences):
        if p < 0:
            raise ValueError("powers must be >= 0")
        total += l * p
    return total


def ingress_interference(deployment, allocations, target_bs):
    """Total in-band interference power received at ``target_bs``.

    Sums gain * power over every transmitting mobile served by the other
    cells; each transmission is assumed spread uniformly over the band so
    a single scalar per station suffices.  ``allocations`` maps each cell
    index to its :class:`Allocation`, with entries ordered like
    ``deployment.members(cell)``.
    """
    n_bs = deployment.n_bs
    if not 0 <= target_bs < n_bs:
        raise ValueError(f"unknown BS id {target_bs!r}")
    gain = deployment.gain_matrix
    total = 0.0
    for k in range(n_bs):
        if k == target_bs:
            continue
        try:
            alloc = allocations[k]
        except (KeyError, IndexError):
            raise ValueError(f"missing allocation for cell {k}") from None
        members = deployment.members(k)
        if len(alloc.p) != len(members):
            raise ValueError(f"allocation for cell {k} does not match its member count")
        for ms, p in zip(members, alloc.p):
            if p > 0:
                total += float(gain[ms, target_bs]) * p
    return total
