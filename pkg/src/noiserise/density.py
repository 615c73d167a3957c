"""Greedy schedulers under a per-user interference-density cap.

Capping ``l_i * p_i / x_i`` at the budget for every user makes the
transmit power density independent of the schedule, so scheduling
decouples from power control and reduces to ranking users by weighted
rate at full density.  Any rate-adaptation hook can supply that rate;
Shannon capacity is the default.  Every allocation produced here also
satisfies the whole-band budget, since summing the density cap over
users gives ``sum l_i p_i <= I * sum x_i <= I``.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

from .model import Allocation, UserLink, budget_watts

__all__ = [
    "RateAdaptation",
    "shannon_rate_adaptation",
    "schedule_density",
    "schedule_density_capped",
]

# maps (power density in Watts per unit band fraction, link) to a rate per
# unit bandwidth; must be nondecreasing in the density and 0 at density 0
RateAdaptation = Callable[[float, UserLink], float]


def shannon_rate_adaptation(power_density: float, link: UserLink) -> float:
    """Default rate hook: log(1 + density * e) nats per unit bandwidth."""
    return math.log1p(power_density * link.norm_sinr)


def schedule_density(links: Sequence[UserLink], budget, rate_fn: RateAdaptation = shannon_rate_adaptation) -> Allocation:
    """Single-winner scheduler under the per-user density cap.

    Every user would transmit at density ``I / l_i``, so the user
    maximizing ``weight * rate_fn(I / l_i)`` takes the whole band at
    exactly that density.  Ties go to the lowest index; if every weighted
    rate is zero the lowest-index user is still scheduled (at zero rate),
    so the output shape is always the same.
    """
    I = budget_watts(budget)
    if not links:
        raise ValueError("at least one user required")
    best = 0
    best_score = -math.inf
    for i, link in enumerate(links):
        score = link.weight * rate_fn(I / link.norm_interference, link)
        if score > best_score:
            best = i
            best_score = score
    n = len(links)
    x = [0.0] * n
    p = [0.0] * n
    x[best] = 1.0
    p[best] = I / links[best].norm_interference
    return Allocation(x=x, p=p, objective=max(best_score, 0.0))


def schedule_density_capped(links: Sequence[UserLink], budget) -> Allocation:
    """Cascading variant of the density scheduler honoring max power.

    Users are ranked by weighted full-density Shannon rate; each one takes
    the largest band share its power cap supports at full density
    (``x = Pmax * l / I`` pins ``p`` at Pmax), and the walk stops once the
    band is gone.  If every user is power-capped with band to spare, the
    leftover is spread over the scheduled users proportionally to their
    shares with powers frozen, which drops their density below the cap but
    never violates the budget.  A missing ``max_power`` means no cap.
    """
    I = budget_watts(budget)
    if not links:
        raise ValueError("at least one user required")
    n = len(links)
    order = sorted(
        range(n),
        key=lambda i: (-(links[i].weight * math.log1p(I * links[i].norm_sinr / links[i].norm_interference)), i),
    )
    x = [0.0] * n
    p = [0.0] * n
    remaining = 1.0
    for i in order:
        if remaining <= 0.0:
            break
        link = links[i]
        cap = link.max_power if link.max_power is not None else math.inf
        cap_share = cap * link.norm_interference / I
        if cap_share <= remaining:
            x[i] = cap_share
            p[i] = cap
            remaining -= cap_share
        else:
            x[i] = remaining
            p[i] = remaining * I / link.norm_interference
            remaining = 0.0
    if remaining > 0.0:
        granted = 1.0 - remaining
        if granted > 0.0:
            for i in range(n):
                if x[i] > 0.0:
                    x[i] /= granted
    obj = 0.0
    for i in range(n):
        if x[i] > 0.0 and p[i] > 0.0:
            obj += links[i].weight * x[i] * math.log1p(p[i] * links[i].norm_sinr / x[i])
    return Allocation(x=x, p=p, objective=obj)
