"""Admin utilities: expected sample value and the capped estimation-error objective.

Sample value utility of admin ``a`` is ``E[S]`` with ``S = sum_r n_r alpha_r**2``;
the estimation-error utility is ``-E[min(1/S, 1)]`` with ``min(1/0, 1) = 1``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from rankgame.errors import ValidationError
from rankgame.game import (
    GameConfig,
    _check_k,
    activation_probability,
    exact_rank_win_probabilities,
    sample_values,
    simulate_ranks,
    validate_bids,
)

ObjectiveKind = Literal["sample_value", "estimation_error"]


@dataclass(frozen=True)
class UtilityEstimate:
    value: float
    std_error: float = 0.0
    n_replications: int = 0
    objective_kind: ObjectiveKind = "sample_value"

    @property
    def exact(self) -> bool:
        return self.n_replications == 0


def _admin_index(admin: int, cfg: GameConfig) -> int:
    if not 0 <= admin < cfg.k:
        raise ValidationError(f"admin index {admin} out of range for k={cfg.k}")
    return admin


def rank_probabilities(bids, admin: int, cfg: GameConfig) -> np.ndarray:
    """(n, k) matrix: probability that ``admin`` wins each rank on each slot."""
    x = validate_bids(bids, cfg, check_budget=False)
    _admin_index(admin, cfg)
    return np.stack([exact_rank_win_probabilities(x[:, t], cfg)[admin] for t in range(cfg.n)])


def exact_sv_utility(bids, admin: int, cfg: GameConfig) -> UtilityEstimate:
    """Expected sample value from the exact per-slot rank probabilities."""
    probs = rank_probabilities(bids, admin, cfg)
    value = float(probs.sum(axis=0) @ cfg.squared_discounts)
    return UtilityEstimate(value)


def printed_formula_sv_utility(bids, admin: int, cfg: GameConfig) -> UtilityEstimate:
    """Literal transcription of the closed combinatorial form of the utility.

    Per slot, ``g_r = PA_a * C_r`` where ``C_r`` averages, over every subset
    ``s`` of ``k - r`` other admins and every ordering of ``s + {a}``, the
    probability that all admins placed before ``a`` fail, normalised by
    ``1 / binom(k-1, k-r)`` and ``1 / (k-r+1)!``. The slot utility is
    ``sum_r alpha_r**2 * g_r * prod_{r' < r} (1 - g_r')``.

    Kept as written for cross-checking; it does not track which admins were
    removed by earlier ranks, so it can disagree with :func:`exact_sv_utility`
    once competitors bid.
    """
    x = validate_bids(bids, cfg, check_budget=False)
    a = _admin_index(admin, cfg)
    k = cfg.k
    _check_k(k)
    others = [j for j in range(k) if j != a]
    total = 0.0
    for t in range(cfg.n):
        pa = activation_probability(x[:, t], cfg.p)
        g = []
        for r in range(1, k + 1):
            acc = 0.0
            for s in itertools.combinations(others, k - r):
                for order in itertools.permutations((*s, a)):
                    prod = 1.0
                    for j in order[: order.index(a)]:
                        prod *= 1.0 - pa[j]
                    acc += prod
            c_r = acc / math.comb(k - 1, k - r) / math.factorial(k - r + 1)
            g.append(pa[a] * c_r)
        not_before = 1.0
        for r in range(k):
            total += cfg.discounts[r] ** 2 * g[r] * not_before
            not_before *= 1.0 - g[r]
    return UtilityEstimate(float(total))


def sample_value_distribution(bids, admin: int, cfg: GameConfig) -> dict[tuple[int, ...], float]:
    """Exact law of the admin's sample profile, keyed by ``(n_1, ..., n_k)``.

    Slots are independent, so the per-slot rank laws are convolved.
    """
    probs = rank_probabilities(bids, admin, cfg)
    k = cfg.k
    dist: dict[tuple[int, ...], float] = {(0,) * k: 1.0}
    for row in probs:
        none = max(0.0, 1.0 - float(row.sum()))
        nxt: dict[tuple[int, ...], float] = {}
        for counts, mass in dist.items():
            if none > 0.0:
                nxt[counts] = nxt.get(counts, 0.0) + mass * none
            for r in range(k):
                if row[r] > 0.0:
                    key = counts[:r] + (counts[r] + 1,) + counts[r + 1 :]
                    nxt[key] = nxt.get(key, 0.0) + mass * row[r]
        dist = nxt
    return dist


def exact_mse_utility(bids, admin: int, cfg: GameConfig) -> UtilityEstimate:
    """``-E[min(1/S, 1)]`` computed from the exact sample-profile law."""
    sq = cfg.squared_discounts
    value = 0.0
    for counts, mass in sample_value_distribution(bids, admin, cfg).items():
        s = float(np.dot(counts, sq))
        value += mass * (1.0 if s <= 0.0 else min(1.0 / s, 1.0))
    return UtilityEstimate(-value, objective_kind="estimation_error")


def _mean_and_se(samples: np.ndarray) -> tuple[float, float]:
    m = len(samples)
    mean = float(samples.mean())
    if m < 2:
        return mean, 0.0
    return mean, float(samples.std(ddof=1) / math.sqrt(m))


def simulated_sample_values(bids, admin: int, cfg: GameConfig, n_reps: int, seed: int) -> np.ndarray:
    _admin_index(admin, cfg)
    ranks = simulate_ranks(bids, cfg, n_reps, seed)
    return sample_values(ranks, admin, cfg.discounts)


def mc_sv_utility(bids, admin: int, cfg: GameConfig, n_reps: int, seed: int) -> UtilityEstimate:
    s = simulated_sample_values(bids, admin, cfg, n_reps, seed)
    mean, se = _mean_and_se(s)
    return UtilityEstimate(mean, se, n_reps, "sample_value")


def capped_inverse(s: np.ndarray) -> np.ndarray:
    """``min(1/S, 1)`` with ``S = 0`` mapped to 1."""
    s = np.asarray(s, dtype=float)
    out = np.ones_like(s)
    pos = s > 0
    out[pos] = np.minimum(1.0 / s[pos], 1.0)
    return out


def mc_mse_utility(bids, admin: int, cfg: GameConfig, n_reps: int, seed: int) -> UtilityEstimate:
    s = simulated_sample_values(bids, admin, cfg, n_reps, seed)
    mean, se = _mean_and_se(capped_inverse(s))
    return UtilityEstimate(-mean, se, n_reps, "estimation_error")


@dataclass(frozen=True)
class JensenGap:
    """``lhs = -E[1/S]`` and ``rhs = -1/E[S]`` on replications with ``S > 0``."""

    lhs: float
    rhs: float
    std_error: float
    zero_fraction: float
    n_used: int

    def __iter__(self):
        yield self.lhs
        yield self.rhs

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 4.0 * self.std_error


def jensen_gap(
    bids,
    admin: int,
    cfg: GameConfig,
    n_reps: int,
    seed: int,
    max_zero_fraction: float = 0.5,
) -> JensenGap:
    """Monte Carlo estimate of both sides of ``-E[1/S] <= -1/E[S]`` (uncapped).

    Replications with ``S = 0`` are dropped and their share is reported; the
    call is refused when that share exceeds ``max_zero_fraction``.
    """
    s = simulated_sample_values(bids, admin, cfg, n_reps, seed)
    positive = s[s > 0]
    zero_fraction = 1.0 - len(positive) / len(s)
    if zero_fraction > max_zero_fraction or len(positive) == 0:
        raise ValidationError(
            f"S = 0 in {zero_fraction:.3f} of replications, above the limit {max_zero_fraction}"
        )
    inv_mean, inv_se = _mean_and_se(1.0 / positive)
    s_mean, s_se = _mean_and_se(positive)
    rhs_se = s_se / s_mean**2  # delta method for 1 / mean
    return JensenGap(
        lhs=-inv_mean,
        rhs=-1.0 / s_mean,
        std_error=math.hypot(inv_se, rhs_se),
        zero_fraction=zero_fraction,
        n_used=len(positive),
    )


def exact_jensen_gap(bids, admin: int, cfg: GameConfig) -> JensenGap:
    """Both Jensen sides from the exact profile law, conditioned on ``S > 0``."""
    sq = cfg.squared_discounts
    mass_pos = e_s = e_inv = 0.0
    for counts, mass in sample_value_distribution(bids, admin, cfg).items():
        s = float(np.dot(counts, sq))
        if s > 0:
            mass_pos += mass
            e_s += mass * s
            e_inv += mass / s
    if mass_pos == 0.0:
        raise ValidationError("S = 0 almost surely")
    return JensenGap(-e_inv / mass_pos, -mass_pos / e_s, 0.0, 1.0 - mass_pos, 0)
