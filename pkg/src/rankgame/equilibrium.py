"""Equilibrium construction and brute-force verification.

Best responses are found by exhaustive search over an admin's strategy space
(all integer bid vectors with entries in ``0..max_bid`` and total at most the
budget, under-spending included), holding the other admins fixed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Literal

import numpy as np

from rankgame.errors import GuardError, ValidationError
from rankgame.game import (
    GameConfig,
    exact_rank_win_probabilities,
    n_strategies_bound,
    sample_values,
    simulate_ranks,
    validate_bids,
)
from rankgame.utility import (
    exact_mse_utility,
    exact_sv_utility,
    mc_mse_utility,
    sample_value_distribution,
)

Objective = Literal["exact_sv", "mc_mse", "exact_mse"]

EXACT_TOL = 1e-9
MC_TOL_SE = 3.0
STRATEGY_GUARD = 10**6
JOINT_GUARD = 10**7


@dataclass(frozen=True)
class StrategySpace:
    budget: int
    n: int
    cap: int
    full_spend: bool = False

    def __len__(self):
        total = n_strategies_bound(self.n, self.budget, self.cap)
        if self.full_spend and self.budget > 0:
            return total - n_strategies_bound(self.n, self.budget - 1, self.cap)
        return total

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        """Strategies in lexicographic order."""

        def rec(prefix, left, slots):
            if slots == 0:
                if not self.full_spend or left == 0:
                    yield tuple(prefix)
                return
            top = min(self.cap, left)
            low = 0
            if self.full_spend:
                low = max(0, left - self.cap * (slots - 1))
            for b in range(low, top + 1):
                prefix.append(b)
                yield from rec(prefix, left - b, slots - 1)
                prefix.pop()

        yield from rec([], self.budget, self.n)

    def array(self) -> np.ndarray:
        return np.array(list(self), dtype=np.int64).reshape(-1, self.n)


def strategy_space(cfg: GameConfig, admin: int, full_spend: bool = False) -> StrategySpace:
    return StrategySpace(cfg.budgets[admin], cfg.n, cfg.max_bid, full_spend)


def _guard(space_size: int, limit: int, name: str) -> None:
    if space_size > limit:
        raise GuardError(name, f"{name}: {space_size} exceeds the limit {limit}")


def build_canonical_equilibrium(cfg: GameConfig) -> np.ndarray:
    """0/1 bids with full spend and column loads that differ by at most one.

    Admins are processed in order; each puts its units on the currently
    least-loaded slots, lowest index first on ties.
    """
    for a, b in enumerate(cfg.budgets):
        if b > cfg.n:
            raise ValidationError(
                f"admin {a} has budget {b} > n_subjects={cfg.n}; canonical construction needs B <= n"
            )
    x = np.zeros((cfg.k, cfg.n), dtype=np.int64)
    load = np.zeros(cfg.n, dtype=np.int64)
    for a, b in enumerate(cfg.budgets):
        slots = np.lexsort((np.arange(cfg.n), load))[:b]
        x[a, slots] = 1
        load[slots] += 1
    return x


@dataclass
class LemmaCheck:
    ok: bool
    violations: list[str] = field(default_factory=list)

    def __bool__(self):
        return self.ok


def check_lemma_conditions(bids, cfg: GameConfig) -> LemmaCheck:
    """Check 0/1 entries, exhausted budgets and balanced column loads."""
    x = validate_bids(bids, cfg, check_budget=False)
    violations = []
    for a, t in zip(*np.nonzero(x > 1)):
        violations.append(f"entry > 1: admin {a} bids {x[a, t]} on slot {t}")
    spend = x.sum(axis=1)
    for a in range(cfg.k):
        if spend[a] < cfg.budgets[a]:
            violations.append(
                f"budget not exhausted: admin {a} spends {spend[a]} of {cfg.budgets[a]}"
            )
        elif spend[a] > cfg.budgets[a]:
            violations.append(f"budget exceeded: admin {a} spends {spend[a]} of {cfg.budgets[a]}")
    load = x.sum(axis=0)
    if load.max() - load.min() > 1:
        violations.append(
            f"column loads unbalanced: max {load.max()} - min {load.min()} > 1"
        )
    return LemmaCheck(not violations, violations)


def slot_value_table(bids, admin: int, cfg: GameConfig) -> np.ndarray:
    """``table[t, b]``: expected sample value on slot ``t`` if ``admin`` bids ``b`` there."""
    x = validate_bids(bids, cfg, check_budget=False)
    sq = cfg.squared_discounts
    table = np.empty((cfg.n, cfg.max_bid + 1))
    for t in range(cfg.n):
        col = x[:, t].copy()
        for b in range(cfg.max_bid + 1):
            col[admin] = b
            table[t, b] = exact_rank_win_probabilities(col, cfg)[admin] @ sq
    return table


def symmetric_representatives(bids, admin: int, cfg: GameConfig) -> np.ndarray:
    """Strategies up to permutations of slots with identical opponent columns.

    Swapping own bids between two such slots leaves the law of every admin's
    sample profile unchanged, so only bid vectors that are nonincreasing within
    each class need evaluating.
    """
    x = validate_bids(bids, cfg, check_budget=False)
    others = np.delete(x, admin, axis=0)
    classes: dict[tuple[int, ...], list[int]] = {}
    for t in range(cfg.n):
        classes.setdefault(tuple(others[:, t]), []).append(t)
    groups = list(classes.values())
    budget, cap = cfg.budgets[admin], cfg.max_bid

    def nonincreasing(length, left, top):
        if length == 0:
            yield ()
            return
        for b in range(min(top, left), -1, -1):
            for rest in nonincreasing(length - 1, left - b, b):
                yield (b, *rest)

    out = []

    def rec(gi, left, current):
        if gi == len(groups):
            out.append(current.copy())
            return
        slots = groups[gi]
        for vec in nonincreasing(len(slots), left, cap):
            current[slots] = vec
            rec(gi + 1, left - sum(vec), current)
        current[slots] = 0

    rec(0, budget, np.zeros(cfg.n, dtype=np.int64))
    arr = np.array(out, dtype=np.int64)
    # lexicographic order for deterministic tie-breaking
    return arr[np.lexsort(arr.T[::-1])]


@dataclass
class BestResponse:
    admin: int
    strategy: tuple[int, ...]
    gain: float
    current_value: float
    best_value: float
    std_error: float = 0.0
    n_evaluated: int = 0


def _evaluate(objective, profile, admin, cfg, n_reps, seed):
    if objective == "exact_sv":
        return exact_sv_utility(profile, admin, cfg)
    if objective == "exact_mse":
        return exact_mse_utility(profile, admin, cfg)
    if objective == "mc_mse":
        return mc_mse_utility(profile, admin, cfg, n_reps, seed)
    raise ValidationError(f"unknown objective {objective!r}")


def best_response(
    bids,
    admin: int,
    cfg: GameConfig,
    objective: Objective = "exact_sv",
    *,
    n_reps: int = 10_000,
    seed: int = 0,
    symmetric: bool = False,
    guard: int = STRATEGY_GUARD,
) -> BestResponse:
    """Exhaustive best response of ``admin`` against the other rows of ``bids``.

    Ties go to the incumbent strategy, then to the lexicographically smallest
    candidate. Monte Carlo objectives reuse ``seed`` for every candidate
    (common random numbers). ``symmetric=True`` evaluates one representative
    per class of equivalent strategies.
    """
    x = validate_bids(bids, cfg)
    if not 0 <= admin < cfg.k:
        raise ValidationError(f"admin index {admin} out of range for k={cfg.k}")
    incumbent = tuple(int(v) for v in x[admin])
    if symmetric:
        candidates = symmetric_representatives(x, admin, cfg)
        _guard(len(candidates), guard, "strategy_space")
    else:
        space = strategy_space(cfg, admin)
        _guard(len(space), guard, "strategy_space")
        candidates = space.array()

    if objective == "exact_sv":
        table = slot_value_table(x, admin, cfg)
        cols = np.arange(cfg.n)
        values = table[cols, candidates].sum(axis=1)
        current = float(table[cols, x[admin]].sum())
        errors = np.zeros(len(values))
        current_se = 0.0
    else:
        values = np.empty(len(candidates))
        errors = np.empty(len(candidates))
        profile = x.copy()
        for i, cand in enumerate(candidates):
            profile[admin] = cand
            est = _evaluate(objective, profile, admin, cfg, n_reps, seed)
            values[i], errors[i] = est.value, est.std_error
        est = _evaluate(objective, x, admin, cfg, n_reps, seed)
        current, current_se = est.value, est.std_error

    best_i = int(np.argmax(values))  # first maximum = lexicographically smallest
    best_value = float(values[best_i])
    if best_value <= current + 1e-12:
        return BestResponse(admin, incumbent, best_value - current, current, best_value,
                            current_se, len(candidates))
    return BestResponse(
        admin,
        tuple(int(v) for v in candidates[best_i]),
        best_value - current,
        current,
        best_value,
        math.hypot(errors[best_i], current_se),
        len(candidates),
    )


@dataclass
class NashReport:
    is_equilibrium: bool
    responses: list[BestResponse]
    tolerance: str
    epsilon: float | None = None
    eta_hat: float | None = None
    eta_raw: float | None = None
    eta_std_error: float | None = None
    worst_admin: int | None = None
    worst_deviation: tuple[int, ...] | None = None

    @property
    def gains(self) -> list[float]:
        return [r.gain for r in self.responses]


def verify_pure_nash(
    bids,
    cfg: GameConfig,
    objective: Objective = "exact_sv",
    *,
    n_reps: int = 10_000,
    seed: int = 0,
    symmetric: bool = False,
) -> NashReport:
    """Best response for every admin; equilibrium iff no gain beats the tolerance.

    Tolerance: ``1e-9`` absolute for exact objectives, three standard errors of
    the utility difference for Monte Carlo ones.
    """
    responses = [
        best_response(bids, a, cfg, objective, n_reps=n_reps, seed=seed, symmetric=symmetric)
        for a in range(cfg.k)
    ]
    if objective == "mc_mse":
        ok = all(r.gain <= MC_TOL_SE * r.std_error for r in responses)
        tol = f"{MC_TOL_SE:g} std errors"
    else:
        ok = all(r.gain <= EXACT_TOL for r in responses)
        tol = f"{EXACT_TOL:g} absolute"
    return NashReport(ok, responses, tol)


def enumerate_pure_nash(cfg: GameConfig, guard: int = JOINT_GUARD) -> list[np.ndarray]:
    """Every pure equilibrium of the sample-value game, by full enumeration."""
    spaces = [strategy_space(cfg, a) for a in range(cfg.k)]
    sizes = [len(s) for s in spaces]
    _guard(math.prod(sizes), guard, "joint_strategy_space")
    arrays = [s.array() for s in spaces]
    found = []
    for combo in itertools.product(*(range(s) for s in sizes)):
        profile = np.stack([arrays[a][i] for a, i in enumerate(combo)])
        stable = True
        for a in range(cfg.k):
            table = slot_value_table(profile, a, cfg)
            cols = np.arange(cfg.n)
            best = table[cols, arrays[a]].sum(axis=1).max()
            if best > table[cols, profile[a]].sum() + EXACT_TOL:
                stable = False
                break
        if stable:
            found.append(profile)
    return found


def approx_nash_audit(
    bids,
    cfg: GameConfig,
    n_reps: int = 10_000,
    seed: int = 0,
    epsilon: float | None = None,
    *,
    method: Literal["mc", "exact"] = "mc",
    symmetric: bool = True,
    require_sv_nash: bool = True,
) -> NashReport:
    """Smallest ``eta`` making ``bids`` an (epsilon, eta)-approximate equilibrium.

    Under the estimation-error utility, the condition for admin ``a`` and
    deviation ``x'`` is ``f(x) >= (1 + epsilon) f(x') - eta``, so the audit
    reports ``eta_hat = max(0, max_{a, x'} (1 + epsilon) f(x') - f(x))``.
    ``epsilon`` defaults to ``k / sqrt(min budget)``.
    """
    x = validate_bids(bids, cfg)
    if require_sv_nash and not verify_pure_nash(x, cfg, "exact_sv").is_equilibrium:
        raise ValidationError("bids are not an equilibrium of the sample-value game")
    if epsilon is None:
        b_min = min(cfg.budgets)
        if b_min <= 0:
            raise ValidationError("default epsilon needs positive budgets")
        epsilon = cfg.k / math.sqrt(b_min)
    objective = "mc_mse" if method == "mc" else "exact_mse"

    worst = (-math.inf, 0.0, None, None)
    responses = []
    for a in range(cfg.k):
        base = _evaluate(objective, x, a, cfg, n_reps, seed)
        if symmetric:
            candidates = symmetric_representatives(x, a, cfg)
        else:
            space = strategy_space(cfg, a)
            _guard(len(space), STRATEGY_GUARD, "strategy_space")
            candidates = space.array()
        _guard(len(candidates), STRATEGY_GUARD, "strategy_space")
        profile = x.copy()
        best_gain, best_dev, best_se = -math.inf, None, 0.0
        for cand in candidates:
            profile[a] = cand
            dev = _evaluate(objective, profile, a, cfg, n_reps, seed)
            need = (1.0 + epsilon) * dev.value - base.value
            se = math.hypot((1.0 + epsilon) * dev.std_error, base.std_error)
            if need > worst[0]:
                worst = (need, se, a, tuple(int(v) for v in cand))
            if dev.value - base.value > best_gain:
                best_gain = dev.value - base.value
                best_dev = tuple(int(v) for v in cand)
                best_se = math.hypot(dev.std_error, base.std_error)
        responses.append(
            BestResponse(a, best_dev, best_gain, base.value, base.value + best_gain, best_se,
                         len(candidates))
        )
    eta_raw, eta_se, worst_admin, worst_dev = worst
    return NashReport(
        is_equilibrium=eta_raw <= 0.0,
        responses=responses,
        tolerance="(epsilon, eta)-approximate",
        epsilon=epsilon,
        eta_hat=max(0.0, eta_raw),
        eta_raw=eta_raw,
        eta_std_error=eta_se,
        worst_admin=worst_admin,
        worst_deviation=worst_dev,
    )


def _full_spend_or_raise(x: np.ndarray, cfg: GameConfig) -> None:
    spend = x.sum(axis=1)
    short = [a for a in range(cfg.k) if spend[a] != cfg.budgets[a]]
    if short:
        a = short[0]
        raise ValidationError(
            f"concentration needs every budget spent; admin {a} spends {spend[a]} of {cfg.budgets[a]}"
        )


@dataclass(frozen=True)
class ConcentrationResult:
    epsilon: float
    empirical_tail: float
    bound: float
    std_error: float
    expected_s: float
    m: int
    n_reps: int

    @property
    def holds(self) -> bool:
        return self.empirical_tail <= self.bound + 3.0 * self.std_error


def mcdiarmid_bound(epsilon: float, expected_s: float, m: int) -> float:
    """``2 exp(-2 (epsilon E[S])**2 / m)`` for ``m`` slots with bounded differences 1."""
    if m <= 0:
        return 0.0
    return 2.0 * math.exp(-2.0 * (epsilon * expected_s) ** 2 / m)


def concentration_check(
    bids, cfg: GameConfig, n_reps: int, seed: int, epsilon: float, admin: int = 0
) -> ConcentrationResult:
    """Empirical ``P(|S - E[S]| >= epsilon E[S])`` against the McDiarmid bound.

    ``E[S]`` is exact; ``m`` counts the slots where ``admin`` bids.
    """
    x = validate_bids(bids, cfg)
    _full_spend_or_raise(x, cfg)
    expected = exact_sv_utility(x, admin, cfg).value
    m = int((x[admin] > 0).sum())
    s = sample_values(simulate_ranks(x, cfg, n_reps, seed), admin, cfg.discounts)
    # relative slack guards the boundary against floating-point noise in E[S]
    hits = np.abs(s - expected) >= epsilon * expected * (1.0 - 1e-12)
    tail = float(hits.mean())
    se = math.sqrt(tail * (1.0 - tail) / n_reps)
    return ConcentrationResult(epsilon, tail, mcdiarmid_bound(epsilon, expected, m), se, expected,
                               m, n_reps)


def exact_tail_probability(bids, admin: int, cfg: GameConfig, epsilon: float) -> float:
    """Exact ``P(|S - E[S]| >= epsilon E[S])`` from the sample-profile law."""
    dist = sample_value_distribution(bids, admin, cfg)
    sq = cfg.squared_discounts
    values = {c: float(np.dot(c, sq)) for c in dist}
    expected = sum(dist[c] * values[c] for c in dist)
    return float(
        sum(m for c, m in dist.items()
            if abs(values[c] - expected) >= epsilon * expected * (1.0 - 1e-12))
    )


@dataclass(frozen=True)
class LowerBoundCheck:
    admin: int
    expected_s: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.expected_s >= self.bound - EXACT_TOL


def expected_sv_lower_bound_check(bids, cfg: GameConfig) -> list[LowerBoundCheck]:
    """Exact ``E[S]`` against ``B[a] * p / k`` for every admin."""
    check = check_lemma_conditions(bids, cfg)
    if not check:
        raise ValidationError("bids violate the equilibrium conditions: " + "; ".join(check.violations))
    return [
        LowerBoundCheck(a, exact_sv_utility(bids, a, cfg).value, cfg.budgets[a] * cfg.p / cfg.k)
        for a in range(cfg.k)
    ]
