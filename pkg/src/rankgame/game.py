"""Game primitives: configuration, bids and the randomized rank-allocation rule.

Every slot is allocated independently. For each rank ``r = 1..k`` the admins
that still hold no rank on the slot are shuffled uniformly at random and, in
that order, each one tries to win ``r`` with its activation probability. The
first success takes the rank; if nobody succeeds the rank stays empty and the
loop moves on. An admin that fails keeps competing for the following ranks.

Ranks are stored 1-based; ``0`` (``NO_RANK``) means no rank was won.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from rankgame.errors import GuardError, ValidationError

NO_RANK = 0
EXACT_K_LIMIT = 6
# Replications per independent RNG stream in the vectorized simulator.
CHUNK_SIZE = 4096


@dataclass(frozen=True)
class GameConfig:
    n_subjects: int
    n_admins: int
    p: float
    discounts: tuple[float, ...]
    budgets: tuple[int, ...]
    max_bid: int = 2

    def __post_init__(self):
        object.__setattr__(self, "discounts", tuple(float(a) for a in self.discounts))
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        self.validate()

    def validate(self) -> None:
        if self.n_subjects < 1:
            raise ValidationError("n_subjects must be a positive integer")
        if self.n_admins < 1:
            raise ValidationError("n_admins must be a positive integer")
        # p = 1 is admitted for deterministic toy games
        if not 0.0 < self.p <= 1.0:
            raise ValidationError(f"relevance p must lie in (0, 1], got {self.p}")
        if len(self.discounts) != self.n_admins:
            raise ValidationError(
                f"discounts has length {len(self.discounts)}, expected n_admins={self.n_admins}"
            )
        if self.discounts[0] != 1.0:
            raise ValidationError(
                f"position-effect assumption violated: discounts[0] (alpha_1) must equal 1, "
                f"got {self.discounts[0]}"
            )
        for r, a in enumerate(self.discounts[1:], start=2):
            # alpha_r = 1 (no position effect) is admitted as the limiting case
            if not 0.0 < a <= 1.0:
                raise ValidationError(
                    f"position-effect assumption violated: alpha_{r} must lie in (0, 1], got {a}"
                )
        if len(self.budgets) != self.n_admins:
            raise ValidationError(
                f"budgets has length {len(self.budgets)}, expected n_admins={self.n_admins}"
            )
        if any(b < 0 for b in self.budgets):
            raise ValidationError("budgets must be nonnegative")
        if self.max_bid < 1:
            raise ValidationError("max_bid must be >= 1")

    @property
    def k(self) -> int:
        return self.n_admins

    @property
    def n(self) -> int:
        return self.n_subjects

    @property
    def squared_discounts(self) -> np.ndarray:
        return np.asarray(self.discounts, dtype=float) ** 2

    def replace(self, **changes) -> "GameConfig":
        fields = dict(
            n_subjects=self.n_subjects,
            n_admins=self.n_admins,
            p=self.p,
            discounts=self.discounts,
            budgets=self.budgets,
            max_bid=self.max_bid,
        )
        fields.update(changes)
        return GameConfig(**fields)

    @classmethod
    def geometric(cls, n_subjects, n_admins, p, ratio, budgets, max_bid=2) -> "GameConfig":
        """Config with discounts ``(1, ratio, ratio**2, ...)``."""
        discounts = tuple(float(ratio) ** r for r in range(n_admins))
        return cls(n_subjects, n_admins, p, discounts, tuple(budgets), max_bid)


def validate_bids(bids, cfg: GameConfig, *, check_budget: bool = True) -> np.ndarray:
    """Return ``bids`` as a (k, n) int array after checking it against ``cfg``."""
    x = np.asarray(bids)
    if x.shape != (cfg.k, cfg.n):
        raise ValidationError(f"bid matrix has shape {x.shape}, expected {(cfg.k, cfg.n)}")
    if not np.issubdtype(x.dtype, np.integer):
        if not np.all(np.equal(np.mod(x, 1), 0)):
            raise ValidationError("bids must be integers")
        x = x.astype(np.int64)
    if np.any(x < 0):
        raise ValidationError("bids must be nonnegative")
    if np.any(x > cfg.max_bid):
        raise ValidationError(f"bid exceeds the per-slot cap max_bid={cfg.max_bid}")
    if check_budget:
        spend = x.sum(axis=1)
        over = [a for a in range(cfg.k) if spend[a] > cfg.budgets[a]]
        if over:
            a = over[0]
            raise ValidationError(
                f"admin {a} spends {int(spend[a])} which exceeds its budget {cfg.budgets[a]}"
            )
    return x.astype(np.int64, copy=False)


def activation_probability(bid, p: float):
    """Chance that ``bid`` units win a single rank attempt: ``1 - (1 - p)**bid``.

    Works elementwise on arrays.
    """
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"p must lie in [0, 1], got {p}")
    b = np.asarray(bid)
    if np.any(b < 0):
        raise ValidationError("bids must be nonnegative")
    out = 1.0 - (1.0 - p) ** b
    return float(out) if out.ndim == 0 else out


def slot_seed_sequence(seed: int, *key: int) -> np.random.SeedSequence:
    """Independent stream for ``(seed, *key)``; identical keys give identical streams."""
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))


def allocate_ranks(bids, cfg: GameConfig, rng_seed: int) -> np.ndarray:
    """Draw one rank assignment, slot by slot, exactly as the allocation rule reads.

    Returns a (k, n) int array of ranks (``NO_RANK`` where nothing was won).
    Slot ``t`` uses the stream ``slot_seed_sequence(rng_seed, t)``.
    """
    x = validate_bids(bids, cfg)
    pa = activation_probability(x, cfg.p)
    ranks = np.full((cfg.k, cfg.n), NO_RANK, dtype=np.int64)
    for t in range(cfg.n):
        rng = np.random.default_rng(slot_seed_sequence(rng_seed, t))
        remaining = list(range(cfg.k))
        for r in range(1, cfg.k + 1):
            order = rng.permutation(remaining)
            for a in order:
                if rng.random() < pa[a, t]:
                    ranks[a, t] = r
                    remaining.remove(a)
                    break
    return ranks


def simulate_ranks(bids, cfg: GameConfig, n_reps: int, seed: int) -> np.ndarray:
    """Vectorized allocation over ``n_reps`` replications.

    Returns an (n_reps, k, n) int8 array of ranks. Equivalent in distribution
    to :func:`allocate_ranks`: within a rank, every remaining admin draws an
    independent success and a uniform priority key; the successful admin with
    the smallest key is the first success of a uniform random ordering.

    Replications are grouped in blocks of ``CHUNK_SIZE``; block ``c`` draws from
    ``slot_seed_sequence(seed, c)``, so the output for a given ``(seed, n_reps)``
    does not depend on how blocks are scheduled.
    """
    if n_reps < 1:
        raise ValidationError("n_reps must be >= 1")
    x = validate_bids(bids, cfg)
    pa = activation_probability(x, cfg.p)
    k, n = cfg.k, cfg.n
    out = np.empty((n_reps, k, n), dtype=np.int8)
    for c, start in enumerate(range(0, n_reps, CHUNK_SIZE)):
        m = min(CHUNK_SIZE, n_reps - start)
        rng = np.random.default_rng(slot_seed_sequence(seed, c))
        ranks = np.zeros((m, k, n), dtype=np.int8)
        for r in range(1, k + 1):
            success = rng.random((m, k, n)) < pa
            keys = rng.random((m, k, n))
            eligible = success & (ranks == NO_RANK)
            keys = np.where(eligible, keys, np.inf)
            winner = np.argmin(keys, axis=1)  # (m, n)
            won = np.isfinite(np.take_along_axis(keys, winner[:, None, :], axis=1))[:, 0, :]
            mi, ti = np.nonzero(won)
            ranks[mi, winner[mi, ti], ti] = r
        out[start : start + m] = ranks
    return out


def _check_k(k: int) -> None:
    if k > EXACT_K_LIMIT:
        raise GuardError(
            "exact_enumeration_limit",
            f"exact rank probabilities need k <= {EXACT_K_LIMIT}, got k={k}",
        )


@lru_cache(maxsize=200_000)
def _rank_win_matrix(pa: tuple[float, ...]) -> np.ndarray:
    k = len(pa)
    P = np.zeros((k, k))
    # probability of each set of admins still unranked when rank r starts
    states = {frozenset(range(k)): 1.0}
    for r in range(k):
        nxt: dict[frozenset, float] = {}
        for remaining, mass in states.items():
            members = sorted(remaining)
            win = dict.fromkeys(members, 0.0)
            perms = list(itertools.permutations(members))
            for order in perms:
                fail = 1.0
                for a in order:
                    win[a] += fail * pa[a]
                    fail *= 1.0 - pa[a]
            nobody = 1.0
            for a in members:
                win[a] /= len(perms)
                nobody *= 1.0 - pa[a]
                P[a, r] += mass * win[a]
                if win[a] > 0.0:
                    key = remaining - {a}
                    nxt[key] = nxt.get(key, 0.0) + mass * win[a]
            if nobody > 0.0:
                nxt[remaining] = nxt.get(remaining, 0.0) + mass * nobody
        states = nxt
    P.setflags(write=False)
    return P


def exact_rank_win_probabilities(column_bids: Sequence[int], cfg: GameConfig) -> np.ndarray:
    """Exact k x k matrix ``P[a, r-1]`` = P(admin ``a`` wins rank ``r``) on one slot.

    Enumerates every rank step, every set of still-unranked admins and every
    ordering of that set. Row sums are at most 1; the remainder is the
    probability of winning nothing.
    """
    bids = [int(b) for b in column_bids]
    if len(bids) != cfg.k:
        raise ValidationError(f"column has {len(bids)} bids, expected k={cfg.k}")
    if any(b < 0 for b in bids):
        raise ValidationError("bids must be nonnegative")
    _check_k(cfg.k)
    pa = tuple(1.0 - (1.0 - cfg.p) ** b for b in bids)
    return _rank_win_matrix(pa).copy()


@dataclass(frozen=True)
class SampleProfile:
    """Counts ``n_r`` of slots won at each rank (index 0 is rank 1)."""

    counts: tuple[int, ...]
    total: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if any(c < 0 for c in self.counts):
            raise ValidationError("profile counts must be nonnegative")
        object.__setattr__(self, "total", sum(self.counts))

    def __len__(self):
        return len(self.counts)

    def __getitem__(self, i):
        return self.counts[i]


def sample_profile(assignment, admin: int | None = None, k: int | None = None) -> SampleProfile:
    """Count the ranks in one admin's assignment.

    ``assignment`` is either a (k, n) rank matrix together with ``admin``, or
    a single admin's rank vector (``None``/0 meaning no rank) together with ``k``.
    """
    arr = np.asarray(
        [NO_RANK if v is None else v for v in assignment] if admin is None else assignment,
        dtype=np.int64,
    )
    if admin is not None:
        if arr.ndim != 2:
            raise ValidationError("expected a (k, n) rank matrix when admin is given")
        k = arr.shape[0] if k is None else k
        row = arr[admin]
    else:
        if k is None:
            raise ValidationError("k is required for a single rank vector")
        row = arr
    if np.any(row < 0) or np.any(row > k):
        raise ValidationError(f"ranks must lie in 0..{k}")
    counts = np.bincount(row, minlength=k + 1)[1:]
    return SampleProfile(tuple(int(c) for c in counts))


def sample_value(profile, discounts: Sequence[float]) -> float:
    """``sum_r n_r * alpha_r**2``."""
    counts = profile.counts if isinstance(profile, SampleProfile) else tuple(profile)
    if len(counts) != len(discounts):
        raise ValidationError(
            f"profile length {len(counts)} does not match {len(discounts)} discounts"
        )
    return float(sum(c * float(a) ** 2 for c, a in zip(counts, discounts)))


def sample_values(ranks: np.ndarray, admin: int, discounts: Sequence[float]) -> np.ndarray:
    """Sample value of ``admin`` for every replication of a simulated rank array."""
    weights = np.concatenate([[0.0], np.asarray(discounts, dtype=float) ** 2])
    return weights[ranks[:, admin, :].astype(np.int64)].sum(axis=1)


def check_rank_exclusivity(ranks: np.ndarray) -> bool:
    """True when no rank value appears twice on the same slot."""
    r = np.asarray(ranks)
    if r.ndim == 2:
        r = r[None]
    k = r.shape[1]
    for rank in range(1, k + 1):
        if np.any((r == rank).sum(axis=1) > 1):
            return False
    return True


def n_strategies_bound(n: int, budget: int, cap: int) -> int:
    """Number of integer vectors with entries in ``0..cap`` and sum ``<= budget``."""
    # coefficient extraction over the bounded-composition generating function
    ways = [1] + [0] * budget
    for _ in range(n):
        nxt = [0] * (budget + 1)
        for s, w in enumerate(ways):
            if w:
                for b in range(min(cap, budget - s) + 1):
                    nxt[s + b] += w
        ways = nxt
    return sum(ways)
