"""Potential-outcomes simulation and rank-aware treatment-effect estimation.

Outcome of a won slot ``i`` at rank ``r``::

    Y_i = c0_i + c1_i[r] * T_i + eps_i,   T_i ~ Bernoulli(q_i),   eps_i ~ N(0, sigma**2)

with ``c1_i[r] = alpha_r * (tau + delta_i)`` so the rank-``r`` effect is
``alpha_r * tau`` whenever the ``delta_i`` average to zero at that rank.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from rankgame.errors import NoDataError, ValidationError
from rankgame.game import NO_RANK, SampleProfile, sample_value, slot_seed_sequence

Design = Literal["bernoulli", "complete"]

DIVISION_GUARD = 1e-12


@dataclass
class OutcomesModel:
    baseline: np.ndarray  # (n,)
    effects: np.ndarray  # (n, k); column r-1 holds c1 at rank r
    sigma: float
    treat_prob: np.ndarray  # (n,)
    discounts: tuple[float, ...]
    q: float

    def __post_init__(self):
        self.baseline = np.asarray(self.baseline, dtype=float)
        self.effects = np.asarray(self.effects, dtype=float)
        self.treat_prob = np.asarray(self.treat_prob, dtype=float)
        self.discounts = tuple(float(a) for a in self.discounts)
        n = len(self.baseline)
        if self.effects.shape != (n, len(self.discounts)):
            raise ValidationError(
                f"effects has shape {self.effects.shape}, expected {(n, len(self.discounts))}"
            )
        if self.sigma < 0:
            raise ValidationError("sigma must be nonnegative")
        if not 0.0 < self.q <= 0.5:
            raise ValidationError(f"q must lie in (0, 0.5], got {self.q}")
        if np.any(self.treat_prob < self.q - 1e-12) or np.any(self.treat_prob > 1 - self.q + 1e-12):
            raise ValidationError("treatment probabilities must lie in [q, 1 - q]")

    @property
    def n_slots(self) -> int:
        return len(self.baseline)

    @property
    def k(self) -> int:
        return len(self.discounts)

    @property
    def homogeneous_q(self) -> bool:
        return bool(np.all(self.treat_prob == self.treat_prob[0]))

    @classmethod
    def generate(
        cls,
        ranks: Sequence[int],
        tau: float,
        discounts: Sequence[float],
        *,
        spread: float = 0.0,
        sigma: float = 1.0,
        q: float = 0.5,
        baseline: float = 0.0,
        heterogeneous_q: bool = False,
        seed: int = 0,
    ) -> "OutcomesModel":
        """Instance whose rank-``r`` effect is exactly ``alpha_r * tau``.

        Slot deviations ``delta_i`` are drawn uniformly from ``[-spread, spread]``,
        centred within each rank group of ``ranks`` and shrunk if needed so
        that ``|tau + delta_i| <= 1``.
        """
        if abs(tau) > 1:
            raise ValidationError(f"|tau| must be at most 1, got {tau}")
        ranks = np.asarray(ranks, dtype=np.int64)
        n, k = len(ranks), len(discounts)
        rng = np.random.default_rng(slot_seed_sequence(seed, 0))
        delta = rng.uniform(-spread, spread, size=n) if spread > 0 else np.zeros(n)
        for r in range(k + 1):
            group = ranks == r
            if group.any():
                delta[group] -= delta[group].mean()
        peak = np.max(np.abs(delta)) if n else 0.0
        room = 1.0 - abs(tau)
        if peak > room:
            delta *= room / peak
        effects = np.outer(tau + delta, np.asarray(discounts, dtype=float))
        if heterogeneous_q:
            treat_prob = rng.uniform(q, 1 - q, size=n)
        else:
            treat_prob = np.full(n, q)
        return cls(np.full(n, float(baseline)), effects, sigma, treat_prob, tuple(discounts), q)

    def rank_effect(self, ranks: Sequence[int], r: int) -> float:
        """Average effect ``tau_r`` over the slots held at rank ``r``."""
        ranks = np.asarray(ranks)
        idx = np.nonzero(ranks == r)[0]
        if len(idx) == 0:
            raise NoDataError(f"no slots at rank {r}")
        return float(self.effects[idx, r - 1].mean())

    def first_rank_effect(self, ranks: Sequence[int]) -> float:
        """``tau``: mean of ``c1_i[r_i] / alpha_{r_i}`` over won slots."""
        ranks = np.asarray(ranks)
        idx = np.nonzero(ranks != NO_RANK)[0]
        if len(idx) == 0:
            raise NoDataError("no won slots")
        alphas = np.asarray(self.discounts)[ranks[idx] - 1]
        return float((self.effects[idx, ranks[idx] - 1] / alphas).mean())

    def y_max(self, ranks: Sequence[int]) -> float:
        """``max_i |c0_i + c1_i[r_i]|`` over won slots."""
        ranks = np.asarray(ranks)
        idx = np.nonzero(ranks != NO_RANK)[0]
        if len(idx) == 0:
            return 0.0
        return float(np.max(np.abs(self.baseline[idx] + self.effects[idx, ranks[idx] - 1])))


@dataclass
class OutcomeDataset:
    slot: np.ndarray
    rank: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    treat_prob: np.ndarray

    def __len__(self):
        return len(self.slot)

    def at_rank(self, r: int) -> "OutcomeDataset":
        m = self.rank == r
        return OutcomeDataset(self.slot[m], self.rank[m], self.treatment[m], self.outcome[m],
                              self.treat_prob[m])

    def subset(self, index) -> "OutcomeDataset":
        return OutcomeDataset(self.slot[index], self.rank[index], self.treatment[index],
                              self.outcome[index], self.treat_prob[index])

    def counts(self, k: int) -> SampleProfile:
        return SampleProfile(tuple(int((self.rank == r).sum()) for r in range(1, k + 1)))


@dataclass
class EstimateReport:
    estimate: float
    target: str
    variance_estimate: float
    n_used: dict[int, int] = field(default_factory=dict)
    weights: dict[int, float] = field(default_factory=dict)
    minimax_lower: float | None = None
    ht_variance_upper: float | None = None


def _assign_treatment(rng, treat_prob: np.ndarray, ranks: np.ndarray, n_reps: int,
                      design: Design) -> np.ndarray:
    m = len(treat_prob)
    if design == "bernoulli":
        return (rng.random((n_reps, m)) < treat_prob).astype(np.int8)
    if design != "complete":
        raise ValidationError(f"unknown design {design!r}")
    if m and not np.all(treat_prob == treat_prob[0]):
        raise ValidationError("complete randomization needs a common treatment probability")
    T = np.zeros((n_reps, m), dtype=np.int8)
    for r in np.unique(ranks):
        cols = np.nonzero(ranks == r)[0]
        n_treat = treat_prob[0] * len(cols)
        if abs(n_treat - round(n_treat)) > 1e-9:
            raise ValidationError(
                f"complete randomization needs q * n_r to be an integer (rank {r}: {n_treat})"
            )
        order = np.argsort(rng.random((n_reps, len(cols))), axis=1)
        chosen = cols[order[:, : int(round(n_treat))]]
        np.put_along_axis(T, chosen, 1, axis=1)
    return T


def draw_outcomes(model: OutcomesModel, ranks: Sequence[int], n_reps: int, rng,
                  design: Design = "bernoulli"):
    """Vectorized draw over the won slots: returns ``(slots, ranks, T, Y)``.

    ``T`` and ``Y`` have shape ``(n_reps, m)`` for the ``m`` won slots.
    """
    ranks = np.asarray(ranks, dtype=np.int64)
    if len(ranks) != model.n_slots:
        raise ValidationError(f"rank vector covers {len(ranks)} slots, model has {model.n_slots}")
    if np.any(ranks > model.k) or np.any(ranks < 0):
        raise ValidationError(f"ranks must lie in 0..{model.k}")
    slots = np.nonzero(ranks != NO_RANK)[0]
    r = ranks[slots]
    q = model.treat_prob[slots]
    T = _assign_treatment(rng, q, r, n_reps, design)
    noise = rng.standard_normal((n_reps, len(slots))) * model.sigma
    Y = model.baseline[slots] + model.effects[slots, r - 1] * T + noise
    return slots, r, T, Y


def sample_outcomes(model: OutcomesModel, assignment, admin: int | None = None, seed: int = 0,
                    design: Design = "bernoulli") -> OutcomeDataset:
    """One dataset of ``(rank, T, Y)`` records for the slots an admin won.

    ``assignment`` is a (k, n) rank matrix with ``admin``, or the admin's rank
    vector directly.
    """
    ranks = np.asarray(assignment)
    if ranks.ndim == 2:
        if admin is None:
            raise ValidationError("admin is required with a rank matrix")
        ranks = ranks[admin]
    rng = np.random.default_rng(slot_seed_sequence(seed, 0))
    slots, r, T, Y = draw_outcomes(model, ranks, 1, rng, design)
    return OutcomeDataset(slots, r, T[0], Y[0], model.treat_prob[slots])


def ht_terms(Y, T, q):
    """Per-unit inverse-propensity contrasts ``Y T / q - Y (1 - T) / (1 - q)``."""
    return Y * T / q - Y * (1 - T) / (1 - q)


def ht_estimate_rank(data: OutcomeDataset, r: int) -> EstimateReport:
    """Horvitz-Thompson estimate of the rank-``r`` effect."""
    sub = data.at_rank(r)
    n_r = len(sub)
    if n_r == 0:
        raise NoDataError(f"no data at rank {r}")
    q = sub.treat_prob
    if np.any(q <= 0) or np.any(q >= 1):
        raise ValidationError("treatment probabilities must lie strictly inside (0, 1)")
    terms = ht_terms(sub.outcome, sub.treatment, q)
    var = float(terms.var(ddof=1) / n_r) if n_r > 1 else 0.0
    return EstimateReport(float(terms.mean()), f"tau_{r}", var, {r: n_r})


def r_estimand(tau_r_hat: float, alpha_r: float) -> float:
    """First-rank effect implied by a rank-``r`` estimate; variance scales by ``1/alpha_r**2``."""
    if alpha_r <= DIVISION_GUARD:
        raise ValidationError(f"alpha_r must be positive, got {alpha_r}")
    return tau_r_hat / alpha_r


def inverse_variance_weights(variances: Sequence[float]) -> np.ndarray:
    v = np.asarray(variances, dtype=float)
    if v.size == 0:
        raise ValidationError("need at least one estimate")
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise ValidationError("variances must be positive and finite")
    inv = 1.0 / v
    return inv / inv.sum()


def inverse_variance_combine(estimates: Sequence[tuple[float, float]]) -> EstimateReport:
    """Combine unbiased ``(estimate, variance)`` pairs with weights ``∝ 1/variance``.

    The reported variance is ``1 / sum(1/variance)``.
    """
    if not estimates:
        raise ValidationError("need at least one estimate")
    values = np.array([e for e, _ in estimates], dtype=float)
    variances = np.array([v for _, v in estimates], dtype=float)
    w = inverse_variance_weights(variances)
    return EstimateReport(
        float(w @ values),
        "tau",
        float(1.0 / (1.0 / variances).sum()),
        weights={i + 1: float(wi) for i, wi in enumerate(w)},
    )


def ht_variance_upper_bound(n_r: int, sigma: float, q: float, y_max: float) -> float:
    """Closed-form bound on the mean squared error of the rank-``r`` HT estimate."""
    if n_r < 1:
        raise ValidationError("n_r must be >= 1")
    if not 0.0 < q <= 0.5:
        raise ValidationError(f"q must lie in (0, 0.5], got {q}")
    pq = q * (1.0 - q)
    return (sigma**2 / pq + y_max**2 * (((1.0 - q) ** 2 + q**2) / pq + 2.0)) / n_r


def minimax_lower_bound(profile, discounts: Sequence[float], sigma: float, q: float) -> float:
    """``min(sigma**2 / (16 (1 - q) S), 1)`` with ``S`` the sample value (1 when ``S = 0``)."""
    if not 0.0 < q <= 0.5:
        raise ValidationError(f"q must lie in (0, 0.5], got {q}")
    s = sample_value(profile, discounts)
    return minimax_lower_bound_from_value(s, sigma, q)


def minimax_lower_bound_from_value(s: float, sigma: float, q: float) -> float:
    if s <= 0:
        return 1.0
    return min(sigma**2 / (16.0 * (1.0 - q) * s), 1.0)


def design_q(treat_prob) -> float:
    """Largest ``q`` with every probability in ``[q, 1 - q]``."""
    tp = np.asarray(treat_prob, dtype=float)
    return float(min(tp.min(), 1.0 - tp.max()))


def estimate_tau_pipeline(
    data: OutcomeDataset,
    discounts: Sequence[float],
    *,
    sigma: float | None = None,
    y_max: float | None = None,
    q: float | None = None,
    weighting: Literal["bound", "sample"] = "bound",
) -> EstimateReport:
    """Per-rank HT estimates, rescaled to the first rank and inverse-variance weighted.

    ``weighting="bound"`` plugs the closed-form HT bound (divided by
    ``alpha_r**2``) in as each rank's variance. The bound shares one constant
    across ranks, so the weights are proportional to ``n_r * alpha_r**2`` and do
    not depend on the data; the combination stays unbiased. ``"sample"`` uses
    per-rank sample variances instead, which makes the weights data-dependent
    and the combination biased.
    """
    k = len(discounts)
    q = design_q(data.treat_prob) if q is None and len(data) else q
    present = [r for r in range(1, k + 1) if (data.rank == r).any()]
    if not present:
        raise NoDataError("no data at any rank")
    per_rank = {r: ht_estimate_rank(data, r) for r in present}
    values, plug_in = [], []
    for r in present:
        a = discounts[r - 1]
        values.append(r_estimand(per_rank[r].estimate, a))
        n_r = per_rank[r].n_used[r]
        if weighting == "bound":
            if sigma is not None and y_max is not None:
                plug_in.append(ht_variance_upper_bound(n_r, sigma, q, y_max) / a**2)
            else:
                plug_in.append(1.0 / (n_r * a**2))
        elif weighting == "sample":
            plug_in.append(max(per_rank[r].variance_estimate, DIVISION_GUARD) / a**2)
        else:
            raise ValidationError(f"unknown weighting {weighting!r}")
    w = inverse_variance_weights(plug_in)
    estimate = float(w @ np.asarray(values))
    # variance of the weighted sum using per-rank sample variances
    variance = float(sum(
        wi**2 * per_rank[r].variance_estimate / discounts[r - 1] ** 2 for wi, r in zip(w, present)
    ))
    profile = data.counts(k)
    report = EstimateReport(
        estimate,
        "tau",
        variance,
        n_used={r: per_rank[r].n_used[r] for r in present},
        weights={r: float(wi) for r, wi in zip(present, w)},
    )
    if sigma is not None and q is not None:
        report.minimax_lower = minimax_lower_bound(profile, discounts, sigma, q)
        if y_max is not None:
            report.ht_variance_upper = float(1.0 / sum(
                1.0 / (ht_variance_upper_bound(profile[r - 1], sigma, q, y_max) / discounts[r - 1] ** 2)
                for r in present
            ))
    return report


def naive_alpha_estimate(data_split_r: OutcomeDataset, data_split_1: OutcomeDataset) -> float:
    """Ratio of the HT effect on rank-``r`` data to the HT effect on rank-1 data."""
    if len(data_split_r) == 0 or len(data_split_1) == 0:
        raise NoDataError("both splits must be nonempty")
    ranks = np.unique(data_split_r.rank)
    if len(ranks) != 1:
        raise ValidationError("the rank-r split must hold a single rank")
    tau_r = ht_estimate_rank(data_split_r, int(ranks[0])).estimate
    tau_1 = ht_estimate_rank(data_split_1, 1).estimate
    if abs(tau_1) <= DIVISION_GUARD:
        raise ValidationError("rank-1 effect estimate is zero; the ratio is undefined")
    return tau_r / tau_1


# ---------------------------------------------------------------------------
# Vectorized replications


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0


def simulate_ht(model: OutcomesModel, ranks, r: int, n_reps: int, seed: int,
                design: Design = "bernoulli") -> np.ndarray:
    """HT estimates of the rank-``r`` effect over ``n_reps`` fresh outcome draws."""
    ranks = np.asarray(ranks)
    if not (ranks == r).any():
        raise NoDataError(f"no data at rank {r}")
    rng = np.random.default_rng(slot_seed_sequence(seed, 1))
    slots, rr, T, Y = draw_outcomes(model, ranks, n_reps, rng, design)
    cols = rr == r
    return ht_terms(Y[:, cols], T[:, cols], model.treat_prob[slots][cols]).mean(axis=1)


@dataclass(frozen=True)
class PipelineMSE:
    mse: float
    std_error: float
    mean_estimate: float
    tau: float
    sample_value: float
    minimax_lower: float
    n_reps: int


def simulate_pipeline(model: OutcomesModel, ranks, n_reps: int, seed: int,
                      design: Design = "bernoulli") -> PipelineMSE:
    """Monte Carlo MSE of the bound-weighted pipeline estimator of ``tau``."""
    ranks = np.asarray(ranks)
    rng = np.random.default_rng(slot_seed_sequence(seed, 2))
    slots, rr, T, Y = draw_outcomes(model, ranks, n_reps, rng, design)
    terms = ht_terms(Y, T, model.treat_prob[slots])
    present = [r for r in range(1, model.k + 1) if (rr == r).any()]
    if not present:
        raise NoDataError("no data at any rank")
    alphas = np.array([model.discounts[r - 1] for r in present])
    n_r = np.array([(rr == r).sum() for r in present])
    w = inverse_variance_weights(1.0 / (n_r * alphas**2))
    per_rank = np.stack([terms[:, rr == r].mean(axis=1) for r in present], axis=1) / alphas
    est = per_rank @ w
    tau = model.first_rank_effect(ranks)
    mse, se = _mean_se((est - tau) ** 2)
    profile = SampleProfile(tuple(int((rr == r).sum()) for r in range(1, model.k + 1)))
    s = sample_value(profile, model.discounts)
    return PipelineMSE(mse, se, float(est.mean()), tau, s,
                       minimax_lower_bound_from_value(s, model.sigma, model.q), n_reps)


@dataclass(frozen=True)
class SplitComparison:
    n_alpha: dict[int, int]
    mse_scenario1: float
    mse_scenario2: float
    se_scenario1: float
    se_scenario2: float
    se_difference: float
    n_reps: int

    @property
    def holds(self) -> bool:
        return self.mse_scenario1 <= self.mse_scenario2 + 3.0 * self.se_difference


def split_sizes(profile: Sequence[int], split_fractions: Sequence[float]) -> dict[int, int]:
    """Rank-1 (and rank-``r``) samples set aside to estimate each ``alpha_r``.

    ``split_fractions[j]`` applies to rank ``j + 2`` and is a fraction of ``n_1``.
    """
    n1 = int(profile[0])
    if len(split_fractions) != len(profile) - 1:
        raise ValidationError("need one split fraction per rank beyond the first")
    sizes = {}
    for j, f in enumerate(split_fractions):
        r = j + 2
        if not 0.0 <= f <= 1.0:
            raise ValidationError(f"split fraction for rank {r} must lie in [0, 1]")
        n_alpha = int(math.floor(f * n1 + 1e-9))
        if n_alpha > profile[r - 1]:
            raise ValidationError(f"rank {r} has only {profile[r - 1]} samples, split needs {n_alpha}")
        sizes[r] = n_alpha
    if sum(sizes.values()) > n1:
        raise ValidationError(f"splits use {sum(sizes.values())} rank-1 samples but n_1 = {n1}")
    return sizes


def data_splitting_compare(
    profile: Sequence[int],
    split_fractions: Sequence[float],
    n_reps: int,
    seed: int,
    *,
    tau: float = 0.8,
    discounts: Sequence[float] = (1.0, 0.5),
    sigma: float = 1.0,
    q: float = 0.5,
    baseline: float = 0.0,
    design: Design = "bernoulli",
) -> SplitComparison:
    """MSE of rank-1-only estimation versus estimating the discounts from split data.

    Scenario 1 uses the HT estimate on all ``n_1`` rank-1 samples. Scenario 2
    sets aside ``n'_r`` rank-1 and ``n'_r`` rank-``r`` samples to form
    ``alpha_hat_r = tau_hat_r / tau_hat_1``, rescales the remaining rank-``r``
    estimate by it, and combines with the remaining rank-1 samples using
    weights ``∝ n_r alpha_hat_r**2``. Both scenarios see the same draws;
    ``design="complete"`` randomizes treatment within each block of samples.
    """
    profile = [int(c) for c in profile]
    if len(profile) != len(discounts):
        raise ValidationError("profile and discounts must have the same length")
    if profile[0] < 1:
        raise ValidationError("scenario 1 needs n_1 >= 1")
    sizes = split_sizes(profile, split_fractions)
    # blocks: rank-1 alpha blocks, rank-1 remainder, then per rank alpha and remainder
    blocks: list[tuple[int, str, int]] = []
    for r, m in sizes.items():
        blocks.append((1, f"alpha{r}", m))
    blocks.append((1, "rest", profile[0] - sum(sizes.values())))
    for r in range(2, len(profile) + 1):
        blocks.append((r, "alpha", sizes[r]))
        blocks.append((r, "rest", profile[r - 1] - sizes[r]))
    ranks = np.concatenate([np.full(m, r) for r, _, m in blocks]).astype(np.int64)
    block_id = np.concatenate([np.full(m, i) for i, (_, _, m) in enumerate(blocks)])
    model = OutcomesModel.generate(ranks, tau, discounts, sigma=sigma, q=q, baseline=baseline,
                                   seed=seed)
    rng = np.random.default_rng(slot_seed_sequence(seed, 3))
    # blocks act as strata, so complete randomization balances every block
    slots = np.arange(len(ranks))
    T = _assign_treatment(rng, model.treat_prob, block_id, n_reps, design)
    noise = rng.standard_normal((n_reps, len(ranks))) * sigma
    Y = model.baseline + model.effects[slots, ranks - 1] * T + noise
    terms = ht_terms(Y, T, model.treat_prob)

    def block_mean(i):
        return terms[:, block_id == i].mean(axis=1)

    rank1_cols = ranks == 1
    est1 = terms[:, rank1_cols].mean(axis=1)

    index = {(r, role): i for i, (r, role, _) in enumerate(blocks)}
    est_parts, weight_parts = [], []
    rest1 = blocks[index[(1, "rest")]][2]
    if rest1 > 0:
        est_parts.append(block_mean(index[(1, "rest")]))
        weight_parts.append(np.full(n_reps, float(rest1)))
    for r in range(2, len(profile) + 1):
        m_alpha = sizes[r]
        m_rest = profile[r - 1] - m_alpha
        if m_alpha == 0 or m_rest == 0:
            continue
        tau1_alpha = block_mean(index[(1, f"alpha{r}")])
        taur_alpha = block_mean(index[(r, "alpha")])
        # a vanishing denominator has probability zero under continuous noise
        safe = np.where(np.abs(tau1_alpha) > DIVISION_GUARD, tau1_alpha, np.nan)
        alpha_hat = taur_alpha / safe
        est_parts.append(block_mean(index[(r, "rest")]) / alpha_hat)
        weight_parts.append(m_rest * alpha_hat**2)
    W = np.stack(weight_parts, axis=1)
    E = np.stack(est_parts, axis=1)
    est2 = (W * E).sum(axis=1) / W.sum(axis=1)
    if np.isnan(est2).any():
        raise ValidationError("a rank-1 effect estimate vanished; alpha ratio undefined")

    err1 = (est1 - tau) ** 2
    err2 = (est2 - tau) ** 2
    m1, s1 = _mean_se(err1)
    m2, s2 = _mean_se(err2)
    _, sd = _mean_se(err2 - err1)
    return SplitComparison(sizes, m1, m2, s1, s2, sd, n_reps)
