"""Declarative scenarios that run the game and estimation checks and emit reports.

All randomness in a scenario comes from ``derive_seed(master_seed, id, i)``
where ``i`` indexes the sub-computation, so a report is reproducible from
``(scenario, master_seed)`` alone.
"""

from __future__ import annotations

import math
import time
import zlib
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable

import numpy as np

from rankgame import __version__
from rankgame.causal import (
    OutcomesModel,
    data_splitting_compare,
    ht_variance_upper_bound,
    minimax_lower_bound_from_value,
    simulate_ht,
    simulate_pipeline,
)
from rankgame.equilibrium import (
    EXACT_TOL,
    approx_nash_audit,
    build_canonical_equilibrium,
    check_lemma_conditions,
    concentration_check,
    enumerate_pure_nash,
    expected_sv_lower_bound_check,
    verify_pure_nash,
)
from rankgame.errors import ValidationError
from rankgame.game import GameConfig, exact_rank_win_probabilities, simulate_ranks, validate_bids
from rankgame.utility import (
    exact_mse_utility,
    exact_sv_utility,
    jensen_gap,
    mc_mse_utility,
    mc_sv_utility,
    printed_formula_sv_utility,
)

KINDS = (
    "simulate",
    "utility",
    "nash_verify",
    "nash_enumerate",
    "approx_nash",
    "concentration",
    "estimator_bounds",
    "data_splitting",
    "minimax_curve",
)
DEFAULT_SEED = 20240611
SWEEP_AXES = ("budget", "epsilon", "p", "n_reps", "sigma", "q", "n_subjects")


def derive_seed(master_seed: int, scenario_id: str, index: int) -> int:
    """64-bit seed for sub-computation ``index`` of scenario ``scenario_id``."""
    ss = np.random.SeedSequence(
        entropy=int(master_seed), spawn_key=(zlib.crc32(scenario_id.encode()), int(index))
    )
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


@dataclass
class Scenario:
    id: str
    kind: str
    game: GameConfig | None = None
    bids: list[list[int]] | None = None
    outcomes: dict[str, Any] = field(default_factory=dict)
    params: dict[str, Any] = field(default_factory=dict)
    n_reps: int = 10_000
    master_seed: int = DEFAULT_SEED
    output_dir: str | None = None

    def validate(self) -> None:
        if not self.id:
            raise ValidationError("scenario id must be nonempty")
        if self.kind not in KINDS:
            raise ValidationError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.n_reps < 1:
            raise ValidationError("n_reps must be >= 1")
        needs_game = self.kind not in ("estimator_bounds", "data_splitting", "minimax_curve")
        if needs_game and self.game is None:
            raise ValidationError(f"kind {self.kind!r} needs a [game] table")
        if self.bids is not None and self.game is not None:
            validate_bids(self.bids, self.game)

    @classmethod
    def from_dict(cls, tree: dict[str, Any]) -> "Scenario":
        """Build from a parsed config tree (``[scenario]``, ``[game]``, ``[outcomes]``, ``[params]``)."""
        try:
            head = dict(tree.get("scenario", {}))
            game_tree = tree.get("game")
            game = None
            bids = None
            if game_tree is not None:
                g = dict(game_tree)
                bids = g.pop("bids", None)
                k = int(g["n_admins"])
                if "discounts" in g:
                    discounts = tuple(g.pop("discounts"))
                else:
                    ratio = float(g.pop("discount_ratio"))
                    discounts = tuple(ratio**r for r in range(k))
                budgets = g.pop("budgets")
                if isinstance(budgets, int):
                    budgets = [budgets] * k
                game = GameConfig(
                    n_subjects=int(g.pop("n_subjects")),
                    n_admins=int(g.pop("n_admins")),
                    p=float(g.pop("p")),
                    discounts=discounts,
                    budgets=tuple(budgets),
                    max_bid=int(g.pop("max_bid", 2)),
                )
                if g:
                    raise ValidationError(f"unknown [game] keys: {sorted(g)}")
            scenario = cls(
                id=str(head["id"]),
                kind=str(head["kind"]),
                game=game,
                bids=bids,
                outcomes=dict(tree.get("outcomes", {})),
                params=dict(tree.get("params", {})),
                n_reps=int(head.get("n_reps", 10_000)),
                master_seed=int(head.get("seed", DEFAULT_SEED)),
                output_dir=head.get("output_dir"),
            )
        except KeyError as exc:
            raise ValidationError(f"missing config key {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"malformed config: {exc}") from None
        scenario.validate()
        return scenario


@dataclass
class MetricRow:
    metric: str
    value: float | None
    std_error: float | None = None
    bound: float | None = None
    verdict: str = "recorded"  # pass | fail | recorded
    invariant: str | None = None


@dataclass
class CurvePoint:
    x: float
    y: float
    y_bound: float | None = None


@dataclass
class RunReport:
    scenario_id: str
    kind: str
    seed: int
    rows: list[MetricRow] = field(default_factory=list)
    curve: list[CurvePoint] = field(default_factory=list)
    wall_clock: float = 0.0
    version: str = __version__

    def add(self, metric, value, std_error=None, bound=None, verdict="recorded", invariant=None):
        if verdict != "recorded" and invariant is None:
            raise ValueError("pass/fail rows must name the invariant they test")
        self.rows.append(MetricRow(metric, _num(value), _num(std_error), _num(bound), verdict,
                                   invariant))

    def check(self, metric, value, ok: bool, invariant: str, std_error=None, bound=None):
        self.add(metric, value, std_error, bound, "pass" if ok else "fail", invariant)

    @property
    def passed(self) -> bool:
        return all(r.verdict != "fail" for r in self.rows)

    def payload(self) -> dict[str, Any]:
        """Everything except timing; identical for identical ``(scenario, seed)``."""
        d = asdict(self)
        d.pop("wall_clock")
        return d

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def row(self, metric: str) -> MetricRow:
        for r in self.rows:
            if r.metric == metric:
                return r
        raise KeyError(metric)


def _num(v):
    if v is None:
        return None
    if isinstance(v, (bool, np.bool_)):
        return 1.0 if v else 0.0
    return float(v)


# ---------------------------------------------------------------------------
# Runners


def _bids(s: Scenario) -> np.ndarray:
    if s.bids is not None:
        return validate_bids(s.bids, s.game)
    return build_canonical_equilibrium(s.game)


def _run_simulate(s: Scenario, rep: RunReport) -> None:
    cfg, x = s.game, _bids(s)
    ranks = simulate_ranks(x, cfg, s.n_reps, derive_seed(s.master_seed, s.id, 0))
    for t in range(cfg.n):
        P = exact_rank_win_probabilities(x[:, t], cfg)
        for a in range(cfg.k):
            for r in range(cfg.k):
                freq = float((ranks[:, a, t] == r + 1).mean())
                se = math.sqrt(P[a, r] * (1 - P[a, r]) / s.n_reps)
                rep.check(f"rank_win[slot={t},admin={a},rank={r + 1}]", freq,
                          abs(freq - P[a, r]) <= 4 * se, "allocation_oracle_equivalence",
                          std_error=se, bound=P[a, r])


def _run_utility(s: Scenario, rep: RunReport) -> None:
    cfg, x = s.game, _bids(s)
    for a in range(cfg.k):
        exact = exact_sv_utility(x, a, cfg).value
        mc = mc_sv_utility(x, a, cfg, s.n_reps, derive_seed(s.master_seed, s.id, 2 * a))
        rep.add(f"exact_sv[admin={a}]", exact)
        rep.check(f"mc_sv[admin={a}]", mc.value, abs(mc.value - exact) <= 4 * mc.std_error,
                  "mc_matches_exact_sv", std_error=mc.std_error, bound=exact)
        rep.add(f"printed_formula_sv[admin={a}]", printed_formula_sv_utility(x, a, cfg).value,
                bound=exact)
        ex_mse = exact_mse_utility(x, a, cfg).value
        mc_mse = mc_mse_utility(x, a, cfg, s.n_reps, derive_seed(s.master_seed, s.id, 2 * a + 1))
        rep.add(f"exact_mse[admin={a}]", ex_mse)
        rep.check(f"mc_mse[admin={a}]", mc_mse.value,
                  -1.0 <= mc_mse.value <= 0.0 and abs(mc_mse.value - ex_mse) <= 4 * mc_mse.std_error,
                  "mse_utility_range", std_error=mc_mse.std_error, bound=ex_mse)


def _run_nash_verify(s: Scenario, rep: RunReport) -> None:
    cfg, x = s.game, _bids(s)
    objective = s.params.get("objective", "exact_sv")
    report = verify_pure_nash(x, cfg, objective, n_reps=s.n_reps,
                              seed=derive_seed(s.master_seed, s.id, 0))
    rep.check("is_equilibrium", report.is_equilibrium, report.is_equilibrium,
              "canonical_equilibrium_is_nash")
    for r in report.responses:
        tol = EXACT_TOL if objective != "mc_mse" else 3 * r.std_error
        rep.check(f"best_response_gain[admin={r.admin}]", r.gain, r.gain <= tol,
                  "canonical_equilibrium_is_nash", std_error=r.std_error, bound=tol)
    shape = check_lemma_conditions(x, cfg)
    rep.add("balanced_full_spend", shape.ok)
    if shape.ok:
        for chk in expected_sv_lower_bound_check(x, cfg):
            rep.check(f"expected_sv[admin={chk.admin}]", chk.expected_s, chk.holds,
                      "expected_sv_lower_bound", bound=chk.bound)


def _run_nash_enumerate(s: Scenario, rep: RunReport) -> None:
    cfg = s.game
    found = enumerate_pure_nash(cfg)
    rep.add("n_equilibria", len(found))
    n_balanced = sum(check_lemma_conditions(x, cfg).ok for x in found)
    if cfg.k == 2:
        rep.check("n_unbalanced_equilibria", len(found) - n_balanced, n_balanced == len(found),
                  "two_admin_uniqueness")
    else:
        # larger k is an open conjecture: record only
        rep.add("n_unbalanced_equilibria", len(found) - n_balanced)
    for i, x in enumerate(found):
        rep.add(f"equilibrium[{i}]={x.tolist()}", check_lemma_conditions(x, cfg).ok)


def _run_approx_nash(s: Scenario, rep: RunReport) -> None:
    cfg, x = s.game, _bids(s)
    report = approx_nash_audit(
        x, cfg, s.n_reps, derive_seed(s.master_seed, s.id, 0),
        epsilon=s.params.get("epsilon"), method=s.params.get("method", "mc"),
    )
    rep.add("epsilon", report.epsilon)
    ok = report.eta_hat is not None and math.isfinite(report.eta_hat) and report.eta_hat >= 0
    rep.check("eta_hat", report.eta_hat, ok, "approx_nash_eta_finite",
              std_error=report.eta_std_error)
    rep.add("eta_raw", report.eta_raw, std_error=report.eta_std_error)
    rep.add("worst_admin", report.worst_admin)
    for r in report.responses:
        rep.add(f"mse_best_gain[admin={r.admin}]", r.gain, std_error=r.std_error)


def _run_concentration(s: Scenario, rep: RunReport) -> None:
    cfg, x = s.game, _bids(s)
    admins = s.params.get("admins", list(range(cfg.k)))
    epsilons = s.params.get("epsilons", [0.25, 0.5, 1.0])
    i = 0
    for a in admins:
        for eps in epsilons:
            c = concentration_check(x, cfg, s.n_reps, derive_seed(s.master_seed, s.id, i), eps,
                                    admin=a)
            i += 1
            rep.check(f"tail[admin={a},epsilon={eps}]", c.empirical_tail, c.holds,
                      "mcdiarmid_concentration", std_error=c.std_error, bound=c.bound)
        try:
            j = jensen_gap(x, a, cfg, s.n_reps, derive_seed(s.master_seed, s.id, 1000 + a))
        except ValidationError:
            rep.add(f"jensen_skipped[admin={a}]", 1.0)
            continue
        rep.check(f"jensen_lhs[admin={a}]", j.lhs, j.holds, "jensen_relation",
                  std_error=j.std_error, bound=j.rhs)
        rep.add(f"jensen_positive_fraction[admin={a}]", 1.0 - j.zero_fraction)


def _outcome_args(s: Scenario) -> dict[str, Any]:
    o = s.outcomes
    return dict(
        tau=float(o.get("tau", 0.5)),
        spread=float(o.get("spread", 0.0)),
        sigma=float(o.get("sigma", 1.0)),
        q=float(o.get("q", 0.5)),
        baseline=float(o.get("baseline", 0.0)),
        heterogeneous_q=bool(o.get("heterogeneous_q", False)),
    )


def _profile_ranks(profile) -> np.ndarray:
    return np.concatenate([np.full(int(c), r + 1) for r, c in enumerate(profile)]).astype(np.int64)


def _run_estimator_bounds(s: Scenario, rep: RunReport) -> None:
    o = s.outcomes
    discounts = tuple(o.get("discounts", (1.0, 0.5)))
    profiles = o.get("profiles", [o.get("profile", [10, 10])])
    args = _outcome_args(s)
    design = o.get("design", "bernoulli")
    for pi, profile in enumerate(profiles):
        ranks = _profile_ranks(profile)
        model = OutcomesModel.generate(ranks, args["tau"], discounts, spread=args["spread"],
                                       sigma=args["sigma"], q=args["q"],
                                       baseline=args["baseline"],
                                       heterogeneous_q=args["heterogeneous_q"],
                                       seed=derive_seed(s.master_seed, s.id, 10 * pi))
        tag = f"profile={list(profile)}"
        y_max = model.y_max(ranks)
        for r in range(1, len(profile) + 1):
            if profile[r - 1] == 0:
                continue
            est = simulate_ht(model, ranks, r, s.n_reps,
                              derive_seed(s.master_seed, s.id, 10 * pi + r), design)
            target = model.rank_effect(ranks, r)
            se = float(est.std(ddof=1) / math.sqrt(len(est)))
            rep.check(f"ht_mean[{tag},rank={r}]", est.mean(), abs(est.mean() - target) <= 3 * se,
                      "ht_unbiased", std_error=se, bound=target)
            mse = ((est - target) ** 2)
            bound = ht_variance_upper_bound(int(profile[r - 1]), args["sigma"], args["q"], y_max)
            mse_se = float(mse.std(ddof=1) / math.sqrt(len(mse)))
            rep.check(f"ht_mse[{tag},rank={r}]", mse.mean(), mse.mean() <= bound,
                      "ht_variance_bound", std_error=mse_se, bound=bound)
        pipe = simulate_pipeline(model, ranks, s.n_reps,
                                 derive_seed(s.master_seed, s.id, 10 * pi + 9), design)
        rep.check(f"pipeline_mse[{tag}]", pipe.mse, pipe.minimax_lower <= pipe.mse,
                  "minimax_sandwich_lower", std_error=pipe.std_error, bound=pipe.minimax_lower)
        rep.add(f"pipeline_mse_times_sample_value[{tag}]", pipe.mse * pipe.sample_value,
                std_error=pipe.std_error * pipe.sample_value)
        rep.curve.append(CurvePoint(pipe.sample_value, pipe.mse, pipe.minimax_lower))


def _run_data_splitting(s: Scenario, rep: RunReport) -> None:
    o = s.outcomes
    profile = o.get("profile", [20, 200])
    fractions = o.get("split_fractions", [[0.1], [0.5], [0.9]])
    args = _outcome_args(s)
    for i, f in enumerate(fractions):
        f = [f] if isinstance(f, (int, float)) else list(f)
        res = data_splitting_compare(
            profile, f, s.n_reps, derive_seed(s.master_seed, s.id, i),
            tau=args["tau"], discounts=tuple(o.get("discounts", (1.0, 0.5))),
            sigma=args["sigma"], q=args["q"], baseline=args["baseline"],
            design=o.get("design", "bernoulli"),
        )
        rep.add(f"mse_scenario1[split={f}]", res.mse_scenario1, std_error=res.se_scenario1)
        rep.check(f"mse_scenario2[split={f}]", res.mse_scenario2, res.holds,
                  "data_splitting_no_gain", std_error=res.se_difference, bound=res.mse_scenario1)


def _run_minimax_curve(s: Scenario, rep: RunReport) -> None:
    o = s.outcomes
    sigma = float(o.get("sigma", 2.0))
    q = float(o.get("q", 0.5))
    values = s.params.get("sample_values") or list(np.geomspace(0.05, 100.0, 60))
    for v in values:
        v = float(v)
        bound = minimax_lower_bound_from_value(v, sigma, q)
        uncapped = sigma**2 / (16.0 * (1.0 - q) * v) if v > 0 else math.inf
        rep.curve.append(CurvePoint(v, bound, uncapped))
    rep.add("sigma", sigma)
    rep.add("q", q)


RUNNERS: dict[str, Callable[[Scenario, RunReport], None]] = {
    "simulate": _run_simulate,
    "utility": _run_utility,
    "nash_verify": _run_nash_verify,
    "nash_enumerate": _run_nash_enumerate,
    "approx_nash": _run_approx_nash,
    "concentration": _run_concentration,
    "estimator_bounds": _run_estimator_bounds,
    "data_splitting": _run_data_splitting,
    "minimax_curve": _run_minimax_curve,
}


def run_scenario(s: Scenario) -> RunReport:
    s.validate()
    rep = RunReport(s.id, s.kind, s.master_seed)
    start = time.perf_counter()
    RUNNERS[s.kind](s, rep)
    rep.wall_clock = time.perf_counter() - start
    return rep


def _with_value(base: Scenario, axis: str, value) -> Scenario:
    sid = f"{base.id}[{axis}={value}]"
    if axis == "n_reps":
        return replace(base, id=sid, n_reps=int(value))
    if axis == "epsilon":
        params = dict(base.params, epsilon=float(value), epsilons=[float(value)])
        return replace(base, id=sid, params=params)
    if axis in ("sigma", "q"):
        return replace(base, id=sid, outcomes=dict(base.outcomes, **{axis: float(value)}))
    if base.game is None:
        raise ValidationError(f"axis {axis!r} needs a [game] table")
    if axis == "budget":
        per = base.params.get("n_per_budget")
        n = int(value) * int(per) if per else base.game.n_subjects
        game = base.game.replace(budgets=(int(value),) * base.game.k, n_subjects=n)
        return replace(base, id=sid, game=game, bids=None)
    if axis == "p":
        return replace(base, id=sid, game=base.game.replace(p=float(value)))
    if axis == "n_subjects":
        return replace(base, id=sid, game=base.game.replace(n_subjects=int(value)), bids=None)
    raise ValidationError(f"axis {axis!r} is not sweepable; choose from {SWEEP_AXES}")


def sweep(base: Scenario, axis: str, values: list) -> list[RunReport]:
    """One report per value, followed by a summary report of trend checks."""
    if axis not in SWEEP_AXES:
        raise ValidationError(f"axis {axis!r} is not sweepable; choose from {SWEEP_AXES}")
    if not values:
        raise ValidationError("sweep needs at least one value")
    scenarios = [_with_value(base, axis, v) for v in values]
    for sc in scenarios:
        sc.validate()
    reports = [run_scenario(sc) for sc in scenarios]
    summary = RunReport(f"{base.id}[sweep:{axis}]", "sweep_summary", base.master_seed)
    for v, rep in zip(values, reports):
        summary.add(f"{axis}={v}:all_pass", rep.passed)
    if base.kind == "approx_nash":
        etas = [(rep.row("eta_hat").value, rep.row("eta_hat").std_error or 0.0) for rep in reports]
        for (e0, s0), (e1, s1), v in zip(etas, etas[1:], values[1:]):
            slack = 3.0 * math.hypot(s0, s1)
            summary.check(f"eta_hat_nonincreasing[{axis}={v}]", e1 - e0, e1 <= e0 + slack,
                          "approx_nash_eta_trend", std_error=math.hypot(s0, s1), bound=slack)
    reports.append(summary)
    return reports
