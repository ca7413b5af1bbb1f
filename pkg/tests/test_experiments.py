import pytest

from rankgame.errors import ValidationError
from rankgame.experiments import Scenario, derive_seed, run_scenario, sweep
from rankgame.game import GameConfig


def canonical(kind="nash_verify", **kw):
    kw.setdefault("game", GameConfig(4, 2, 0.5, (1.0, 0.5), (2, 2)))
    return Scenario(id="t", kind=kind, **kw)


def test_derive_seed_is_stable_and_distinct():
    a = derive_seed(1, "x", 0)
    assert a == derive_seed(1, "x", 0)
    assert len({a, derive_seed(1, "x", 1), derive_seed(1, "y", 0), derive_seed(2, "x", 0)}) == 4


def test_nash_verify_passes():
    rep = run_scenario(canonical())
    assert rep.row("is_equilibrium").value == 1.0
    assert rep.passed
    gains = [r for r in rep.rows if r.metric.startswith("best_response_gain")]
    assert gains and all(r.value <= 1e-9 for r in gains)


def test_rows_cite_invariants():
    for kind in ("nash_verify", "concentration", "utility", "simulate"):
        rep = run_scenario(canonical(kind, n_reps=2000))
        for r in rep.rows:
            assert (r.verdict == "recorded") == (r.invariant is None)
            assert r.verdict in ("pass", "fail", "recorded")


def test_minimax_curve_values():
    s = Scenario(id="c", kind="minimax_curve", outcomes={"sigma": 2.0, "q": 0.5},
                 params={"sample_values": [0.25, 0.5, 1.0, 8.0]})
    rep = run_scenario(s)
    assert [(c.x, c.y) for c in rep.curve] == [(0.25, 1.0), (0.5, 1.0), (1.0, 0.5), (8.0, 0.0625)]


def test_enumeration_k3_is_recorded_only():
    cfg = GameConfig(3, 3, 0.5, (1.0, 0.5, 0.25), (1, 1, 1))
    rep = run_scenario(Scenario(id="e", kind="nash_enumerate", game=cfg))
    assert all(r.verdict == "recorded" for r in rep.rows)


@pytest.mark.parametrize("kind,extra", [
    ("concentration", {}),
    ("approx_nash", {}),
    ("estimator_bounds", {"outcomes": {"profiles": [[5, 5]], "spread": 0.2}}),
    ("data_splitting", {"outcomes": {"split_fractions": [0.5]}}),
    ("utility", {}),
])
def test_determinism(kind, extra):
    s = canonical(kind, n_reps=1500, master_seed=99, **extra)
    assert run_scenario(s).payload() == run_scenario(s).payload()


def test_seed_changes_numbers():
    a = run_scenario(canonical("concentration", n_reps=500, master_seed=1)).payload()
    b = run_scenario(canonical("concentration", n_reps=500, master_seed=2)).payload()
    assert a["rows"] != b["rows"]


def test_validation():
    with pytest.raises(ValidationError):
        run_scenario(Scenario(id="x", kind="nope"))
    with pytest.raises(ValidationError):
        run_scenario(Scenario(id="x", kind="nash_verify"))
    with pytest.raises(ValidationError):
        run_scenario(canonical(bids=[[3, 0, 0, 0], [1, 1, 0, 0]]))


def test_from_dict():
    tree = {
        "scenario": {"id": "s", "kind": "nash_verify", "seed": 5},
        "game": {"n_subjects": 3, "n_admins": 2, "p": 0.5, "discount_ratio": 0.5, "budgets": 2},
    }
    s = Scenario.from_dict(tree)
    assert s.game.budgets == (2, 2) and s.game.discounts == (1.0, 0.5) and s.master_seed == 5
    tree["game"]["typo"] = 1
    with pytest.raises(ValidationError, match="typo"):
        Scenario.from_dict(tree)
    with pytest.raises(ValidationError, match="n_admins"):
        Scenario.from_dict({"scenario": {"id": "s", "kind": "nash_verify"}, "game": {}})


class TestSweep:
    def test_empty(self):
        with pytest.raises(ValidationError):
            sweep(canonical(), "budget", [])

    def test_bad_axis(self):
        with pytest.raises(ValidationError):
            sweep(canonical(), "colour", [1])

    def test_budget_trend(self):
        base = canonical("approx_nash", n_reps=1000, params={"n_per_budget": 2})
        reports = sweep(base, "budget", [1, 2])
        assert len(reports) == 3
        assert [r.scenario_id for r in reports[:2]] == ["t[budget=1]", "t[budget=2]"]
        summary = reports[-1]
        assert summary.kind == "sweep_summary"
        assert any(r.metric.startswith("eta_hat_nonincreasing") for r in summary.rows)

    def test_epsilon_axis(self):
        base = canonical("concentration", n_reps=1000, game=GameConfig(6, 2, 0.5, (1.0, 0.5), (3, 3)))
        reports = sweep(base, "epsilon", [0.25, 0.5, 1.0])
        tails = [[r for r in rep.rows if r.metric.startswith("tail")] for rep in reports[:3]]
        assert all(len(t) == 2 for t in tails)
        assert all(r.bound is not None for t in tails for r in t)
