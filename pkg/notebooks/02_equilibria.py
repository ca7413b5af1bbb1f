"""Balanced 0/1 bidding is stable; piling bids on one slot is not.

We build the balanced profile, confirm no admin can gain by deviating, list
every pure equilibrium of a tiny two-admin game, and audit how far the
balanced profile is from an equilibrium when admins care about estimation
error instead of sample value.
"""

from rankgame import (
    GameConfig,
    approx_nash_audit,
    best_response,
    build_canonical_equilibrium,
    check_lemma_conditions,
    enumerate_pure_nash,
    verify_pure_nash,
)

cfg = GameConfig.geometric(n_subjects=5, n_admins=3, p=0.5, ratio=0.7, budgets=(3, 4, 2))
x = build_canonical_equilibrium(cfg)
print("balanced profile\n", x)
print("column loads", x.sum(axis=0))
rep = verify_pure_nash(x, cfg)
print("equilibrium:", rep.is_equilibrium, "gains", [f"{g:.1e}" for g in rep.gains])

toy = GameConfig(2, 2, 0.5, (1.0, 1.0), (2, 2))
br = best_response([[2, 0], [1, 1]], 0, toy)
print(f"\nadmin 0 at (2, 0) should move to {br.strategy}, gaining {br.gain:.4f}")

small = GameConfig.geometric(3, 2, 0.5, 0.5, (2, 2))
found = enumerate_pure_nash(small)
print(f"\n{len(found)} pure equilibria for k=2, n=3, B=(2, 2):")
for eq in found:
    print(" ", eq.tolist(), "balanced" if check_lemma_conditions(eq, small) else "OTHER")

print("\nestimation-error audit (eta clipped at 0; raw shows the slack)")
for B in (2, 4, 8):
    g = GameConfig(2 * B, 2, 0.5, (1.0, 0.5), (B, B))
    audit = approx_nash_audit(build_canonical_equilibrium(g), g, n_reps=4000, seed=B)
    print(f"  B={B}: epsilon={audit.epsilon:.3f} eta={audit.eta_hat:.4f} raw={audit.eta_raw:.4f}")
    # with no multiplicative slack, eta is the best deviation's raw gain
    zero = approx_nash_audit(build_canonical_equilibrium(g), g, n_reps=4000, seed=B, epsilon=0.0)
    print(f"        epsilon=0: eta={zero.eta_hat:.4f} +- {zero.eta_std_error:.4f}")
