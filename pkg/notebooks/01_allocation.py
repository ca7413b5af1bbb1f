"""How bids turn into ranks, and what a rank is worth.

Two admins compete for one slot. We compare the exact rank-win matrix with a
simulation, then look at what happens to the expected sample value as the
competitor's bid grows.
"""

import numpy as np

from rankgame import GameConfig, exact_rank_win_probabilities, exact_sv_utility, simulate_ranks
from rankgame.utility import printed_formula_sv_utility

cfg = GameConfig(n_subjects=1, n_admins=2, p=0.5, discounts=(1.0, 0.5), budgets=(2, 2))

P = exact_rank_win_probabilities([1, 1], cfg)
ranks = simulate_ranks([[1], [1]], cfg, 200_000, seed=0)
freq = np.array([[(ranks[:, a, 0] == r + 1).mean() for r in range(2)] for a in range(2)])
print("exact rank-win matrix (rows: admin, cols: rank)\n", P.round(4))
print("simulated\n", freq.round(4))

# A lone bidder who fails at rank 1 gets a second try at rank 2.
solo = exact_rank_win_probabilities([1, 0], cfg)
print("\nlone bidder, bid 1:", solo[0].round(4), "total", solo[0].sum())

print("\nadmin 0 bids 1; expected sample value as admin 1 raises its bid")
for b in range(3):
    v = exact_sv_utility([[1], [b]], 0, cfg).value
    print(f"  competitor bid {b}: {v:.4f}")

# The closed combinatorial form agrees with the process only while nobody
# competes for the same slot.
both = GameConfig(2, 2, 0.5, (1.0, 1.0), (2, 2))
for x in ([[0, 2], [1, 0]], [[1, 1], [1, 1]]):
    e = exact_sv_utility(x, 0, both).value
    f = printed_formula_sv_utility(x, 0, both).value
    print(f"bids {x}: process {e:.4f}  closed form {f:.4f}")
