"""Estimating the first-rank effect from data won at several ranks.

Per-rank Horvitz-Thompson estimates are rescaled by the known discounts and
averaged with weights proportional to n_r * alpha_r**2. Its error tracks
1 / sum(n_r alpha_r**2), sitting above the minimax floor. Estimating the
discounts from a held-out split only makes things worse.
"""

import numpy as np

from rankgame import OutcomesModel, data_splitting_compare
from rankgame.causal import simulate_pipeline

discounts, sigma, q = (1.0, 0.5), 2.0, 0.5
print("profile      S      floor    MSE     MSE*S")
for profile in [(10, 10), (2, 50), (50, 2), (40, 40)]:
    ranks = np.repeat([1, 2], profile)
    model = OutcomesModel.generate(ranks, 0.5, discounts, spread=0.2, sigma=sigma, q=q, seed=1)
    res = simulate_pipeline(model, ranks, 20_000, seed=2)
    print(f"{str(profile):10s} {res.sample_value:6.2f}  {res.minimax_lower:.4f}  "
          f"{res.mse:.4f}  {res.mse * res.sample_value:.2f}")

print("\nrank-1 only vs estimated discounts, n = (20, 200)")
for f in (0.1, 0.5, 0.9):
    r = data_splitting_compare((20, 200), (f,), 10_000, seed=3)
    print(f"  split {f}: {r.mse_scenario1:.4f} vs {r.mse_scenario2:.4f}")
