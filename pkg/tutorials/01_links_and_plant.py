"""Walk through one wireless link and one unstable plant.

Run with ``python3 tutorials/01_links_and_plant.py``.
"""

import numpy as np

from wncs.channel import LinkBudget, TABLE_GAINS, decode_error_prob, snr
from wncs.plant import generate_system, step_plant, PlantState

# %% A 400-bit packet over 200 channel uses, 23 dBm transmit power, -60 dBm noise.
budget = LinkBudget(bits=400, blocklength=200)
print("rate (bits/use):", budget.rate)

# Each Markov state of a link is one of these gains. The packet error
# probability is close to a step: the weakest gains lose almost every
# packet and the strongest never do.
for g in TABLE_GAINS:
    gamma = snr(1.0, g, budget)
    print(f"gain {g:8.0e}  snr {float(gamma):10.4g}  error prob {float(decode_error_prob(gamma, budget)):.6f}")

# The 50% point sits at snr = 3, i.e. log2(1 + snr) equals the rate.
print("eps(3) =", decode_error_prob(3.0, budget))

# %% A random K=3 plant whose open-loop modes all lie in (1, 1.1).
sys = generate_system(3, 3, 3, rng_seed=0)
print("open-loop eigenvalue magnitudes:", np.sort(np.abs(np.linalg.eigvals(sys.A))))

rng = np.random.default_rng(0)
state = PlantState(np.zeros(3), 0)
norms = []
for t in range(200):
    state = step_plant(sys, state, np.zeros(3), rng)
    norms.append(np.linalg.norm(state.x))
# Without control the state drifts until the +-100 saturation catches it.
print("|x| at t=50, 100, 200:", np.round([norms[49], norms[99], norms[199]], 2))
