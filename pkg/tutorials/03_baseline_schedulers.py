"""Compare scheduler + LQR pairs on a small world with common random numbers.

Run with ``python3 tutorials/03_baseline_schedulers.py`` (about half a minute).
"""

import numpy as np

from wncs.channel import count_discrete_actions
from wncs.env import make_world
from wncs.harness import SchedulerControllerPolicy, evaluate
from wncs.lqr import riccati_standard
from wncs.scheduling import allocation_weight, max_weight_matching

# %% Why a learned scheduler cannot just enumerate allocations.
for dims in ((3, 3, 3), (5, 5, 5), (10, 10, 10)):
    print(f"(M,N,L)={dims}: {count_discrete_actions(*dims):,} allocations")

# %% The matching layer picks the heaviest one-device-per-channel assignment.
w = np.array([[0.9, 0.1], [0.8, 0.7], [0.2, 0.3]])
D = max_weight_matching(w)
print("allocation:\n", D, "\nweight:", allocation_weight(D, w))

# %% Every pair sees the same channel, noise and outcome draws per episode.
world = make_world(3, 3, 3, 3, seed=0)
gain = riccati_standard(world.system, 0.99)
print("\nscheduler      mean cost   95% half-width")
for kind in ("random", "round_robin", "aoi_greedy", "csi_greedy"):
    rep = evaluate(world, SchedulerControllerPolicy(world, kind, gain), episodes=30, steps=100, seed=1)
    print(f"{kind:12s} {rep.mean_cost:10.0f} {rep.ci_halfwidth:10.0f}")
# CSI-greedy wins here because packet success is almost a threshold on the
# gain level. On worlds where partial actuation makes A + B*diag(psi)*K
# unstable, every LQR pair can blow up; see the README.
