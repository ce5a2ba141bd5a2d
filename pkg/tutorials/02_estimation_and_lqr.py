"""Remote estimation with lossy sensor packets, and the two LQR gains.

Run with ``python3 tutorials/02_estimation_and_lqr.py``.
"""

import numpy as np

from wncs.estimator import initial_state, mkf_update, predict_current
from wncs.lqr import riccati_modified, riccati_standard
from wncs.plant import PlantState, generate_system, measure, step_plant

sys = generate_system(2, 2, 2, rng_seed=1)
rng = np.random.default_rng(1)

# %% Track the plant while only sensor 0 gets through on even slots.
est = initial_state(sys)
plant = PlantState(np.zeros(2), 0)
u_prev = np.zeros(2)
for t in range(12):
    y = measure(sys, plant, rng)
    psi = np.array([1.0, 0.0]) if t % 2 == 0 else np.zeros(2)
    est = mkf_update(sys, est, psi * y, psi, u_prev)
    print(f"t={t:2d}  received={int(psi.sum())}  Tr P_est={np.trace(est.p_est):7.3f}  "
          f"error={np.linalg.norm(est.x_est - plant.x):6.3f}")
    plant = step_plant(sys, plant, u_prev, rng)
# Tr(P) grows on the silent slots and falls back when a packet arrives.

# %% The standard gain assumes every command arrives. The modified gain
# discounts each actuator by its loss rate E_n, and tends to the standard
# gain as the losses go to zero.
std = riccati_standard(sys, beta=0.99)
print("K_std =\n", np.round(std.K_gain, 4))
for e in (0.5, 0.1, 0.01, 0.0):
    mod = riccati_modified(sys, 0.99, np.full(2, e))
    print(f"E={e:5.2f}  |K_mod - K_std| = {np.abs(mod.K_gain - std.K_gain).max():.2e}")

x_hat, _ = predict_current(sys, est, u_prev)
print("command for the current estimate:", std.K_gain @ x_hat)
