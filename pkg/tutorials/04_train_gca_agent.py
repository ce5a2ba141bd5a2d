"""Train the cascaded-actor agent briefly, save it and evaluate it.

Run with ``python3 tutorials/04_train_gca_agent.py``. A short run (60
episodes) takes a couple of minutes; the benchmarked setting uses 500.
"""

import tempfile
from pathlib import Path

from wncs.drl import AgentPolicy, Td3Config, train
from wncs.env import make_world
from wncs.harness import SchedulerControllerPolicy, evaluate
from wncs.io import load_agent, save_agent
from wncs.lqr import riccati_standard

world = make_world(3, 3, 3, 3, seed=0)
cfg = Td3Config(episodes=60, steps=100, seed=0)


def progress(row):
    if row["episode"] % 10 == 0:
        print(f"episode {row['episode']:3d}  cost {row['cost']:12.1f}")


agent, log = train(world, cfg, "gca", progress=progress)

# %% Checkpoints hold the networks, optimizer moments, replay buffer and RNG,
# so training can resume bit-for-bit.
path = Path(tempfile.mkdtemp()) / "agent.npz"
save_agent(path, agent)
agent = load_agent(path)

rep = evaluate(world, AgentPolicy(agent), episodes=30, steps=100, seed=1)
base = evaluate(world, SchedulerControllerPolicy(world, "random", riccati_standard(world.system, 0.99)),
                episodes=30, steps=100, seed=1)
print(f"GCA agent       {rep.mean_cost:10.0f} +/- {rep.ci_halfwidth:.0f}")
print(f"random + LQR    {base.mean_cost:10.0f} +/- {base.ci_halfwidth:.0f}")
