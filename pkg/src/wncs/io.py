"""On-disk formats: world files, agent checkpoints, result tables.

World files are indented JSON so two worlds can be diffed line by line.
Checkpoints are ``.npz`` archives: every array is stored under a
slash-separated key (row-major, shapes preserved) next to a JSON
``meta`` record holding dimensions, hyper-parameters, counters and the
training RNG state. Result tables are CSV with a ``.meta.json`` sidecar.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from . import nn
from .channel import ChannelModel, LinkBudget
from .drl import AgentSpec, Td3Agent, Td3Config, _params
from .env import World
from .lqr import LqrGain
from .plant import SystemMatrices

WORLD_FORMAT = "wncs-world"
AGENT_FORMAT = "wncs-agent"
FORMAT_VERSION = 1


class FormatError(ValueError):
    """A file is not in the expected format or version."""


def world_to_dict(world: World, seed=None) -> dict:
    return {
        "format": WORLD_FORMAT,
        "version": FORMAT_VERSION,
        "seed": seed,
        "dims": dict(zip("KMNL", (int(d) for d in world.dims))),
        "budget": asdict(world.budget),
        "system": world.system.to_dict(),
        "channel": world.channel.to_dict(),
    }


def world_from_dict(d: dict) -> World:
    if d.get("format") != WORLD_FORMAT:
        raise FormatError(f"not a world file (format={d.get('format')!r})")
    if d.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported world file version {d.get('version')!r}")
    world = World(SystemMatrices.from_dict(d["system"]), ChannelModel.from_dict(d["channel"]),
                  LinkBudget(**d["budget"]))
    if tuple(d["dims"][k] for k in "KMNL") != world.dims:
        raise FormatError("stored dims disagree with the stored matrices")
    return world


def save_world(path, world: World, seed=None):
    text = json.dumps(world_to_dict(world, seed), indent=1)
    Path(path).write_text(text + "\n")


def load_world(path) -> World:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    return world_from_dict(d)


# -- checkpoints -------------------------------------------------------------

def _named_nets(agent: Td3Agent):
    out = {}
    for prefix, model in (("actor", agent.actor), ("target_actor", agent.target_actor)):
        for i, net in enumerate(model.nets):
            out[f"{prefix}/{i}"] = net
    for name in ("critic1", "critic2", "target_critic1", "target_critic2"):
        out[name] = getattr(agent, name)
    return out


def _net_arrays(key, net: nn.DenseNet, arrays):
    for j, layer in enumerate(net.layers):
        for pname, p in zip(("W", "b", "alpha", "delta"), layer.params()):
            arrays[f"{key}/{j}/{pname}"] = p


def _opt_arrays(key, opt: nn.AdamState, arrays):
    for i, (m, v) in enumerate(zip(opt.m, opt.v)):
        arrays[f"{key}/m/{i}"] = m
        arrays[f"{key}/v/{i}"] = v


def _opt_meta(opt: nn.AdamState):
    return {"lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps, "t": opt.t}


def save_agent(path, agent: Td3Agent):
    """Write every network, optimizer moment, the replay buffer and RNG state."""
    arrays = {}
    for key, net in _named_nets(agent).items():
        _net_arrays(f"net/{key}", net, arrays)
    opts = {"actor": agent.actor_opt, "critic1": agent.critic1_opt, "critic2": agent.critic2_opt}
    for key, opt in opts.items():
        _opt_arrays(f"opt/{key}", opt, arrays)
    buf = agent.buffer
    for name in ("s", "a", "c", "s2", "mask"):
        arrays[f"buffer/{name}"] = getattr(buf, name)[:buf.size]
    cfg = asdict(agent.cfg)
    cfg["hidden"] = list(agent.cfg.hidden)
    meta = {
        "format": AGENT_FORMAT,
        "version": FORMAT_VERSION,
        "tool_version": __version__,
        "spec": asdict(agent.spec),
        "cfg": cfg,
        "world": world_to_dict(agent.world),
        "lqr_gain": None if agent.lqr_gain is None else agent.lqr_gain.to_dict(),
        "scheduler": agent.scheduler,
        "counters": {"total_steps": agent.total_steps, "updates": agent.updates,
                     "episodes_done": agent.episodes_done},
        "buffer": {"capacity": buf.capacity, "ptr": buf.ptr, "size": buf.size},
        "optimizers": {k: _opt_meta(o) for k, o in opts.items()},
        "rng": agent.rng.bit_generator.state,
    }
    arrays["meta"] = np.array(json.dumps(meta))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_agent(path) -> Td3Agent:
    with np.load(path, allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    if "meta" not in arrays:
        raise FormatError(f"{path}: missing checkpoint metadata")
    meta = json.loads(str(arrays.pop("meta")))
    if meta.get("format") != AGENT_FORMAT or meta.get("version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint format {meta.get('format')!r} "
                          f"v{meta.get('version')!r}")
    cfg_d = dict(meta["cfg"])
    cfg_d["hidden"] = tuple(cfg_d["hidden"])
    known = {f.name for f in fields(Td3Config)}
    cfg = Td3Config(**{k: v for k, v in cfg_d.items() if k in known})
    spec = AgentSpec(**meta["spec"])
    world = world_from_dict(meta["world"])
    gain = None if meta["lqr_gain"] is None else LqrGain.from_dict(meta["lqr_gain"])
    agent = Td3Agent(spec, cfg, world, gain)
    for key, net in _named_nets(agent).items():
        for j, layer in enumerate(net.layers):
            for pname, p in zip(("W", "b", "alpha", "delta"), layer.params()):
                src = arrays[f"net/{key}/{j}/{pname}"]
                if src.shape != p.shape:
                    raise FormatError(f"{key} layer {j} {pname}: shape {src.shape} != {p.shape}")
                p[...] = src
        net.version += 1
    opts = {"actor": agent.actor_opt, "critic1": agent.critic1_opt, "critic2": agent.critic2_opt}
    for key, opt in opts.items():
        for i in range(len(opt.m)):
            opt.m[i][...] = arrays[f"opt/{key}/m/{i}"]
            opt.v[i][...] = arrays[f"opt/{key}/v/{i}"]
        for attr, val in meta["optimizers"][key].items():
            setattr(opt, attr, val)
    buf, bm = agent.buffer, meta["buffer"]
    if bm["capacity"] != buf.capacity:
        raise FormatError("replay buffer capacity disagrees with the stored config")
    for name in ("s", "a", "c", "s2", "mask"):
        getattr(buf, name)[:bm["size"]] = arrays[f"buffer/{name}"]
    buf.ptr, buf.size = bm["ptr"], bm["size"]
    for attr, val in meta["counters"].items():
        setattr(agent, attr, val)
    agent.scheduler = meta["scheduler"]
    agent.rng.bit_generator.state = meta["rng"]
    return agent


def agents_equal(a: Td3Agent, b: Td3Agent) -> bool:
    """Bitwise equality of all parameters, moments and buffers."""
    pa = [p for net in _named_nets(a).values() for p in net.params()]
    pb = [p for net in _named_nets(b).values() for p in net.params()]
    for oa, ob in ((a.actor_opt, b.actor_opt), (a.critic1_opt, b.critic1_opt), (a.critic2_opt, b.critic2_opt)):
        pa += oa.m + oa.v
        pb += ob.m + ob.v
    pa += [a.buffer.s, a.buffer.a, a.buffer.c]
    pb += [b.buffer.s, b.buffer.a, b.buffer.c]
    return len(pa) == len(pb) and all(np.array_equal(x, y) for x, y in zip(pa, pb))


# -- tables ----------------------------------------------------------------

def write_csv(path, rows, columns, metadata=None):
    """CSV plus ``<path>.meta.json``; missing cells are left empty."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore",
                                lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k, "")) for k in columns})
    sidecar = {"tool_version": __version__, "columns": list(columns), "rows": len(rows)}
    sidecar.update(metadata or {})
    path.with_name(path.name + ".meta.json").write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n")
    return path


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


LOG_COLUMNS = ("episode", "cost", "discounted_cost", "mean_td_loss", "actor_grad_norm")
