"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"AWD3CKPT1"
    u32  entry count
    per entry:
        u8   kind      b"A" float64 array | b"J" UTF-8 JSON document
        u32  name length, name bytes (UTF-8)
        u64  payload length, payload
    array payload: u32 ndim, ndim * u64 dims, prod(dims) '<f8' values

Network parameters and Adam moments are arrays; config, beta, step
counters and bit-generator states (128-bit integers) travel as JSON.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"AWD3CKPT1"
KIND_ARRAY = b"A"
KIND_JSON = b"J"


class CheckpointError(ValueError):
    pass


def _pack_array(a: np.ndarray) -> bytes:
    a = np.asarray(a, dtype="<f8")  # ascontiguousarray would promote 0-d to 1-d
    head = struct.pack("<I", a.ndim) + b"".join(struct.pack("<Q", d) for d in a.shape)
    return head + a.tobytes()


def _unpack_array(payload: bytes) -> np.ndarray:
    (ndim,) = struct.unpack_from("<I", payload, 0)
    shape = struct.unpack_from("<" + "Q" * ndim, payload, 4)
    offset = 4 + 8 * ndim
    n = int(np.prod(shape)) if ndim else 1
    if len(payload) - offset != 8 * n:
        raise CheckpointError("array payload length does not match its shape")
    return np.frombuffer(payload, dtype="<f8", count=n, offset=offset).reshape(shape).astype(np.float64)


def dumps(arrays: dict[str, np.ndarray], documents: dict[str, object]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    entries = [(KIND_ARRAY, k, _pack_array(v)) for k, v in arrays.items()]
    entries += [(KIND_JSON, k, json.dumps(v, sort_keys=True).encode("utf-8"))
                for k, v in documents.items()]
    buf.write(struct.pack("<I", len(entries)))
    for kind, name, payload in entries:
        raw = name.encode("utf-8")
        buf.write(kind)
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<Q", len(payload)))
        buf.write(payload)
    return buf.getvalue()


def loads(data: bytes) -> tuple[dict[str, np.ndarray], dict[str, object]]:
    if not data.startswith(MAGIC):
        raise CheckpointError("not an AWD3 checkpoint (bad magic header)")
    pos = len(MAGIC)
    try:
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        arrays, documents = {}, {}
        for _ in range(count):
            kind = data[pos:pos + 1]
            (nlen,) = struct.unpack_from("<I", data, pos + 1)
            pos += 5
            name = data[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (plen,) = struct.unpack_from("<Q", data, pos)
            pos += 8
            payload = data[pos:pos + plen]
            if len(payload) != plen:
                raise CheckpointError("truncated checkpoint")
            pos += plen
            if kind == KIND_ARRAY:
                arrays[name] = _unpack_array(payload)
            elif kind == KIND_JSON:
                documents[name] = json.loads(payload.decode("utf-8"))
            else:
                raise CheckpointError(f"unknown entry kind {kind!r}")
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from exc
    return arrays, documents


def save(path: Path | str, arrays: dict[str, np.ndarray], documents: dict[str, object]) -> Path:
    path = Path(path)
    path.write_bytes(dumps(arrays, documents))
    return path


def load(path: Path | str):
    return loads(Path(path).read_bytes())


# --- agent round trip ------------------------------------------------------

def agent_payload(agent) -> tuple[dict[str, np.ndarray], dict[str, object]]:
    arrays = {"actor": agent.actor.params, "actor_target": agent.actor_target.params,
              "adam/actor/m": agent.actor_opt.m, "adam/actor/v": agent.actor_opt.v}
    for i, (c, ct, opt) in enumerate(zip(agent.critics, agent.critic_targets, agent.critic_opts)):
        arrays[f"critic{i}"] = c.params
        arrays[f"critic_target{i}"] = ct.params
        arrays[f"adam/critic{i}/m"] = opt.m
        arrays[f"adam/critic{i}/v"] = opt.v
    spec = agent.env_spec
    documents = {
        "config": agent.config.to_dict(),
        "env": {"name": spec.name, "state_dim": spec.state_dim, "action_dim": spec.action_dim,
                "action_bound": spec.action_bound, "time_limit": spec.time_limit,
                "gamma": spec.gamma},
        "state": {"beta": agent.beta, "t": agent.t, "seed": agent.seed,
                  "adam_steps": [agent.actor_opt.step] + [o.step for o in agent.critic_opts]},
        "rng": {name: g.bit_generator.state for name, g in agent.rngs.items()},
    }
    return arrays, documents


def save_agent(path: Path | str, agent) -> Path:
    return save(path, *agent_payload(agent))


def load_agent(path: Path | str):
    """Rebuild an ``Agent`` with parameters, optimiser moments, beta, step and RNG state."""
    from .agents import Agent, AgentConfig
    from .envs import EnvSpec

    arrays, docs = load(path)
    try:
        spec = EnvSpec(**docs["env"])
        agent = Agent(AgentConfig.from_dict(docs["config"]), spec, docs["state"]["seed"])
        agent.actor.load_params(arrays["actor"])
        agent.actor_target.load_params(arrays["actor_target"])
        agent.actor_opt.m[...] = arrays["adam/actor/m"]
        agent.actor_opt.v[...] = arrays["adam/actor/v"]
        steps = docs["state"]["adam_steps"]
        agent.actor_opt.step = int(steps[0])
        for i in range(len(agent.critics)):
            agent.critics[i].load_params(arrays[f"critic{i}"])
            agent.critic_targets[i].load_params(arrays[f"critic_target{i}"])
            agent.critic_opts[i].m[...] = arrays[f"adam/critic{i}/m"]
            agent.critic_opts[i].v[...] = arrays[f"adam/critic{i}/v"]
            agent.critic_opts[i].step = int(steps[i + 1])
        agent.beta = float(docs["state"]["beta"])
        agent.t = int(docs["state"]["t"])
        for name, state in docs["rng"].items():
            agent.rngs[name].bit_generator.state = state
    except KeyError as exc:
        raise CheckpointError(f"checkpoint is missing entry {exc}") from exc
    return agent
