"""Demonstration datasets: generation, line-delimited serialization with a
normalization sidecar, and training-window construction.

One JSON line per episode: {"task", "episode_id", "steps": [{"x": [...],
"a": [...]}], "meta": {...}}. Hidden parameters live only in meta; training
arrays are built from steps alone. The sidecar manifest carries the
per-dimension normalization statistics and a content fingerprint.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import envs
from .diffusion import ConditionedDataset
from .envs import Demonstration
from .normalize import Normalizer

SCHEMA_VERSION = 1


@dataclass
class DemoDataset:
    task: str
    demos: list
    state_norm: Normalizer
    action_norm: Normalizer
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.demos)


def gen_demos(task: str, m: int, seed: int) -> DemoDataset:
    """Generate m expert demonstrations with balanced hidden-parameter draws."""
    if m < 1:
        raise ValueError("m must be >= 1")
    demos = []
    for i in range(m):
        env_seed, demo_seed = np.random.SeedSequence([seed, i]).spawn(2)
        env = envs.make_env(task, env_seed, demo_index=i)
        demos.append(env.expert_demo(np.random.default_rng(demo_seed)))
    states = np.concatenate([d.states for d in demos], axis=0)
    actions = np.concatenate([d.actions for d in demos], axis=0)
    return DemoDataset(
        task=task,
        demos=demos,
        state_norm=Normalizer.fit(states),
        action_norm=Normalizer.fit(actions),
        meta={"m": m, "seed": seed},
    )


def _json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def file_fingerprint(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return "sha256:" + h.hexdigest()


def manifest_path(dataset_path: str) -> str:
    return dataset_path + ".manifest.json"


def save_dataset(path: str, ds: DemoDataset) -> str:
    """Write episodes + sidecar manifest atomically; returns the fingerprint."""
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        for i, demo in enumerate(ds.demos):
            rec = {
                "task": ds.task,
                "episode_id": i,
                "steps": [
                    {"x": x.tolist(), "a": a.tolist()}
                    for x, a in zip(demo.states, demo.actions)
                ],
                "meta": demo.meta,
            }
            f.write(_json_line(rec) + "\n")
    os.replace(tmp, path)
    fp = file_fingerprint(path)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "task": ds.task,
        "m": len(ds.demos),
        "meta": ds.meta,
        "normalization": {
            "state": ds.state_norm.to_dict(),
            "action": ds.action_norm.to_dict(),
        },
        "fingerprint": fp,
    }
    mtmp = manifest_path(path) + ".tmp"
    with open(mtmp, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(mtmp, manifest_path(path))
    return fp


def load_dataset(path: str) -> tuple[DemoDataset, dict]:
    with open(manifest_path(path)) as f:
        manifest = json.load(f)
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported dataset schema in {path}")
    demos = []
    task = manifest["task"]
    with open(path) as f:
        for line in f:
            rec = json.loads(line)
            demos.append(Demonstration(
                task=rec["task"],
                states=np.asarray([s["x"] for s in rec["steps"]], dtype=np.float64),
                actions=np.asarray([s["a"] for s in rec["steps"]], dtype=np.float64),
                meta=rec.get("meta", {}),
            ))
            if rec["task"] != task:
                raise ValueError("mixed tasks in one dataset file")
    ds = DemoDataset(
        task=task,
        demos=demos,
        state_norm=Normalizer.from_dict(manifest["normalization"]["state"]),
        action_norm=Normalizer.from_dict(manifest["normalization"]["action"]),
        meta=manifest.get("meta", {}),
    )
    return ds, manifest


def history_vector(obs_n: np.ndarray, past_pairs: list, history_len: int,
                   d_action: int, d_state: int) -> np.ndarray:
    """Condition vector [x_t, a_{t-1}, x_{t-1}, ..., a_{t-H}, x_{t-H}].

    past_pairs holds (normalized action, normalized state) tuples for all
    executed steps, most recent last; missing steps zero-pad.
    """
    parts = [obs_n]
    for j in range(1, history_len + 1):
        if j <= len(past_pairs):
            a_n, x_n = past_pairs[-j]
            parts.append(a_n)
            parts.append(x_n)
        else:
            parts.append(np.zeros(d_action))
            parts.append(np.zeros(d_state))
    return np.concatenate(parts)


def build_training_arrays(ds: DemoDataset, history_len: int, chunk_len: int) -> dict:
    """Sliding windows over every demo timestep.

    Returns ConditionedDatasets keyed by condition kind: "none" (empty
    condition), "state" (current state), "history" (current state plus H
    past action/state pairs). Chunks past the episode end repeat the last
    action; histories before the start zero-pad.
    """
    targets, st_conds, hi_conds = [], [], []
    for demo in ds.demos:
        xs = ds.state_norm.normalize(demo.states)
        acts = ds.action_norm.normalize(demo.actions)
        t_max = acts.shape[0]
        for t in range(t_max):
            idx = np.minimum(np.arange(t, t + chunk_len), t_max - 1)
            targets.append(acts[idx].ravel())
            st_conds.append(xs[t])
            pairs = [(acts[j], xs[j]) for j in range(max(0, t - history_len), t)]
            hi_conds.append(history_vector(xs[t], pairs, history_len,
                                           acts.shape[1], xs.shape[1]))
    targets = np.asarray(targets)
    n = targets.shape[0]
    return {
        "none": ConditionedDataset(targets, np.zeros((n, 0)), "none"),
        "state": ConditionedDataset(targets, np.asarray(st_conds), "state"),
        "history": ConditionedDataset(targets, np.asarray(hi_conds), "history"),
    }
