"""Named-array checkpoints with an embedded JSON record."""

from __future__ import annotations

import json

import numpy as np

_META = "__meta__"


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    if _META in arrays:
        raise ValueError(f"array name {_META!r} is reserved")
    payload = {name: np.asarray(a) for name, a in arrays.items()}
    payload[_META] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data[_META]))
        arrays = {name: data[name].copy() for name in data.files if name != _META}
    return arrays, meta
