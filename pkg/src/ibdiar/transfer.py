"""Remember-Learn-Transfer store for the shared network checkpoint.

The store owns the current checkpoint (the seed network, later its
fine-tuned successors), hands it out for initialisation and records every
commit in an append-only history.  In ``FROZEN`` mode commits are logged but
never replace the current checkpoint.

On disk a store is a directory::

    manifest.json
    checkpoints/<checkpoint-id>.ckpt

with the manifest schema::

    {"schema": "ibdiar.transfer/1", "mode": "INCREMENTAL" | "FROZEN",
     "current": <checkpoint-id> | null,
     "history": [{"recording_id", "checkpoint_id", "epochs",
                  "timestamp", "committed"}, ...]}
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field
from enum import Enum

from .exceptions import TransferStoreError
from .network import ModelCheckpoint, NetworkSpec, SgdConfig, TrainBatchSet, check_compatible, train, xavier_init

MANIFEST_SCHEMA = "ibdiar.transfer/1"


class TransferMode(str, Enum):
    INCREMENTAL = "INCREMENTAL"
    FROZEN = "FROZEN"


@dataclass(frozen=True)
class HistoryEntry:
    recording_id: str
    checkpoint_id: str
    epochs: int
    timestamp: float
    committed: bool = True


@dataclass
class TransferState:
    current: ModelCheckpoint | None = None
    history: list = field(default_factory=list)
    mode: TransferMode = TransferMode.INCREMENTAL
    _archive: dict = field(default_factory=dict, repr=False)

    @property
    def empty(self) -> bool:
        return self.current is None

    def bootstrap_seed(self, recording_id: str, data: TrainBatchSet,
                       cfg: SgdConfig = SgdConfig(), spec: NetworkSpec | None = None,
                       init_seed: int = 0):
        """Train the seed network from Xavier initialisation on the first recording."""
        if not self.empty:
            raise TransferStoreError("seed already exists")
        spec = spec or NetworkSpec(data.inputs.shape[1], output_dim=data.n_classes)
        seed, losses = train(xavier_init(spec, init_seed), data, cfg)
        seed = seed.with_params({}, recordings_seen=1)
        self.current = seed
        self._log(recording_id, seed, len(losses), committed=True)
        return seed, losses

    def checkout(self) -> ModelCheckpoint:
        if self.current is None:
            raise TransferStoreError("no seed available")
        return self.current

    def commit(self, new_ckpt: ModelCheckpoint, recording_id: str, epochs: int | None = None):
        if self.current is None:
            raise TransferStoreError("no seed available")
        check_compatible(self.current, new_ckpt)
        if epochs is None:
            epochs = int(new_ckpt.meta.get("total_epochs", 0)) - int(self.current.meta.get("total_epochs", 0))
        applied = self.mode is TransferMode.INCREMENTAL
        if applied:
            self.current = new_ckpt
        self._log(recording_id, new_ckpt, epochs, committed=applied)
        return self

    def freeze(self) -> None:
        self.mode = TransferMode.FROZEN

    def _log(self, recording_id, ckpt, epochs, committed):
        self._archive[ckpt.id] = ckpt
        self.history.append(HistoryEntry(str(recording_id), ckpt.id, int(epochs), time.time(), committed))

    def checkpoint(self, checkpoint_id: str) -> ModelCheckpoint:
        return self._archive[checkpoint_id]

    def save(self, directory: str | os.PathLike) -> None:
        ckdir = os.path.join(directory, "checkpoints")
        os.makedirs(ckdir, exist_ok=True)
        for cid, ck in self._archive.items():
            path = os.path.join(ckdir, f"{cid}.ckpt")
            if not os.path.exists(path):
                ck.save(path)
        manifest = {
            "schema": MANIFEST_SCHEMA,
            "mode": self.mode.value,
            "current": None if self.current is None else self.current.id,
            "history": [asdict(h) for h in self.history],
        }
        tmp = os.path.join(directory, "manifest.json.tmp")
        with open(tmp, "w") as fh:
            json.dump(manifest, fh, indent=2)
        os.replace(tmp, os.path.join(directory, "manifest.json"))

    @classmethod
    def load(cls, directory: str | os.PathLike) -> "TransferState":
        """Load a store; a directory without a manifest yields an empty store."""
        path = os.path.join(directory, "manifest.json")
        if not os.path.exists(path):
            return cls()
        with open(path) as fh:
            manifest = json.load(fh)
        if manifest.get("schema") != MANIFEST_SCHEMA:
            raise TransferStoreError(f"unsupported manifest schema {manifest.get('schema')!r}")
        state = cls(mode=TransferMode(manifest["mode"]))
        ckdir = os.path.join(directory, "checkpoints")
        for name in sorted(os.listdir(ckdir)) if os.path.isdir(ckdir) else []:
            if name.endswith(".ckpt"):
                ck = ModelCheckpoint.load(os.path.join(ckdir, name))
                state._archive[ck.id] = ck
        state.history = [HistoryEntry(**h) for h in manifest["history"]]
        if manifest["current"] is not None:
            try:
                state.current = state._archive[manifest["current"]]
            except KeyError:
                raise TransferStoreError("manifest names a missing checkpoint") from None
        return state
