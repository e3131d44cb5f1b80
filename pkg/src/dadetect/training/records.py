"""Run records: JSON-lines step events plus a run metadata file.

Every event carries the full loss-key set (inactive terms logged as 0.0),
so the composition identities can be audited on any run::

    {"step": s, "epoch": e, "losses": {det, cls_det, loc_det, cls_rpn,
     loc_rpn, domain, gan_st, gan_ts, cyc, full, ...}, "lr": {...}}
"""

from __future__ import annotations

import json
import time
from pathlib import Path

LOSS_KEYS = (
    "det",
    "cls_det",
    "loc_det",
    "cls_rpn",
    "loc_rpn",
    "domain",
    "gan_st",
    "gan_ts",
    "cyc",
    "full",
)


class RunRecordWriter:
    """Appends step events to ``events.jsonl`` and finalizes ``meta.json``."""

    def __init__(self, out_dir: Path, meta: dict | None = None):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.events_path = self.out_dir / "events.jsonl"
        self.meta_path = self.out_dir / "meta.json"
        self.meta = dict(meta or {})
        self.meta.setdefault("started_at", time.time())
        self.meta.setdefault("checkpoints", [])
        self._fh = open(self.events_path, "w")
        self._t0 = time.monotonic()

    def log(self, step: int, epoch: int, losses: dict, lr: dict) -> None:
        full_losses = {key: 0.0 for key in LOSS_KEYS}
        full_losses.update({k: float(v) for k, v in losses.items()})
        event = {"step": int(step), "epoch": int(epoch), "losses": full_losses, "lr": dict(lr)}
        self._fh.write(json.dumps(event) + "\n")

    def add_checkpoint(self, path: Path) -> None:
        self.meta["checkpoints"].append(str(path))

    def close(self, **extra) -> None:
        self._fh.close()
        self.meta["wall_clock_sec"] = time.monotonic() - self._t0
        self.meta["finished_at"] = time.time()
        self.meta.update(extra)
        with open(self.meta_path, "w") as fh:
            json.dump(self.meta, fh, indent=1)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close(failed=exc_type is not None)
        return False


def read_events(path: Path) -> list[dict]:
    """Load an events.jsonl file (or the directory containing one)."""
    path = Path(path)
    if path.is_dir():
        path = path / "events.jsonl"
    events = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    return events
