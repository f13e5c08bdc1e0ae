"""On-disk cache of Monte Carlo critical values, one JSON file per config."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Callable, Optional

from .errors import InputError
from .montecarlo import CriticalValues, McConfig, null_panel


def config_key(cfg: McConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:24]


class CriticalValuesStore:
    """Critical values keyed by their full :class:`McConfig`.

    The file name is a hash of the config, and the config is stored in the
    file and compared on every read, so a lookup can only ever return the
    artifact computed for exactly that config. Writes are atomic.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, cfg: McConfig) -> Path:
        return self.root / f"{config_key(cfg)}.json"

    def get(self, cfg: McConfig) -> Optional[CriticalValues]:
        path = self.path_for(cfg)
        if not path.exists():
            return None
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"corrupt critical-values file {path}: {exc}") from exc
        if data.get("key") != cfg.to_dict():
            return None
        return CriticalValues.from_dict(data["critical_values"])

    def put(self, cv: CriticalValues) -> Path:
        path = self.path_for(cv.config)
        payload = json.dumps(
            {"key": cv.config.to_dict(), "critical_values": cv.to_dict()}, indent=2, sort_keys=True
        )
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w") as fh:
                fh.write(payload + "\n")
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return path


def fetch_panel(
    cfg: McConfig,
    store: Optional[CriticalValuesStore] = None,
    workers: int = 1,
    compute: Callable[..., dict] = null_panel,
) -> dict[str, CriticalValues]:
    """Critical values for H, H_S and H_L, from the store when possible.

    Values are always round-tripped through their JSON form so that cached
    and freshly computed panels are indistinguishable.
    """
    variants = ("H", "H_S", "H_L")
    if store is not None:
        cached = {v: store.get(cfg.with_variant(v)) for v in variants}
        if all(c is not None for c in cached.values()):
            return cached
    panel = compute(cfg, workers=workers)
    if store is not None:
        for cv in panel.values():
            store.put(cv)
    return {v: CriticalValues.from_dict(json.loads(json.dumps(cv.to_dict()))) for v, cv in panel.items()}
