"""API key registry: registration, approval, revocation.

Keys are 32-hex-char opaque strings drawn from the deterministic PRNG
(seeded per store plus a counter), so test fixtures can predict them.
Only approved keys authorize requests. The store is a single JSON file
rewritten on change and re-read when its mtime moves, so a CLI process
and a running service can share it.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path

from .rng import Rng, derive_seed

STATUSES = ("pending", "approved", "revoked")


class KeyError_(ValueError):
    pass


@dataclass
class ApiKey:
    key: str
    organization: str
    status: str = "pending"


class KeyStore:
    def __init__(self, path: str | Path, seed: int = 0):
        self.path = Path(path)
        self.seed = seed
        self._lock = threading.Lock()
        self._keys: dict[str, ApiKey] = {}
        self._mtime: float | None = None
        self._refresh()

    def _refresh(self) -> None:
        if not self.path.exists():
            return
        mtime = os.path.getmtime(self.path)
        if mtime == self._mtime:
            return
        data = json.loads(self.path.read_text(encoding="utf-8"))
        self._keys = {
            k["key"]: ApiKey(k["key"], k["organization"], k["status"])
            for k in data["keys"]
        }
        self._mtime = mtime

    def _write(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "keys": [
                {"key": k.key, "organization": k.organization, "status": k.status}
                for k in sorted(self._keys.values(), key=lambda k: k.key)
            ]
        }
        self.path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        self._mtime = os.path.getmtime(self.path)

    def register(self, organization: str) -> ApiKey:
        if not organization.strip():
            raise KeyError_("organization must be nonempty")
        with self._lock:
            self._refresh()
            while True:
                rng = Rng(derive_seed(self.seed, "api_key", len(self._keys)))
                key = f"{rng.next_u64():016x}{rng.next_u64():016x}"
                if key not in self._keys:
                    break
            api_key = ApiKey(key=key, organization=organization, status="pending")
            self._keys[key] = api_key
            self._write()
            return api_key

    def approve(self, key: str) -> ApiKey:
        return self._set_status(key, "approved")

    def revoke(self, key: str) -> ApiKey:
        return self._set_status(key, "revoked")

    def _set_status(self, key: str, status: str) -> ApiKey:
        with self._lock:
            self._refresh()
            if key not in self._keys:
                raise KeyError_(f"unknown API key {key!r}")
            self._keys[key].status = status
            self._write()
            return self._keys[key]

    def get(self, key: str) -> ApiKey | None:
        with self._lock:
            self._refresh()
            return self._keys.get(key)

    def is_approved(self, key: str | None) -> bool:
        if not key:
            return False
        record = self.get(key)
        return record is not None and record.status == "approved"

    def list(self) -> list[ApiKey]:
        with self._lock:
            self._refresh()
            return sorted(self._keys.values(), key=lambda k: k.key)
