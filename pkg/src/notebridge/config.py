"""Server configuration: defaults < config file < environment < flags.

The config file is JSON; its path comes from ``--config`` or the
``NOTEBRIDGE_CONFIG`` environment variable. Individual keys may also be
overridden via ``NOTEBRIDGE_<KEY>`` variables.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional


@dataclass
class Config:
    addr: str = "127.0.0.1:8787"
    data_dir: str = "./data"
    snapshot_every: int = 100
    heartbeat_s: int = 15
    idle_timeout_s: int = 45
    fsync: bool = True

    @classmethod
    def load(cls, config_path: Optional[str] = None, **overrides) -> "Config":
        cfg = cls()
        path = config_path or os.environ.get("NOTEBRIDGE_CONFIG")
        if path:
            data = json.loads(Path(path).read_text("utf-8"))
            for f in fields(cls):
                if f.name in data:
                    setattr(cfg, f.name, data[f.name])
        for f in fields(cls):
            env = os.environ.get(f"NOTEBRIDGE_{f.name.upper()}")
            if env is not None:
                if f.type == "bool":
                    setattr(cfg, f.name, env.lower() in ("1", "true", "yes"))
                elif f.type == "int":
                    setattr(cfg, f.name, int(env))
                else:
                    setattr(cfg, f.name, env)
        for name, value in overrides.items():
            if value is not None:
                setattr(cfg, name, value)
        return cfg
