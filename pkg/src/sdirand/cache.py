"""Disk cache for certified surfaces and their envelopes.

Entries are keyed by a hash of ``(p0, grid axes, solver config)`` and stored
as the usual CSV files with JSON sidecars.  The directory is taken from the
argument, else ``$SDIRAND_CACHE``, else ``~/.cache/sdirand``.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Optional

from .envelope import (
    Gridding,
    SolverConfig,
    build_F_surface,
    read_envelope,
    read_surface_csv,
    write_envelope,
    write_surface_csv,
)

__all__ = ["CACHE_VERSION", "cache_dir", "cache_key", "load_or_build"]

CACHE_VERSION = 1


def cache_dir(path=None) -> Path:
    d = Path(path or os.environ.get("SDIRAND_CACHE") or Path.home() / ".cache" / "sdirand")
    d.mkdir(parents=True, exist_ok=True)
    return d


def cache_key(p0: float, grid: Gridding, cfg: SolverConfig) -> str:
    doc = {"version": CACHE_VERSION, "p0": float(p0), "grid": grid.to_dict(),
           "solver": cfg.to_dict()}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def load_or_build(p0: float, grid: Gridding, cfg: Optional[SolverConfig] = None,
                  directory=None, progress=None):
    """``(surface, envelope, hit)``, building and storing the pair on a miss."""
    cfg = cfg or SolverConfig()
    d = cache_dir(directory)
    key = cache_key(p0, grid, cfg)
    surf_path = d / f"surface_{key}.csv"
    env_path = d / f"envelope_{key}.csv"
    if Path(str(env_path) + ".meta.json").exists() and Path(str(surf_path) + ".meta.json").exists():
        return read_surface_csv(surf_path), read_envelope(env_path), True
    surface, env = build_F_surface(p0, grid, cfg, progress=progress)
    write_surface_csv(surf_path, surface, meta={"cache_key": key})
    # the envelope sidecar is written last and marks the entry complete
    write_envelope(env_path, env, surface, meta={"cache_key": key})
    return surface, env, False
