"""File outputs: CSV writers, run manifests, and config hashing.

Every data file starts with a comment line citing the resolved-config hash,
so outputs can be traced to the manifest that produced them.  Data values
are written with 17 significant digits (lossless float64 round trip);
re-running a command from its manifest reproduces the data files byte for
byte.
"""
from __future__ import annotations

import datetime
import hashlib
import json
from pathlib import Path

from . import __version__
from .errors import ConfigError


def format_value(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, (int,)):
        return str(value)
    return str(value)


def config_hash(config: dict) -> str:
    """sha256 of the canonical JSON form of a resolved config."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(path: Path, command: str, config: dict, derived: dict) -> str:
    """Write the run manifest; returns the config hash it records."""
    digest = config_hash(config)
    manifest = {
        "command": command,
        "config": config,
        "derived": derived,
        "config_hash": digest,
        "code_version": __version__,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return digest


def load_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    for key in ("command", "config", "config_hash"):
        if key not in manifest:
            raise ConfigError(f"{path}: manifest missing key {key!r}")
    if config_hash(manifest["config"]) != manifest["config_hash"]:
        raise ConfigError(f"{path}: manifest hash does not match its config")
    return manifest


def write_csv(path: Path, digest: str, header: list, rows) -> None:
    """Write one data CSV with the manifest-hash comment line on top."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_hash: {digest}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")


def write_report(path: Path, digest: str, payload: dict) -> None:
    """JSON-style report sidecar carrying the same config hash."""
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"config_hash": digest, **payload}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")
