"""Result records and the on-disk cache.

A run writes one record directory named <command>-<hash12> under the
cache root (env LRP_CACHE_DIR, else the configured output directory).
Everything is written into a temporary sibling and atomically renamed, so
a crashed run can never masquerade as a cache hit; completeness is the
presence of record.json.  summary.json is fully deterministic (no
timestamps); record.json carries provenance.
"""

from __future__ import annotations

import json
import os
import shutil
import time

from .config import ExperimentConfig
from .errors import ConfigurationError


def _plain(obj):
    """Recursively strip numpy scalar types so json can serialize."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "item") and hasattr(obj, "dtype"):
        return obj.item()
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"),
                      allow_nan=True)


def cache_root(config: ExperimentConfig, out_override=None) -> str:
    env = os.environ.get("LRP_CACHE_DIR")
    return out_override or env or config.out_dir


class RecordStore:
    def __init__(self, root: str):
        self.root = root

    def record_dir(self, config: ExperimentConfig) -> str:
        return os.path.join(self.root, f"{config.command}-{config.config_hash()[:12]}")

    def is_complete(self, config: ExperimentConfig) -> bool:
        return os.path.exists(os.path.join(self.record_dir(config), "record.json"))

    def check_cache(self, config: ExperimentConfig, force: bool) -> str | None:
        """Return the record dir on a clean cache hit, None when a run is
        needed.  A present-but-unusable record refuses without force."""
        rdir = self.record_dir(config)
        if not os.path.exists(rdir):
            return None
        record_path = os.path.join(rdir, "record.json")
        if not os.path.exists(record_path):
            if force:
                shutil.rmtree(rdir)
                return None
            raise ConfigurationError(
                f"incomplete record at {rdir} (crashed run?); rerun with --force"
            )
        with open(record_path) as fh:
            stored = json.load(fh)
        if stored.get("config") != config.canonical_dict():
            if force:
                shutil.rmtree(rdir)
                return None
            raise ConfigurationError(
                f"record at {rdir} was produced by a different config; "
                "rerun with --force to replace it"
            )
        if force:
            shutil.rmtree(rdir)
            return None
        return rdir

    def write(self, config: ExperimentConfig, summary: dict, files: dict,
              rng_accounting: dict) -> str:
        """Write summary.json, the data files, and record.json atomically."""
        from . import __version__

        rdir = self.record_dir(config)
        tmp = rdir + f".tmp-{os.getpid()}"
        if os.path.exists(tmp):
            shutil.rmtree(tmp)
        os.makedirs(tmp)
        with open(os.path.join(tmp, "summary.json"), "w") as fh:
            fh.write(canonical_json(summary))
        for name, text in files.items():
            with open(os.path.join(tmp, name), "w") as fh:
                fh.write(text)
        record = {
            "config": config.canonical_dict(),
            "config_hash": config.config_hash(),
            "version": f"lrplab-{__version__}",
            "created_unix": time.time(),
            "outputs": sorted(["summary.json", *files]),
            "rng": rng_accounting,
        }
        with open(os.path.join(tmp, "record.json"), "w") as fh:
            json.dump(record, fh, indent=2, sort_keys=True)
        if os.path.exists(rdir):
            shutil.rmtree(rdir)
        os.replace(tmp, rdir)
        return rdir

    @staticmethod
    def load_summary(rdir: str) -> dict:
        with open(os.path.join(rdir, "summary.json")) as fh:
            return json.load(fh)

    @staticmethod
    def load_record(rdir: str) -> dict:
        with open(os.path.join(rdir, "record.json")) as fh:
            return json.load(fh)
