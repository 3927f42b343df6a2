"""Run manifests and configuration resolution for reproducible experiments.

A manifest records everything needed to reproduce a run byte-for-byte: the
fully resolved configuration, the subcommand argument vector, the master seed
with the per-experiment derived seeds, timestamps, and sha256 digests of the
emitted CSV files.  Re-running from a manifest must reproduce identical CSV
bodies; timestamps and digests live only in the manifest itself.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

from .errors import ConfigurationError
from .lattice import ScheduleParams

TOOL = "toomqca"
VERSION = "0.1.0"

#: resolved-config defaults; command-line flags override file values
CONFIG_DEFAULTS = {
    "block_size": 24,
    "refresh_steps": 18,
    "code_steps": 6,
    "sim_rounds": 1,
    "base_tolerance": 1,
    "structure_tolerance": 6,
    "data_tolerance": 1,
    "cluster_width": 3,
    "influence_size": 3,
    "control_fault_bound": 0,
    "seed": 0,
}

_PARAM_KEYS = [k for k in CONFIG_DEFAULTS if k not in ("seed",)]


def parse_config(path=None, overrides=None, strict: bool = True):
    """Resolve defaults <- config file <- overrides; validate the parameter
    inequalities, rejecting with the violated one named."""
    resolved = dict(CONFIG_DEFAULTS)
    if path:
        if not os.path.exists(path):
            raise ConfigurationError(f"config file not found: {path}")
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
        unknown = set(data) - set(CONFIG_DEFAULTS)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        resolved.update(data)
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k not in CONFIG_DEFAULTS:
            raise ConfigurationError(f"unknown config key: {k}")
        resolved[k] = v
    params = ScheduleParams(**{k: int(resolved[k]) for k in _PARAM_KEYS})
    params.validate(strict=strict)
    return resolved, params


@dataclass
class RunManifest:
    tool: str
    version: str
    subcommand: str
    argv: list
    config: dict
    master_seed: int
    derived_seeds: dict = field(default_factory=dict)
    started: str = ""
    finished: str = ""
    outputs: dict = field(default_factory=dict)

    @staticmethod
    def begin(subcommand: str, argv, config: dict, master_seed: int) -> "RunManifest":
        return RunManifest(
            tool=TOOL,
            version=VERSION,
            subcommand=subcommand,
            argv=list(argv),
            config=dict(config),
            master_seed=master_seed,
            started=datetime.now(timezone.utc).isoformat(),
        )

    def derive_seed(self, label: str) -> int:
        # stable sub-seed per experiment label
        digest = hashlib.sha256(f"{self.master_seed}:{label}".encode()).digest()
        seed = int.from_bytes(digest[:8], "big")
        self.derived_seeds[label] = seed
        return seed

    def finish(self, output_paths) -> "RunManifest":
        self.finished = datetime.now(timezone.utc).isoformat()
        for p in output_paths:
            with open(p, "rb") as fh:
                self.outputs[os.path.basename(p)] = hashlib.sha256(fh.read()).hexdigest()
        return self

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load(path) -> "RunManifest":
        with open(path) as fh:
            return RunManifest(**json.load(fh))


def write_csv(path, header, rows):
    """Deterministic CSV body: fixed header, '%.12g' floats, LF newlines."""
    def fmt(v):
        if isinstance(v, bool):
            return "1" if v else "0"
        if isinstance(v, float):
            return format(v, ".12g")
        return str(v)

    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def pool_map(fn, items):
    """Map over items with the worker pool sized by TOOMQCA_WORKERS (default 1,
    sequential); results return in input order regardless of completion order."""
    workers = int(os.environ.get("TOOMQCA_WORKERS", "1"))
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
