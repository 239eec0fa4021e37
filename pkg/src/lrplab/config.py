"""Experiment configuration: a single TOML (or JSON) file per run.

Top-level keys set the command, betas, base seed and defaults; optional
sections refine each pipeline stage.  Parsing is strict: unknown keys are
configuration errors naming the key, and the canonical form (all defaults
resolved, keys sorted) hashes stably for the results cache.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

try:
    import tomllib as _toml
except ImportError:  # Python 3.10
    import tomli as _toml

from .errors import ConfigurationError

COMMANDS = (
    "sample",
    "resistance",
    "heatkernel",
    "exit",
    "delta",
    "spectral",
    "tails",
    "goodradius",
    "chainck",
    "full-pipeline",
)

_SECTIONS = {
    "delta": {"n_grid", "replicates"},
    "spectral": {"time_grid", "quenched_time_grid", "replicates", "quenched_envs"},
    "exit": {"r_grid", "replicates"},
    "tails": {"r", "lambda_grid", "replicates"},
    "goodradius": {"r", "lambda_grid", "replicates"},
    "chainck": {"n", "draws"},
    "sample": {"window", "replicates"},
    "heatkernel": {"n_max", "replicates"},
    "window": {"multiplier", "max", "ball_multiplier", "ball_min"},
    "walk": {"walkers"},
}

_TOP_KEYS = {"command", "betas", "base_seed", "out_dir", "replicates", "max_discard"}


@dataclass
class ExperimentConfig:
    command: str
    betas: list = field(default_factory=lambda: [1.0])
    base_seed: int = 0
    out_dir: str = "lrp-results"
    max_discard: float = 0.05

    delta_n_grid: list = field(default_factory=lambda: [16, 32, 64, 128, 256])
    delta_replicates: int = 50

    spectral_time_grid: list = field(default_factory=lambda: [64, 128, 256, 512, 1024])
    spectral_replicates: int = 50
    quenched_envs: int = 3
    # single-environment return probabilities need longer horizons than the
    # annealed average before the slope settles; None reuses time_grid
    quenched_time_grid: list | None = None

    exit_r_grid: list = field(default_factory=lambda: [2.0, 4.0, 8.0, 16.0])
    exit_replicates: int = 50

    tails_r: float = 8.0
    tails_lambda_grid: list = field(default_factory=lambda: [2.0, 4.0, 8.0, 16.0, 32.0])
    tails_replicates: int = 400

    goodradius_r: float = 8.0
    goodradius_lambda_grid: list = field(
        default_factory=lambda: [2.0, 4.0, 8.0, 16.0, 32.0]
    )
    goodradius_replicates: int = 400

    chain_n: int = 256
    chain_draws: int = 50

    sample_window: int = 4096
    sample_replicates: int = 50

    heatkernel_n_max: int = 256
    heatkernel_replicates: int = 1

    window_multiplier: float = 8.0
    window_max: int | None = None
    # resistance balls overshoot r^{1/delta} badly at desk scale, so their
    # windows start wide; flagged draws escalate from there
    ball_window_multiplier: float = 64.0
    ball_window_min: int = 64

    walkers: int = 10_000

    # ------------------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigurationError("config root must be a table/object")
        unknown = set(raw) - _TOP_KEYS - set(_SECTIONS)
        if unknown:
            raise ConfigurationError(f"unknown config key: {sorted(unknown)[0]}")
        if "command" not in raw:
            raise ConfigurationError("missing required key: command")
        kw = {k: raw[k] for k in _TOP_KEYS if k in raw}
        default_reps = kw.pop("replicates", None)
        for section, allowed in _SECTIONS.items():
            sub = raw.get(section, {})
            if not isinstance(sub, dict):
                raise ConfigurationError(f"section {section!r} must be a table")
            bad = set(sub) - allowed
            if bad:
                raise ConfigurationError(
                    f"unknown key {section}.{sorted(bad)[0]}"
                )
        sec = {k: dict(raw.get(k, {})) for k in _SECTIONS}
        if default_reps is not None:
            for name in ("delta", "spectral", "exit", "tails", "goodradius", "sample"):
                sec[name].setdefault("replicates", default_reps)
        mapping = {
            "delta_n_grid": sec["delta"].get("n_grid"),
            "delta_replicates": sec["delta"].get("replicates"),
            "spectral_time_grid": sec["spectral"].get("time_grid"),
            "spectral_replicates": sec["spectral"].get("replicates"),
            "quenched_envs": sec["spectral"].get("quenched_envs"),
            "quenched_time_grid": sec["spectral"].get("quenched_time_grid"),
            "exit_r_grid": sec["exit"].get("r_grid"),
            "exit_replicates": sec["exit"].get("replicates"),
            "tails_r": sec["tails"].get("r"),
            "tails_lambda_grid": sec["tails"].get("lambda_grid"),
            "tails_replicates": sec["tails"].get("replicates"),
            "goodradius_r": sec["goodradius"].get("r"),
            "goodradius_lambda_grid": sec["goodradius"].get("lambda_grid"),
            "goodradius_replicates": sec["goodradius"].get("replicates"),
            "chain_n": sec["chainck"].get("n"),
            "chain_draws": sec["chainck"].get("draws"),
            "sample_window": sec["sample"].get("window"),
            "sample_replicates": sec["sample"].get("replicates"),
            "heatkernel_n_max": sec["heatkernel"].get("n_max"),
            "heatkernel_replicates": sec["heatkernel"].get("replicates"),
            "window_multiplier": sec["window"].get("multiplier"),
            "window_max": sec["window"].get("max"),
            "ball_window_multiplier": sec["window"].get("ball_multiplier"),
            "ball_window_min": sec["window"].get("ball_min"),
            "walkers": sec["walk"].get("walkers"),
        }
        kw.update({k: v for k, v in mapping.items() if v is not None})
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        text = open(path, "rb").read()
        name = str(path)
        try:
            if name.endswith(".json"):
                raw = json.loads(text)
            else:
                raw = _toml.loads(text.decode())
        except (json.JSONDecodeError, _toml.TOMLDecodeError) as exc:
            raise ConfigurationError(f"cannot parse {name}: {exc}") from exc
        return cls.from_dict(raw)

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigurationError(
                f"command: unknown command {self.command!r}; known: {COMMANDS}"
            )
        if not self.betas or any(b <= 0 for b in self.betas):
            raise ConfigurationError("betas: must be a non-empty list of positive reals")
        if int(self.base_seed) < 0:
            raise ConfigurationError("base_seed: must be >= 0")
        if not 0 < self.max_discard < 1:
            raise ConfigurationError("max_discard: must lie in (0, 1)")
        for name, grid in (
            ("delta.n_grid", self.delta_n_grid),
            ("exit.r_grid", self.exit_r_grid),
            ("spectral.time_grid", self.spectral_time_grid),
        ):
            vals = list(grid)
            if len(vals) < 3 or sorted(vals) != vals or vals[0] <= 0:
                raise ConfigurationError(
                    f"{name}: need >= 3 increasing positive values"
                )
        if any(t % 2 for t in self.spectral_time_grid):
            raise ConfigurationError("spectral.time_grid: times must be even")
        if self.quenched_time_grid is not None:
            vals = list(self.quenched_time_grid)
            if len(vals) < 3 or sorted(vals) != vals or vals[0] <= 0:
                raise ConfigurationError(
                    "spectral.quenched_time_grid: need >= 3 increasing positive values"
                )
            if any(t % 2 for t in vals):
                raise ConfigurationError(
                    "spectral.quenched_time_grid: times must be even"
                )
        for name, grid in (
            ("tails.lambda_grid", self.tails_lambda_grid),
            ("goodradius.lambda_grid", self.goodradius_lambda_grid),
        ):
            if not grid or any(v < 1 for v in grid):
                raise ConfigurationError(f"{name}: values must be >= 1")
        for name, reps in (
            ("delta.replicates", self.delta_replicates),
            ("spectral.replicates", self.spectral_replicates),
            ("exit.replicates", self.exit_replicates),
            ("tails.replicates", self.tails_replicates),
            ("goodradius.replicates", self.goodradius_replicates),
            ("sample.replicates", self.sample_replicates),
        ):
            if reps < 2:
                raise ConfigurationError(f"{name}: need at least 2 replicates")
        if self.chain_n < 2:
            raise ConfigurationError("chainck.n: must be >= 2")
        if self.chain_draws < 1:
            raise ConfigurationError("chainck.draws: must be >= 1")
        if self.walkers < 1:
            raise ConfigurationError("walk.walkers: must be >= 1")
        if self.window_multiplier <= 0 or self.ball_window_multiplier <= 0:
            raise ConfigurationError("window.multiplier: must be positive")
        if self.heatkernel_n_max < 1:
            raise ConfigurationError("heatkernel.n_max: must be >= 1")
        if self.sample_window < 2:
            raise ConfigurationError("sample.window: must be >= 2")

    # ------------------------------------------------------------------

    def canonical_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = [float(b) for b in d["betas"]]
        for key in ("delta_n_grid", "spectral_time_grid"):
            d[key] = [int(v) for v in d[key]]
        if d["quenched_time_grid"] is not None:
            d["quenched_time_grid"] = [int(v) for v in d["quenched_time_grid"]]
        for key in ("exit_r_grid", "tails_lambda_grid", "goodradius_lambda_grid"):
            d[key] = [float(v) for v in d[key]]
        return {k: d[k] for k in sorted(d)}

    def canonical_json(self) -> str:
        return json.dumps(self.canonical_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def to_nested(self) -> dict:
        """The file representation (nested sections); loads back losslessly."""
        return {
            "command": self.command,
            "betas": [float(b) for b in self.betas],
            "base_seed": int(self.base_seed),
            "out_dir": self.out_dir,
            "max_discard": self.max_discard,
            "delta": {"n_grid": list(self.delta_n_grid),
                      "replicates": self.delta_replicates},
            "spectral": {"time_grid": list(self.spectral_time_grid),
                         "replicates": self.spectral_replicates,
                         "quenched_envs": self.quenched_envs,
                         **({"quenched_time_grid": list(self.quenched_time_grid)}
                            if self.quenched_time_grid is not None else {})},
            "exit": {"r_grid": list(self.exit_r_grid),
                     "replicates": self.exit_replicates},
            "tails": {"r": self.tails_r,
                      "lambda_grid": list(self.tails_lambda_grid),
                      "replicates": self.tails_replicates},
            "goodradius": {"r": self.goodradius_r,
                           "lambda_grid": list(self.goodradius_lambda_grid),
                           "replicates": self.goodradius_replicates},
            "chainck": {"n": self.chain_n, "draws": self.chain_draws},
            "sample": {"window": self.sample_window,
                       "replicates": self.sample_replicates},
            "heatkernel": {"n_max": self.heatkernel_n_max,
                           "replicates": self.heatkernel_replicates},
            "window": {"multiplier": self.window_multiplier,
                       **({"max": self.window_max} if self.window_max else {}),
                       "ball_multiplier": self.ball_window_multiplier,
                       "ball_min": self.ball_window_min},
            "walk": {"walkers": self.walkers},
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_nested(), fh, indent=2, sort_keys=True)

    @classmethod
    def field_names(cls) -> list:
        return [f.name for f in fields(cls)]
