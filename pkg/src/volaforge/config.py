"""Run configuration: TOML parsing, validation and hashing."""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .features import DATASETS, HORIZONS, ROSTER, canonical_model
from .harness import HarnessConfig, TuningGrid
from .timeseries import parse_scheme

SEED_ENV = "VOLAFORGE_SEED"


@dataclass(frozen=True)
class SimSection:
    """Synthetic assets generated when no input files are given."""

    assets: int = 3
    days: int = 1000
    n_per_day: int = 78
    kappa: float = 0.03
    theta: float = 1.5e-4
    xi: float = 0.0025
    rho: float = -0.5
    jump_intensity: float = 0.05
    jump_std: float = 0.01


@dataclass(frozen=True)
class AleSection:
    models: tuple = ("HAR-X", "EN", "RF", "NN2^10")
    bins: int = 100
    clip: float = 1.0


@dataclass(frozen=True)
class VarSection:
    alpha: float = 0.05
    level: float = 0.05


@dataclass(frozen=True)
class EvalSection:
    mcs_level: float = 0.90
    mcs_reps: int = 5000
    benchmark: str = "HAR"
    acf_lags: int = 100


@dataclass(frozen=True)
class RunConfig:
    assets: tuple = ()
    covariates_dir: Optional[str] = None
    dataset: str = "m_har"
    horizon: str = "day"
    split: str = "70-10-20"
    models: tuple = ("HAR",)
    seed: int = 0
    out: str = "out"
    jobs: int = 1
    simulate: SimSection = SimSection()
    tuning: HarnessConfig = HarnessConfig()
    ale: AleSection = AleSection()
    var: VarSection = VarSection()
    evaluation: EvalSection = EvalSection()

    def problems(self):
        out = []
        for f in self.assets:
            if not Path(f).is_file():
                out.append(f"asset file not found: {f}")
        if self.covariates_dir and not Path(self.covariates_dir).is_dir():
            out.append(f"covariates directory not found: {self.covariates_dir}")
        if self.dataset not in DATASETS:
            out.append(f"dataset must be one of {list(DATASETS)}, got {self.dataset!r}")
        if str(self.horizon) not in HORIZONS:
            out.append(f"horizon must be one of {list(HORIZONS)}, got {self.horizon!r}")
        try:
            parse_scheme(self.split)
        except ValueError as exc:
            out.append(str(exc))
        unknown = []
        for m in tuple(self.models) + tuple(self.ale.models):
            try:
                canonical_model(m)
            except ConfigError:
                unknown.append(m)
        if unknown:
            out.append(f"unknown model id(s) {', '.join(map(repr, unknown))}; "
                       f"valid models: {', '.join(ROSTER)}")
        if not self.models:
            out.append("no models requested")
        if not 0 < self.var.alpha < 1:
            out.append("var.alpha must lie in (0, 1)")
        if not 0 < self.evaluation.mcs_level < 1:
            out.append("evaluation.mcs_level must lie in (0, 1)")
        if self.tuning.refit_every < 1:
            out.append("tuning.refit_every must be >= 1")
        try:
            self.tuning.grid.validate()
        except ConfigError as exc:
            out.append(str(exc))
        return out

    def validate(self):
        errs = self.problems()
        if errs:
            raise ConfigError("; ".join(errs), errs)
        return self

    def semantic(self):
        """Everything that influences results (output paths and worker count excluded)."""
        d = asdict(self)
        d.pop("out")
        d.pop("jobs")
        d["tuning"].pop("n_jobs")
        d["models"] = [canonical_model(m) for m in self.models]
        d["ale"]["models"] = [canonical_model(m) for m in self.ale.models]
        return d

    def hash(self):
        blob = json.dumps(self.semantic(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _section(cls, data, where):
    if data is None:
        return cls()
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(unknown)}")
    data = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    return cls(**data)


def load_config(path=None, overrides=None):
    """Read a TOML file (optional), apply CLI overrides and the seed env var."""
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    raw = dict(raw)
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    base = Path(path).parent if path else Path(".")

    tuning = dict(raw.pop("tuning", {}) or {})
    grid_keys = {f.name for f in fields(TuningGrid)}
    grid = _section(TuningGrid, {k: tuning.pop(k) for k in list(tuning) if k in grid_keys},
                    "tuning")
    harness = _section(HarnessConfig, tuning, "tuning")
    sections = {
        "simulate": _section(SimSection, raw.pop("simulate", None), "simulate"),
        "ale": _section(AleSection, raw.pop("ale", None), "ale"),
        "var": _section(VarSection, raw.pop("var", None), "var"),
        "evaluation": _section(EvalSection, raw.pop("evaluation", None), "evaluation"),
    }
    known = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")

    def resolve(p):
        return str(p) if Path(p).is_absolute() else str(base / p)

    if "assets" in raw:
        raw["assets"] = tuple(resolve(a) for a in raw["assets"])
    if raw.get("covariates_dir"):
        raw["covariates_dir"] = resolve(raw["covariates_dir"])
    if "out" in raw and path is not None and (overrides or {}).get("out") is None:
        raw["out"] = resolve(raw["out"])
    if "models" in raw:
        raw["models"] = tuple(raw["models"])
    seed = os.environ.get(SEED_ENV)
    if seed is not None:
        try:
            raw["seed"] = int(seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {seed!r}") from None
    cfg = RunConfig(**raw, **sections)
    tun = replace(harness, grid=grid, seed=cfg.seed, n_jobs=cfg.jobs)
    return replace(cfg, tuning=tun)
