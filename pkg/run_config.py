"""
Run Configuration
JSON run configuration: schema defaults, path resolution, validation and the config hash
"""

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace

from errors import ConfigError
from estimators import MODEL_KINDS
from fusion import DEFAULT_THRESHOLD, GEOGRAPHY_LEVELS
from spatial_weights import KERNELS

logger = logging.getLogger(__name__)

DEFAULT_RADII = [5, 10, 25, 50, 75, 100]
DEFAULT_THRESHOLDS = [round(0.1 * i, 1) for i in range(11)]
# settings that locate outputs but never change a result
UNHASHED = ("output_dir", "history_db", "threads")


@dataclass(frozen=True)
class TableSpec:
    path: str
    level: str = "zcta"
    id_column: str = None
    population_column: str = None
    name: str = None


@dataclass(frozen=True)
class GwrSettings:
    kernel: str = "bisquare"
    adaptive: bool = True
    bandwidth: float = None


@dataclass(frozen=True)
class RunConfig:
    tables: tuple
    polygons: str
    target: str
    predictors: tuple
    crosswalk: str = None
    polygon_id_property: str = "ZCTA5CE10"
    stations: str = None
    station_column: str = None
    tract_population: str = None
    crosswalk_threshold: float = DEFAULT_THRESHOLD
    boxcox_offset: float = 1.0
    boxcox_lambda: float = None
    standardize_weights: bool = True
    radii: tuple = tuple(DEFAULT_RADII)
    thresholds: tuple = tuple(DEFAULT_THRESHOLDS)
    gwr: GwrSettings = field(default_factory=GwrSettings)
    cv_folds: int = 5
    cv_seed: int = 42
    permutations: int = 999
    permutation_seed: int = 42
    output_dir: str = "output"
    history_db: str = None
    sweep_models: tuple = MODEL_KINDS
    threads: int = 1

    def to_dict(self):
        out = asdict(self)
        out["tables"] = [asdict(t) for t in self.tables]
        out["gwr"] = asdict(self.gwr)
        for key in ("predictors", "radii", "thresholds", "sweep_models"):
            out[key] = list(out[key])
        return out

    @property
    def config_hash(self):
        canonical = {k: v for k, v in self.to_dict().items() if k not in UNHASHED}
        text = json.dumps(canonical, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    @property
    def needs_crosswalk(self):
        return any(t.level != "zcta" for t in self.tables)


def _resolve(base_dir, path):
    if path is None:
        return None
    return os.path.normpath(os.path.join(base_dir, os.path.expanduser(str(path))))


def from_dict(data, base_dir="."):
    """Build a RunConfig from parsed JSON; relative paths resolve against base_dir"""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
    for key in ("tables", "polygons", "target", "predictors"):
        if key not in data:
            raise ConfigError(f"configuration is missing required key '{key}'")

    values = dict(data)
    try:
        tables = []
        for entry in data["tables"]:
            entry = {"path": entry} if isinstance(entry, str) else dict(entry)
            entry["path"] = _resolve(base_dir, entry.get("path"))
            tables.append(TableSpec(**entry))
        values["tables"] = tuple(tables)
        values["gwr"] = GwrSettings(**data.get("gwr", {}))
    except TypeError as e:
        raise ConfigError(f"malformed table or gwr entry: {e}")

    for key in ("polygons", "crosswalk", "stations", "tract_population", "history_db"):
        if key in values:
            values[key] = _resolve(base_dir, values[key])
    values["output_dir"] = _resolve(base_dir, values.get("output_dir", "output"))
    for key in ("predictors", "radii", "thresholds", "sweep_models"):
        if key in values:
            values[key] = tuple(values[key])
    return RunConfig(**values)


def load_config(path, seed=None, output=None, threads=None):
    """Read a JSON config file and apply command-line overrides"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config '{path}': {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config '{path}' is not valid JSON: {e}")

    config = from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))
    if seed is not None:
        config = replace(config, cv_seed=int(seed), permutation_seed=int(seed))
    if output is not None:
        config = replace(config, output_dir=os.path.abspath(output))
    if threads is not None:
        config = replace(config, threads=int(threads))
    return config


def _check_path(problems, label, path, required=True):
    if path is None:
        if required:
            problems.append(f"'{label}' is required")
        return
    if not os.path.exists(path):
        problems.append(f"{label} file not found: {path}")


def validate_config(config, need_stations=False):
    """Raise ConfigError listing every problem found; returns the config unchanged when valid"""
    problems = []
    if not config.tables:
        problems.append("'tables' must list at least one table")
    for t in config.tables:
        _check_path(problems, "table", t.path)
        if t.level not in GEOGRAPHY_LEVELS:
            problems.append(f"table {t.path}: level must be one of {GEOGRAPHY_LEVELS}, got '{t.level}'")
    _check_path(problems, "polygons", config.polygons)
    _check_path(problems, "crosswalk", config.crosswalk, required=config.needs_crosswalk)
    if config.needs_crosswalk:
        has_population = all(t.population_column for t in config.tables if t.level != "zcta")
        _check_path(problems, "tract_population", config.tract_population, required=not has_population)
    else:
        _check_path(problems, "tract_population", config.tract_population, required=False)
    _check_path(problems, "stations", config.stations, required=need_stations)

    if not config.target:
        problems.append("'target' must name a column")
    if not config.predictors:
        problems.append("'predictors' must list at least one column")
    elif len(set(config.predictors)) != len(config.predictors):
        problems.append("'predictors' contains duplicates")
    if need_stations and config.station_column not in config.predictors:
        problems.append(f"'station_column' must be one of the predictors, got {config.station_column!r}")

    if not 0.0 <= config.crosswalk_threshold <= 1.0:
        problems.append(f"'crosswalk_threshold' must lie in [0, 1], got {config.crosswalk_threshold}")
    if config.boxcox_offset is not None and config.boxcox_offset < 0:
        problems.append(f"'boxcox_offset' must be nonnegative or null, got {config.boxcox_offset}")
    if not config.radii or any(not r > 0 for r in config.radii):
        problems.append("'radii' must be a nonempty list of positive miles")
    thresholds = list(config.thresholds)
    if not thresholds or thresholds != sorted(thresholds) or any(not 0.0 <= t <= 1.0 for t in thresholds):
        problems.append("'thresholds' must be a nonempty ascending list within [0, 1]")
    if config.gwr.kernel not in KERNELS:
        problems.append(f"gwr.kernel must be one of {KERNELS}, got '{config.gwr.kernel}'")
    if config.gwr.bandwidth is not None and not config.gwr.bandwidth > 0:
        problems.append(f"gwr.bandwidth must be positive or null, got {config.gwr.bandwidth}")
    if not isinstance(config.cv_folds, int) or config.cv_folds < 2:
        problems.append(f"'cv_folds' must be an integer >= 2, got {config.cv_folds}")
    if not isinstance(config.permutations, int) or config.permutations < 0:
        problems.append(f"'permutations' must be a nonnegative integer, got {config.permutations}")
    if config.cv_seed is None:
        problems.append("'cv_seed' is required for cross-validation")
    if config.permutations and config.permutation_seed is None:
        problems.append("'permutation_seed' is required when permutations > 0")
    bad_models = [m for m in config.sweep_models if m not in MODEL_KINDS]
    if bad_models:
        problems.append(f"'sweep_models' has unknown model kind(s) {bad_models}")
    if config.threads is None or config.threads < 0:
        problems.append(f"threads must be >= 0 (0 = auto), got {config.threads}")

    if problems:
        for p in problems:
            logger.error(f"❌ {p}")
        raise ConfigError("invalid configuration: " + "; ".join(problems))
    logger.info(f"✅ Configuration valid (hash {config.config_hash[:12]})")
    return config
