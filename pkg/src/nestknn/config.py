"""Flat ``key = value`` configuration and calibrated-parameter files.

Lines starting with ``#`` are comments. Weight matrices are written as
``identity``, ``diag:w1,w2,...``, ``full:r11,r12,...;r21,...`` or
``file:path`` (a whitespace-delimited matrix or a single diagonal row).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .calibration import DEFAULT_CANDIDATE_KS, STAGES
from .core import DEFAULT_CHANNEL_ORDER, LandSurfaceClass, StageParams, WeightMatrix
from .detector import LandParams
from .errors import ConfigError, NestedKnnError

LAND_KEYS = {"snow": LandSurfaceClass.SNOW_COVERED, "nosnow": LandSurfaceClass.NO_SNOW}
LAND_NAMES = {v: k for k, v in LAND_KEYS.items()}


def parse_lines(text: str, source: str = "<config>") -> dict[str, tuple[str, int]]:
    """key -> (value, line number)."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = (value, lineno)
    return out


def parse_weights(text: str, dim: int, base: Optional[Path] = None) -> WeightMatrix:
    text = text.strip()
    try:
        if text == "identity":
            return WeightMatrix.identity(dim)
        kind, _, body = text.partition(":")
        if kind == "diag":
            w = WeightMatrix.diagonal([float(v) for v in body.split(",")])
        elif kind == "full":
            w = WeightMatrix([[float(v) for v in row.split(",")] for row in body.split(";")])
        elif kind == "file":
            path = Path(body)
            if base is not None and not path.is_absolute():
                path = base / path
            arr = np.loadtxt(path, ndmin=2)
            w = WeightMatrix.diagonal(arr[0]) if arr.shape[0] == 1 else WeightMatrix(arr)
        else:
            raise ConfigError(f"unknown weight specification {text!r}")
    except (ValueError, OSError) as exc:
        raise ConfigError(f"bad weight specification {text!r}: {exc}") from exc
    if w.dim != dim:
        raise ConfigError(f"weight matrix has dimension {w.dim}, expected {dim}")
    return w


def format_weights(w: WeightMatrix) -> str:
    if w.is_diagonal:
        return "diag:" + ",".join(repr(float(v)) for v in w.diag)
    return "full:" + ";".join(",".join(repr(float(v)) for v in row) for row in w.entries)


@dataclass(frozen=True)
class RunConfig:
    channel_order: tuple = DEFAULT_CHANNEL_ORDER
    ref_threshold: float = 0.5
    database_size: int = 6000
    seed: int = 0
    candidate_k: Mapping[int, tuple] = field(
        default_factory=lambda: {s: DEFAULT_CANDIDATE_KS for s in STAGES})
    weights: Mapping = field(default_factory=dict)
    calibration_max_per_class: int = 1000
    grid_cell_deg: float = 0.1
    zonal_band_deg: float = 1.0
    season_window: Optional[tuple] = None
    season_strict: bool = False
    wrf_phase_rule: str = "fraction"
    workers: int = 1
    scenario_separation_sigma: float = 6.0
    scenario_n_per_class: int = 10000
    scenario_n_holdout: Optional[int] = None
    scenario_sigma_k: float = 2.0

    @property
    def channel_count(self) -> int:
        return len(self.channel_order)

    def weight(self, land: LandSurfaceClass, stage: int) -> WeightMatrix:
        return self.weights.get((land, stage), WeightMatrix.identity(self.channel_count))


def _int(v):
    return int(v)


def _float(v):
    return float(v)


def _bool(v):
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _ks(v):
    ks = tuple(int(x) for x in v.split(","))
    if not ks or any(k < 1 for k in ks):
        raise ValueError("candidate k values must be positive integers")
    return ks


def _date(v):
    dt = datetime.fromisoformat(v)
    return dt if dt.tzinfo else dt.replace(tzinfo=timezone.utc)


_SCALARS = {
    "ref_threshold": _float,
    "database_size": _int,
    "seed": _int,
    "calibration_max_per_class": _int,
    "grid_cell_deg": _float,
    "zonal_band_deg": _float,
    "season_strict": _bool,
    "wrf_phase_rule": str,
    "workers": _int,
    "scenario_separation_sigma": _float,
    "scenario_n_per_class": _int,
    "scenario_n_holdout": _int,
    "scenario_sigma_k": _float,
}


def parse_config(text: str, source: str = "<config>", base: Optional[Path] = None) -> RunConfig:
    entries = parse_lines(text, source)
    kw: dict = {}

    def fail(key, msg):
        raise ConfigError(f"{source}:{entries[key][1]}: {key}: {msg}")

    order = DEFAULT_CHANNEL_ORDER
    if "channel_order" in entries:
        order = tuple(c.strip() for c in entries["channel_order"][0].split(",") if c.strip())
    if "channel_count" in entries:
        try:
            n = int(entries["channel_count"][0])
        except ValueError:
            fail("channel_count", "not an integer")
        if "channel_order" not in entries:
            order = DEFAULT_CHANNEL_ORDER if n == len(DEFAULT_CHANNEL_ORDER) else tuple(f"ch{i}" for i in range(n))
        if len(order) != n:
            fail("channel_count", f"{n} does not match channel_order with {len(order)} names")
    kw["channel_order"] = order

    ks = {s: DEFAULT_CANDIDATE_KS for s in STAGES}
    weights = {}
    window = [None, None]
    for key, (value, _) in entries.items():
        try:
            if key in ("channel_order", "channel_count"):
                continue
            if key in _SCALARS:
                kw[key] = _SCALARS[key](value)
            elif key == "candidate_k":
                ks = {s: _ks(value) for s in STAGES} | {s: v for s, v in ks.items() if v is not DEFAULT_CANDIDATE_KS}
            elif key.startswith("candidate_k_stage"):
                stage = int(key[len("candidate_k_stage"):])
                if stage not in STAGES:
                    raise ValueError(f"unknown stage {stage}")
                ks[stage] = _ks(value)
            elif key.startswith("weights."):
                _, land, stage = key.split(".")
                if land not in LAND_KEYS or not stage.startswith("stage"):
                    raise ValueError("expected weights.<snow|nosnow>.stage<1|2|3>")
                weights[(LAND_KEYS[land], int(stage[5:]))] = parse_weights(value, len(order), base)
            elif key == "season_window_start":
                window[0] = _date(value)
            elif key == "season_window_end":
                window[1] = _date(value)
            else:
                raise ValueError("unknown key")
        except NestedKnnError as exc:
            fail(key, str(exc))
        except ValueError as exc:
            fail(key, str(exc))
    kw["candidate_k"] = ks
    kw["weights"] = weights
    if any(window):
        if not all(window):
            raise ConfigError(f"{source}: season_window_start and season_window_end go together")
        kw["season_window"] = tuple(window)
    cfg = RunConfig(**kw)
    if not 0 < cfg.ref_threshold < 1:
        raise ConfigError(f"{source}: ref_threshold must lie in (0, 1)")
    if cfg.database_size < 6:
        raise ConfigError(f"{source}: database_size must be at least 6")
    if cfg.grid_cell_deg <= 0 or cfg.zonal_band_deg <= 0:
        raise ConfigError(f"{source}: grid_cell_deg and zonal_band_deg must be positive")
    if cfg.wrf_phase_rule not in ("fraction", "ratio"):
        raise ConfigError(f"{source}: wrf_phase_rule must be 'fraction' or 'ratio'")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path), path.parent)


def format_params(params: Mapping[LandSurfaceClass, LandParams]) -> str:
    lines = ["# calibrated stage parameters"]
    for land in sorted(params):
        for stage, sp in zip(STAGES, params[land]):
            prefix = f"{LAND_NAMES[land]}.stage{stage}"
            lines.append(f"{prefix}.k = {sp.k}")
            lines.append(f"{prefix}.p = {sp.p!r}")
            lines.append(f"{prefix}.weights = {format_weights(sp.weights)}")
    return "\n".join(lines) + "\n"


def parse_params(text: str, dim: int, source: str = "<params>") -> dict[LandSurfaceClass, LandParams]:
    entries = parse_lines(text, source)
    raw: dict = {}
    for key, (value, lineno) in entries.items():
        parts = key.split(".")
        if len(parts) != 3 or parts[0] not in LAND_KEYS or parts[2] not in ("k", "p", "weights"):
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        raw.setdefault(parts[0], {}).setdefault(parts[1], {})[parts[2]] = (value, lineno)
    out = {}
    for land_key, stages in raw.items():
        sps = []
        for stage in STAGES:
            fields = stages.get(f"stage{stage}", {})
            missing = {"k", "p", "weights"} - set(fields)
            if missing:
                raise ConfigError(f"{source}: {land_key}.stage{stage} lacks {sorted(missing)}")
            try:
                sps.append(StageParams(int(fields["k"][0]),
                                       parse_weights(fields["weights"][0], dim),
                                       float(fields["p"][0])))
            except (ValueError, NestedKnnError) as exc:
                raise ConfigError(f"{source}:{fields['k'][1]}: {land_key}.stage{stage}: {exc}") from exc
        out[LAND_KEYS[land_key]] = LandParams(*sps)
    if not out:
        raise ConfigError(f"{source}: no stage parameters found")
    return out


def load_params(path, dim: int):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read params {path}: {exc}") from exc
    return parse_params(text, dim, str(path))
