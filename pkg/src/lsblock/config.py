"""Run configuration: a flat-key JSON file with a documented schema."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from typing import Any, Optional

from .diagonalizer import SeriesOptions
from .geometry import LatticeSpec
from .models import CUSTOM, PHI4, ModelSpec
from .verification import SUITES

SCHEMA_VERSION = 1
OUT_ENV = "LSBLOCK_OUT"


class ConfigError(ValueError):
    pass


# key -> (type, default, description)
SCHEMA: dict[str, tuple[str, Any, str]] = {
    "lattice.d": ("int", 2, "spatial dimension, >= 1"),
    "lattice.N": ("int", 2, "sites per side, >= 2"),
    "model.kind": ("str", PHI4, f"one of {PHI4!r}, {CUSTOM!r}"),
    "model.n_s": ("int", 4, "kept levels per site, >= 2"),
    "model.oscillator_basis_size": ("int", 60, "oscillator states used before truncation, >= n_s"),
    "model.coupling_normalization": ("float", 0.5, "weighted norm of each bond potential, in (0, 1]"),
    "model.energies": ("list|null", None, "custom kind: site energies, 0 then >= 1"),
    "model.coupling": ("list|null", None, "custom kind: symmetric n_s x n_s site coupling matrix"),
    "t": ("float", 0.02, "coupling, |t| < 1"),
    "t_grid": ("list|null", None, "couplings for the scan subcommand"),
    "series.j_max": ("int", 24, "maximal order of the generator series, >= 1"),
    "series.tail_tol": ("float", 1e-13, "series stops once t^j max(||S_j||, ||V_j||) drops below this"),
    "series.gap_floor": ("float", 0.25, "smallest local gap accepted by the resolvent, in (0, 1]"),
    "series.gap_assert_t_max": ("float", 0.05, "local gaps below 1/2 abort runs with 0 <= t <= this"),
    "checks": ("list", list(SUITES), f"verification suites, subset of {list(SUITES)}"),
    "verify.lemma_gap": ("float|null", 0.5, "gap constant in the local lemma bounds; null uses the measured gap"),
    "verify.x_d": ("float|null", None, "decay exponent in the norm bounds; null means 20 d"),
    "verify.c": ("float|null", None, "constant in the path weights; null measures it from the run"),
    "verify.depth_cap": ("int", 6, "largest number of rectangles per enumerated branch"),
    "output.directory": ("str", "runs/latest", f"artifact directory; ${OUT_ENV} overrides"),
    "output.debug_dump": ("bool", False, "also dump every potential matrix per step"),
    "output.keep_tables": ("bool", True, "store the table history needed by the verify subcommand"),
    "seed": ("int", 0, "seed for randomized checks"),
    "limits.max_dimension": ("int", 2**16, "cap on the total Hilbert space dimension"),
    "scan.workers": ("int", 1, "parallel runs in the scan subcommand"),
}


def schema_document() -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "format": "JSON object with flat dotted keys; omitted keys take their defaults",
        "keys": {k: {"type": t, "default": d, "description": doc} for k, (t, d, doc) in SCHEMA.items()},
    }


def _check_type(key: str, kind: str, value: Any) -> Any:
    ok = False
    for option in kind.split("|"):
        if option == "null" and value is None:
            ok = True
        elif option == "int" and isinstance(value, int) and not isinstance(value, bool):
            ok = True
        elif option == "float" and isinstance(value, (int, float)) and not isinstance(value, bool):
            value = float(value)
            ok = True
        elif option == "str" and isinstance(value, str):
            ok = True
        elif option == "bool" and isinstance(value, bool):
            ok = True
        elif option == "list" and isinstance(value, list):
            ok = True
        if ok:
            return value
    raise ConfigError(f"{key}: expected {kind}, got {value!r}")


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def lattice(self) -> LatticeSpec:
        return LatticeSpec(self["lattice.d"], self["lattice.N"])

    @property
    def model(self) -> ModelSpec:
        e, c = self["model.energies"], self["model.coupling"]
        return ModelSpec(
            kind=self["model.kind"],
            n_s=self["model.n_s"],
            oscillator_basis_size=self["model.oscillator_basis_size"],
            coupling_normalization=self["model.coupling_normalization"],
            energies=None if e is None else tuple(float(x) for x in e),
            coupling=None if c is None else tuple(tuple(float(x) for x in row) for row in c),
        )

    @property
    def series(self) -> SeriesOptions:
        return SeriesOptions(
            j_max=self["series.j_max"],
            tail_tol=self["series.tail_tol"],
            gap_floor=self["series.gap_floor"],
            gap_assert_t_max=self["series.gap_assert_t_max"],
        )

    @property
    def verify_options(self) -> dict:
        return {
            "lemma_gap": self["verify.lemma_gap"],
            "x_d": self["verify.x_d"],
            "c": self["verify.c"],
            "depth_cap": self["verify.depth_cap"],
            "seed": self["seed"],
        }

    def canonical(self) -> str:
        return json.dumps(self.values, sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def with_updates(self, **updates: Any) -> "RunConfig":
        merged = dict(self.values)
        merged.update(updates)
        return validate(merged, fill=False)

    def to_json(self) -> dict:
        return dict(sorted(self.values.items()))


def validate(raw: dict, fill: bool = True) -> RunConfig:
    """Fill defaults, type-check every key and check the documented ranges."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values = {}
    for key, (kind, default, _) in SCHEMA.items():
        value = raw.get(key, default) if fill else raw[key]
        values[key] = _check_type(key, kind, value)

    def need(cond: bool, msg: str) -> None:
        if not cond:
            raise ConfigError(msg)

    need(values["lattice.d"] >= 1, "lattice.d must be >= 1")
    need(values["lattice.N"] >= 2, f"lattice.N must be >= 2, got {values['lattice.N']}")
    need(abs(values["t"]) < 1, "t must satisfy |t| < 1")
    if values["t_grid"] is not None:
        need(len(values["t_grid"]) > 0, "t_grid must not be empty")
        for x in values["t_grid"]:
            need(isinstance(x, (int, float)) and abs(x) < 1, f"t_grid entry {x!r} must be a number with |t| < 1")
        values["t_grid"] = [float(x) for x in values["t_grid"]]
    bad = sorted(set(values["checks"]) - set(SUITES))
    need(not bad, f"unknown check suites: {bad}")
    need(values["verify.depth_cap"] >= 1, "verify.depth_cap must be >= 1")
    need(values["scan.workers"] >= 1, "scan.workers must be >= 1")
    sites = values["lattice.N"] ** values["lattice.d"]
    dim = values["model.n_s"] ** sites
    need(
        dim <= values["limits.max_dimension"],
        f"Hilbert dimension {values['model.n_s']}^{sites} exceeds limits.max_dimension",
    )
    config = RunConfig(values)
    try:
        config.model
        config.series
        config.lattice
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return config


def load(path: Optional[str]) -> RunConfig:
    raw: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if OUT_ENV in os.environ:
        raw = {**raw, "output.directory": os.environ[OUT_ENV]}
    return validate(raw)
