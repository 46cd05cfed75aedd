"""Experiment configuration: JSON schema, cross-field checks, presets."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from ..circuits import TrotterParams
from ..lattice import LatticeError, LatticeSpec, build_lattice
from ..observables import InitialStateSpec

CONFIG_VERSION = 1
EXPERIMENTS = ("dynamics", "entropy", "imbalance", "long_time", "mps_scaling", "mitigation", "grover_cost")
ENGINES = ("statevector", "dual", "mps")
MAX_STATEVECTOR_QUBITS = 24
MAX_DUAL_QUBITS = 22
MAX_ED_QUBITS = 20
MAX_GROVER_QUBITS = 10


class ConfigError(ValueError):
    """Schema or cross-field problem; carries one message per problem."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


class CapacityError(ValueError):
    """The requested engine cannot hold the requested system."""


_num = {"type": "number"}
_int = {"type": "integer"}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "experiment", "lattice", "seed"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": CONFIG_VERSION},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "experiment": {"enum": list(EXPERIMENTS)},
        "lattice": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["Ring1D", "OpenChain1D", "Grid2D", "Custom"]},
                "n_matter": {**_int, "minimum": 1},
                "rows": {**_int, "minimum": 1},
                "cols": {**_int, "minimum": 1},
                "path": {"type": "string"},
            },
        },
        "trotter": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "J": _num, "h": _num, "mu": _num, "Q": _num,
                "dt": {**_num, "minimum": 0},
                "order": {"enum": [1, 2]},
                "cycles": {**_int, "minimum": 0},
            },
        },
        "initial_state": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "matter": {"enum": ["AllPlusX", "AllPlusZ", "StaggeredX", "Explicit"]},
                "gauge": {"enum": ["Aligned", "Theta", "PlusX", "MinusX"]},
                "J": _num, "h": _num,
                "flips": {"type": "array", "items": _int},
                "theta": _num,
                "matter_bloch": {"type": "array", "items": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}},
                "frame": {"enum": ["LGT", "Dual"]},
            },
        },
        "engine": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": list(ENGINES)},
                "chi": {**_int, "minimum": 1},
                "samples": {**_int, "minimum": 1},
            },
        },
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "p2": {**_num, "minimum": 0, "exclusiveMaximum": 0.5},
                "e01": {**_num, "minimum": 0, "exclusiveMaximum": 0.5},
                "e10": {**_num, "minimum": 0, "exclusiveMaximum": 0.5},
                "trajectories": {**_int, "minimum": 1},
                "shots_per_trajectory": {**_int, "minimum": 1},
                "blocks": {**_int, "minimum": 2},
            },
        },
        "shots": {**_int, "minimum": 1},
        "settings": {**_int, "minimum": 1},
        "seed": {**_int, "minimum": 0},
        "output_dir": {"type": "string"},
        "options": {"type": "object"},
    },
}


@dataclass
class ExperimentConfig:
    """Validated experiment description."""

    experiment: str
    lattice: LatticeSpec
    trotter: TrotterParams
    initial_state: InitialStateSpec
    engine: dict
    seed: int
    noise: dict | None = None
    shots: int | None = None
    settings: int | None = None
    output_dir: str = ""
    options: dict = field(default_factory=dict)
    name: str = ""
    raw: dict = field(default_factory=dict)

    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.raw).encode()).hexdigest()


def canonical_json(d: dict) -> str:
    return json.dumps(d, sort_keys=True, separators=(",", ":"))


def _schema_problems(d: dict) -> list[str]:
    v = jsonschema.Draft202012Validator(SCHEMA)
    out = []
    for e in sorted(v.iter_errors(d), key=lambda e: list(e.absolute_path)):
        loc = "/".join(str(p) for p in e.absolute_path) or "<root>"
        out.append(f"{loc}: {e.message}")
    return out


def _qubits(cfg: ExperimentConfig) -> tuple[int, int]:
    g = build_lattice(cfg.lattice)
    return g.n_qubits, g.n_gauge


def check_config(d: dict) -> tuple[ExperimentConfig | None, list[str], list[str]]:
    """Validate a raw config.

    Returns:
        The parsed config (or ``None``), config problems and capacity problems.
    """
    problems = _schema_problems(d)
    if problems:
        return None, problems, []
    try:
        lat = LatticeSpec.from_dict(d["lattice"])
        g = build_lattice(lat)
    except (LatticeError, ValueError, OSError) as exc:
        return None, [f"lattice: {exc}"], []
    try:
        tp = TrotterParams.from_dict(d.get("trotter", {}))
    except (TypeError, ValueError) as exc:
        return None, [f"trotter: {exc}"], []
    try:
        init = InitialStateSpec.from_dict(d.get("initial_state", {}))
    except (TypeError, ValueError) as exc:
        return None, [f"initial_state: {exc}"], []
    engine = d.get("engine", {"kind": "statevector"})
    cfg = ExperimentConfig(d["experiment"], lat, tp, init, engine, d["seed"], d.get("noise"), d.get("shots"),
                           d.get("settings"), d.get("output_dir", ""), d.get("options", {}), d.get("name", ""), d)
    problems, capacity = [], []
    kind = engine["kind"]
    for f in init.flips:
        if not 0 <= f < g.n_gauge:
            problems.append(f"initial_state/flips: link {f} outside 0..{g.n_gauge - 1}")
    if kind == "mps" and "chi" not in engine and cfg.experiment != "mps_scaling":
        problems.append("engine/chi: required for the mps engine")
    if cfg.experiment == "mps_scaling":
        chis = cfg.options.get("chis")
        if not chis or not all(isinstance(c, int) and c >= 1 for c in chis):
            problems.append("options/chis: list of positive integers required for mps_scaling")
    if cfg.experiment == "mitigation" and not cfg.noise:
        problems.append("noise: required for the mitigation experiment")
    if cfg.experiment in ("imbalance",) and lat.kind not in ("OpenChain1D", "Ring1D"):
        problems.append("lattice/kind: imbalance runs need a 1d lattice")
    if cfg.experiment == "long_time" and lat.kind not in ("OpenChain1D", "Ring1D"):
        problems.append("lattice/kind: long_time runs need a 1d lattice")
    if cfg.experiment == "grover_cost":
        eps = cfg.options.get("eps", [])
        if not eps or not all(0 < e < 1 for e in eps):
            problems.append("options/eps: list of accuracies in (0, 1) required")
    if cfg.experiment == "entropy" and cfg.settings is not None and cfg.shots is None:
        problems.append("shots: required with settings for randomized-measurement entropy")
    if kind == "dual" and init.frame != "Dual" and cfg.experiment == "dynamics":
        problems.append("initial_state/frame: dual engine needs frame 'Dual'")
    if kind == "mps" and init.gauge not in ("Aligned", "PlusX", "MinusX"):
        problems.append("initial_state/gauge: mps engine supports Aligned, PlusX and MinusX")
    # capacity
    nq, ng = g.n_qubits, g.n_gauge
    if cfg.experiment in ("dynamics", "entropy", "mitigation") and kind == "statevector" and nq > MAX_STATEVECTOR_QUBITS:
        capacity.append(f"statevector engine holds at most {MAX_STATEVECTOR_QUBITS} qubits, lattice has {nq}")
    if kind == "dual" and ng > MAX_DUAL_QUBITS:
        capacity.append(f"dual engine holds at most {MAX_DUAL_QUBITS} gauge qubits, lattice has {ng}")
    if cfg.experiment == "long_time" and ng > MAX_ED_QUBITS:
        capacity.append(f"long-time evolution holds at most {MAX_ED_QUBITS} gauge qubits, lattice has {ng}")
    if cfg.experiment == "grover_cost" and nq > MAX_GROVER_QUBITS:
        capacity.append(f"dense phase estimation holds at most {MAX_GROVER_QUBITS} system qubits, lattice has {nq}")
    if cfg.experiment == "mitigation" and nq > 14:
        capacity.append(f"trajectory noise runs hold at most 14 qubits, lattice has {nq}")
    return cfg, problems, capacity


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a config file.

    Raises:
        ConfigError: Unreadable file, schema or cross-field problems.
        CapacityError: Engine-capacity violations.
    """
    cfg, problems, capacity = check_config(read_config(path))
    if problems:
        raise ConfigError(problems)
    if capacity:
        raise CapacityError("; ".join(capacity))
    return cfg


def read_config(path: str | Path) -> dict:
    """Load raw JSON from a file, falling back to a preset of that name."""
    p = Path(path)
    try:
        if p.is_file():
            return json.loads(p.read_text())
        preset = preset_path(str(path))
        if preset is None:
            raise ConfigError([f"{path}: no such file or preset"])
        return json.loads(preset.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON ({exc})"]) from None


def _preset_dir():
    return resources.files("dflab.runner") / "presets"


def list_presets() -> list[tuple[str, str]]:
    """``(name, description)`` of every shipped preset."""
    out = []
    for p in sorted(_preset_dir().iterdir(), key=lambda p: p.name):
        if p.name.endswith(".json"):
            d = json.loads(p.read_text())
            out.append((p.name[:-5], d.get("description", "")))
    return out


def preset_path(name: str):
    p = _preset_dir() / f"{name}.json"
    return p if p.is_file() else None
