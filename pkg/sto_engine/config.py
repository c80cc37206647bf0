"""
STO Engine Configuration
Defaults, environment overrides, experiment files and the scenario presets.
"""
import configparser
import hashlib
import json
import logging
import math
import os
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from sto_engine.dynamics import circle_maps
from sto_engine.dynamics.densities import density_from_function
from sto_engine.dynamics.fibered import make_profile, sinusoid, two_cluster, uniform_fibered
from sto_engine.dynamics.graphon import (
    BlockGraphon,
    ConstantGraphon,
    sample_er,
    step_graphon_from_matrix,
    translation_graphon,
)
from sto_engine.errors import ConfigError, ParameterError
from sto_engine.services import sto
from sto_engine.services.finite_sim import er_scenario, quantized_scenario
from sto_engine.services.probes import PROBES

logger = logging.getLogger(__name__)

# Base paths - relative to project root unless STO_DATA_DIR is set
BASE_DIR = Path(__file__).resolve().parent.parent
DATA_DIR = Path(os.getenv("STO_DATA_DIR", str(BASE_DIR / "data")))
DB_PATH = DATA_DIR / "runs.db"
OUTPUT_DIR = BASE_DIR / "output"

LOG_LEVEL = os.getenv("STO_LOG_LEVEL", "INFO").upper()

# ─── Grid and Solver Defaults ─────────────────────────────────────────
DEFAULT_NX = 256
DEFAULT_NZ = 64
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 500
DEFAULT_P_EXP = 1.0
DEFAULT_RADII = tuple(2.0 ** -i for i in range(1, 9))
DEFAULT_SEED = 12345
DEFAULT_ALPHA_FRACTION = 0.5

# ─── Probe Settings ───────────────────────────────────────────────────
DEFAULT_PROBES = (
    "expansion",
    "distortion",
    "uniqueness",
    "lasota_yorke",
    "memory_loss",
    "ulam_oracle",
)

PROBE_THRESHOLDS = {
    "expansion": 1.0,
    "lasota_yorke": -1e-8,
    "lasota_yorke_bv2": 1.1,
    "memory_loss": 0.05,
    "lipschitz": 0.10,
    "hilbert_contraction": 1.0,
    "ck_distance": 1.1,
    "variation_of_density": 1.1,
    "ulam_oracle": 2e-2,
    "uniqueness": 5.0,
    "smoothness": 0.05,
    "admissible_invariance": 1.05,
    "concentration": 0.9,
}

PROBE_PARAMS = {
    "lasota_yorke_trials": 1000,
    "lasota_yorke_states": 8,
    "lasota_yorke_bv2_trials": 200,
    "memory_loss_sequences": 20,
    "memory_loss_steps": 8,
    "memory_loss_burn_in": 2,
    "lipschitz_pairs": 100,
    "hilbert_pairs": 20,
    "variation_pairs": 10,
    "ulam_trials": 100,
    "ulam_nz": 4,
    "ulam_nx": 32,
    "invariance_steps": 12,
    "invariance_burn_in": 2,
}

# ─── Finite-N Defaults ────────────────────────────────────────────────
DEFAULT_N_LIST = (100, 400, 1600)
DEFAULT_SWEEP_T = 3
DEFAULT_SWEEP_R = 2000
DEFAULT_CONCENTRATION_N = 400
DEFAULT_CONCENTRATION_R = 10000

GRAPHON_KINDS = ("constant", "block", "translation", "step_er")
INITIAL_KINDS = ("uniform", "sinusoid", "two_cluster")
SWEEP_GRAPHS = ("quantized", "er")


@dataclass
class ExperimentConfig:
    # model
    map: str = "perturbed_doubling(0.3)"
    map_eps: float = None
    coupling: str = "h1"
    alpha: float = None
    alpha_fraction: float = None
    initial: str = "sinusoid"
    amplitude: float = 0.5
    # graphon
    graphon: str = "constant"
    p: float = 0.5
    cuts: list = field(default_factory=lambda: [0.5])
    values: list = field(default_factory=lambda: [[1.0, 0.2], [0.2, 0.5]])
    xi: str = "linear"
    rate: float = 5.0
    graphon_N: int = 100
    graphon_seed: int = None
    # grid
    nz: int = DEFAULT_NZ
    nx: int = DEFAULT_NX
    # solver
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    strict: bool = True
    p_exp: float = DEFAULT_P_EXP
    # probes
    probes: list = field(default_factory=lambda: list(DEFAULT_PROBES))
    probe_params: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    # sweep
    sweep: bool = False
    graph: str = "quantized"
    N_list: list = field(default_factory=lambda: list(DEFAULT_N_LIST))
    t: int = DEFAULT_SWEEP_T
    R: int = DEFAULT_SWEEP_R
    z_stars: list = field(default_factory=lambda: [0.1, 0.5, 0.9])
    # concentration
    concentration_N: int = DEFAULT_CONCENTRATION_N
    concentration_R: int = DEFAULT_CONCENTRATION_R
    concentration_t: int = 0
    concentration_node: int = 0
    concentration_x: float = 0.25
    eps: list = field(default_factory=list)
    # run
    seed: int = DEFAULT_SEED
    out_dir: str = str(OUTPUT_DIR)
    threads: int = None
    preset: str = None
    # derived
    alpha_warning: bool = False

    def threshold_table(self):
        return {**PROBE_THRESHOLDS, **self.thresholds}

    def param_table(self):
        return {**PROBE_PARAMS, **self.probe_params}

    def to_dict(self):
        """Config echo for reports; `threads` is left out since it never changes results."""
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("threads", "out_dir")}
        return json.loads(json.dumps(out))

    def config_hash(self):
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


# ─── Schema ───────────────────────────────────────────────────────────
# section -> key -> (attribute, type)
SCHEMA = {
    "model": {
        "map": ("map", "str"),
        "map_eps": ("map_eps", "float"),
        "coupling": ("coupling", "str"),
        "alpha": ("alpha", "float"),
        "alpha_fraction": ("alpha_fraction", "float"),
        "initial": ("initial", "str"),
        "amplitude": ("amplitude", "float"),
    },
    "graphon": {
        "type": ("graphon", "str"),
        "p": ("p", "float"),
        "cuts": ("cuts", "floats"),
        "values": ("values", "matrix"),
        "xi": ("xi", "str"),
        "rate": ("rate", "float"),
        "N": ("graphon_N", "int"),
        "seed": ("graphon_seed", "int"),
    },
    "grid": {
        "nz": ("nz", "int"),
        "nx": ("nx", "int"),
    },
    "solver": {
        "tol": ("tol", "float"),
        "max_iter": ("max_iter", "int"),
        "strict": ("strict", "bool"),
        "p_exp": ("p_exp", "float"),
    },
    "probes": {
        "names": ("probes", "strs"),
        **{key: (key, "int") for key in PROBE_PARAMS},
    },
    "thresholds": {name: (name, "float") for name in PROBES},
    "sweep": {
        "enabled": ("sweep", "bool"),
        "graph": ("graph", "str"),
        "N_list": ("N_list", "ints"),
        "t": ("t", "int"),
        "R": ("R", "int"),
        "z_star": ("z_stars", "floats"),
    },
    "concentration": {
        "N": ("concentration_N", "int"),
        "R": ("concentration_R", "int"),
        "t": ("concentration_t", "int"),
        "node": ("concentration_node", "int"),
        "x": ("concentration_x", "float"),
        "eps": ("eps", "floats"),
    },
    "run": {
        "seed": ("seed", "int"),
        "out_dir": ("out_dir", "str"),
        "threads": ("threads", "int"),
        "preset": ("preset", "str"),
    },
}

_BOOLS = {"true": True, "yes": True, "on": True, "1": True, "false": False, "no": False, "off": False, "0": False}


def _strip_quotes(text):
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


def _as_list(raw):
    if isinstance(raw, (list, tuple)):
        return list(raw)
    text = _strip_quotes(str(raw))
    if text.startswith("["):
        return json.loads(text)
    return [_strip_quotes(part) for part in text.split(",") if part.strip()]


def _convert(raw, kind):
    """Convert a raw INI string or JSON value to `kind`; raises ValueError/TypeError on mismatch."""
    if kind == "str":
        if not isinstance(raw, str):
            raise TypeError(f"expected a string, got {type(raw).__name__}")
        return _strip_quotes(raw)
    if kind == "int":
        if isinstance(raw, bool) or isinstance(raw, float):
            raise TypeError(f"expected an integer, got {raw!r}")
        return int(_strip_quotes(raw)) if isinstance(raw, str) else int(raw)
    if kind == "float":
        if isinstance(raw, bool):
            raise TypeError(f"expected a number, got {raw!r}")
        return float(_strip_quotes(raw)) if isinstance(raw, str) else float(raw)
    if kind == "bool":
        if isinstance(raw, bool):
            return raw
        key = _strip_quotes(str(raw)).lower()
        if key not in _BOOLS:
            raise ValueError(f"expected a boolean, got {raw!r}")
        return _BOOLS[key]
    if kind == "ints":
        return [_convert(v, "int") for v in _as_list(raw)]
    if kind == "floats":
        return [_convert(v, "float") for v in _as_list(raw)]
    if kind == "strs":
        return [str(v).strip() for v in _as_list(raw)]
    if kind == "matrix":
        rows = json.loads(_strip_quotes(raw)) if isinstance(raw, str) else raw
        return [[_convert(v, "float") for v in row] for row in rows]
    raise ValueError(f"unknown type {kind}")


# ─── Line lookup ──────────────────────────────────────────────────────

def _ini_line(text, section, key):
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        header = re.match(r"^\s*\[([^\]]+)\]", line)
        if header:
            current = header.group(1).strip()
            continue
        if current == section and re.match(rf"^\s*{re.escape(key)}\s*[=:]", line):
            return lineno
    return None


def _json_line(text, section, key):
    needles = [f'"{section}.{key}"', f'"{key}"']
    for needle in needles:
        for lineno, line in enumerate(text.splitlines(), start=1):
            if needle in line:
                return lineno
    return None


# ─── Readers ──────────────────────────────────────────────────────────

def _read_ini(text):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError("parse_error", "missing section header", e.lineno)
    except configparser.ParsingError as e:
        lineno = e.errors[0][0] if e.errors else None
        raise ConfigError("parse_error", "malformed line", lineno)
    except configparser.Error as e:
        raise ConfigError("parse_error", str(e).splitlines()[0], getattr(e, "lineno", None))
    entries = []
    for section in parser.sections():
        for key, value in parser.items(section):
            entries.append((section, key, value))
    return entries


def _read_json(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("parse_error", e.msg, e.lineno)
    if not isinstance(data, dict):
        raise ConfigError("parse_error", "top-level JSON value must be an object", 1)
    entries = []
    for name, value in data.items():
        if isinstance(value, dict):
            for key, inner in value.items():
                entries.append((name, key, inner))
        elif "." in name:
            section, key = name.split(".", 1)
            entries.append((section, key, value))
        else:
            raise ConfigError("unknown_key", f"key {name!r} is not inside a section", _json_line(text, "", name))
    return entries


def _looks_like_json(path, text):
    return path.suffix.lower() == ".json" or text.lstrip().startswith("{")


def parse_config(path):
    """
    Parse an experiment file (INI or JSON) into a validated ExperimentConfig.
    A `preset` key in [run] seeds the defaults; the rest of the file overrides it.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError("missing_file", f"config file not found: {path}")
    text = path.read_text()
    is_json = _looks_like_json(path, text)
    entries = _read_json(text) if is_json else _read_ini(text)
    locate = _json_line if is_json else _ini_line

    updates = {}
    lines = {}
    for section, key, raw in entries:
        line = locate(text, section, key)
        if section not in SCHEMA:
            raise ConfigError("unknown_key", f"unknown section [{section}]", line)
        if key not in SCHEMA[section]:
            raise ConfigError("unknown_key", f"unknown key {section}.{key}", line)
        attr, kind = SCHEMA[section][key]
        try:
            value = _convert(raw, kind)
        except (TypeError, ValueError) as e:
            raise ConfigError("type_mismatch", f"{section}.{key}: {e}", line)
        if section == "thresholds":
            updates.setdefault("thresholds", {})[attr] = value
        elif section == "probes" and key != "names":
            updates.setdefault("probe_params", {})[attr] = value
        else:
            updates[attr] = value
        lines[attr] = line

    base = preset_config(updates["preset"]) if updates.get("preset") else ExperimentConfig()
    if "thresholds" in updates:
        updates["thresholds"] = {**base.thresholds, **updates["thresholds"]}
    if "probe_params" in updates:
        updates["probe_params"] = {**base.probe_params, **updates["probe_params"]}
    # an explicit alpha in the file replaces a preset's alpha_fraction and vice versa
    if "alpha" in updates and "alpha_fraction" not in updates:
        updates["alpha_fraction"] = None
    if "alpha_fraction" in updates and "alpha" not in updates:
        updates["alpha"] = None
    config = replace(base, **updates)
    config = validate(config, lines)
    logger.info(f"[Config] loaded {path.name} (hash {config.config_hash()})")
    return config


# ─── Validation ───────────────────────────────────────────────────────

def _invalid(message, lines, attr):
    return ConfigError("invalid_value", message, lines.get(attr))


def validate(config, lines=None):
    """Check ranges and names, resolve alpha, and set the warning flag."""
    lines = lines or {}
    if not config.tol > 0:
        raise _invalid(f"tol must be positive, got {config.tol}", lines, "tol")
    if config.max_iter < 1:
        raise _invalid(f"max_iter must be >= 1, got {config.max_iter}", lines, "max_iter")
    for attr in ("nz", "nx"):
        if getattr(config, attr) < 2:
            raise _invalid(f"{attr} must be >= 2, got {getattr(config, attr)}", lines, attr)
    if config.graphon not in GRAPHON_KINDS:
        raise ConfigError("unresolvable_name", f"graphon.type: unknown type {config.graphon!r}", lines.get("graphon"))
    if config.initial not in INITIAL_KINDS:
        raise ConfigError("unresolvable_name", f"model.initial: unknown profile {config.initial!r}", lines.get("initial"))
    if config.graph not in SWEEP_GRAPHS:
        raise ConfigError("unresolvable_name", f"sweep.graph: unknown graph family {config.graph!r}", lines.get("graph"))
    for name in config.probes:
        if name not in PROBES:
            raise ConfigError("unresolvable_name", f"probes.names: unknown probe {name!r}", lines.get("probes"))
    if len(set(config.probes)) != len(config.probes):
        raise _invalid("probes.names lists a probe twice", lines, "probes")
    if any(not 0.0 <= z <= 1.0 for z in config.z_stars):
        raise _invalid("sweep.z_star values must lie in [0, 1]", lines, "z_stars")
    if any(b <= a for a, b in zip(config.N_list, config.N_list[1:])) or not config.N_list:
        raise _invalid("sweep.N_list must be a non-empty increasing list", lines, "N_list")
    if config.alpha is not None and config.alpha_fraction is not None:
        raise _invalid("give either model.alpha or model.alpha_fraction, not both", lines, "alpha")

    try:
        f = circle_maps.lookup_map(config.map, config.map_eps)
    except KeyError:
        raise ConfigError("unresolvable_name", f"model.map: unknown map {config.map!r}", lines.get("map"))
    except ParameterError as e:
        raise _invalid(f"model.map: {e}", lines, "map")
    try:
        h = circle_maps.lookup_coupling(config.coupling)
    except KeyError:
        raise ConfigError("unresolvable_name", f"model.coupling: unknown coupling {config.coupling!r}", lines.get("coupling"))
    try:
        W = build_graphon(config)
    except ParameterError as e:
        raise _invalid(f"graphon: {e}", lines, "graphon")

    alpha = config.alpha
    if alpha is None:
        fraction = DEFAULT_ALPHA_FRACTION if config.alpha_fraction is None else config.alpha_fraction
        a_hat = sto.alpha_hat(f, h)
        if not math.isfinite(a_hat):
            alpha = 0.0
        else:
            alpha = fraction * a_hat / W.linf_l1_bound
    if not math.isfinite(alpha):
        raise _invalid(f"alpha must be finite, got {alpha}", lines, "alpha")
    alpha_warning = not sto.in_certified_regime(f, h, W, alpha)
    if alpha_warning:
        logger.warning(f"[Config] alpha={alpha:.6g} is outside the certified regime")
    return replace(config, alpha=float(alpha), alpha_warning=alpha_warning)


# ─── Model construction ───────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class Model:
    f: object
    h: object
    W: object
    alpha: float
    phi0: object
    scenario: object


def build_graphon(config):
    if config.graphon == "constant":
        return ConstantGraphon(config.p)
    if config.graphon == "block":
        return BlockGraphon(tuple(config.cuts), np.asarray(config.values, dtype=float))
    if config.graphon == "step_er":
        seed = config.seed if config.graphon_seed is None else config.graphon_seed
        return step_graphon_from_matrix(sample_er(config.graphon_N, config.p, seed))
    return translation_graphon(config.xi, config.rate)


def build_initial(config, nz=None, nx=None):
    nz = nz or config.nz
    nx = nx or config.nx
    if config.initial == "uniform":
        return uniform_fibered(nz, nx)
    if config.initial == "two_cluster":
        nu1 = density_from_function(sinusoid(config.amplitude, 0.0), nx)
        nu2 = density_from_function(sinusoid(config.amplitude, 0.5), nx)
        cut = config.cuts[0] if config.graphon == "block" and config.cuts else 0.5
        return two_cluster(nz, nx, nu1, nu2, cut)
    return make_profile(nz, nx, lambda z: sinusoid(config.amplitude, 0.25 * z))


def build_scenario(config, W):
    name = config.preset or config.graphon
    if config.graph == "er":
        if config.graphon != "constant":
            raise ParameterError("the er graph family needs a constant graphon limit")
        return er_scenario(config.p, name)
    return quantized_scenario(name, W)


def build_model(config):
    """Resolve every name in the config into the objects the solver runs on."""
    W = build_graphon(config)
    return Model(
        f=circle_maps.lookup_map(config.map, config.map_eps),
        h=circle_maps.lookup_coupling(config.coupling),
        W=W,
        alpha=config.alpha,
        phi0=build_initial(config),
        scenario=build_scenario(config, W),
    )


# ─── Presets ──────────────────────────────────────────────────────────

PRESETS = {
    "clustered": {
        "description": "two groups: block graphon cut at 1/2, two-cluster initial state",
        "graphon": "block",
        "cuts": [0.5],
        "values": [[1.0, 0.2], [0.2, 0.5]],
        "initial": "two_cluster",
        "graph": "quantized",
        "z_stars": [0.25, 0.75],
    },
    "decay": {
        "description": "spatially decaying interactions: W(z, z') = 1 - |z - z'|",
        "graphon": "translation",
        "xi": "linear",
        "initial": "sinusoid",
        "graph": "quantized",
        "z_stars": [0.1, 0.5, 0.9],
    },
    "er": {
        "description": "Erdos-Renyi graphs G(N, 1/2) against the constant graphon",
        "graphon": "constant",
        "p": 0.5,
        "initial": "sinusoid",
        "graph": "er",
        "z_stars": [0.1, 0.5, 0.9],
        "probes": list(DEFAULT_PROBES) + ["concentration"],
    },
}


def preset_config(name):
    if name not in PRESETS:
        raise ConfigError("unresolvable_name", f"unknown preset {name!r}")
    overrides = {k: v for k, v in PRESETS[name].items() if k != "description"}
    return ExperimentConfig(
        map="perturbed_doubling(0.3)",
        coupling="h1",
        alpha_fraction=DEFAULT_ALPHA_FRACTION,
        preset=name,
        **overrides,
    )


def load_preset(name):
    return validate(preset_config(name))
