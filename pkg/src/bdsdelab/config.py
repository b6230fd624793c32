"""Experiment configuration: flat ``key = value`` files with dotted sections.

A file is INI-shaped; ``[discretization]`` followed by ``dt = 0.01`` yields
the key ``discretization.dt``. Values are Python literals where they parse
as such (numbers, lists, booleans) and plain strings otherwise.
"""

from __future__ import annotations

import ast
import configparser
import hashlib
import inspect
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .conditions import ProblemConstants
from .errors import ConfigError, ParameterError
from .problems import REGISTRY, Problem, get_problem

STUDIES = (
    "solve-finite",
    "solve-infinite",
    "picard-study",
    "mode-study",
    "horizon-study",
    "stationarity",
    "weakform",
    "validate",
    "ou-oracle",
    "continuity-study",
)

DISCRETIZATION_KEYS = {"dt", "T", "horizons", "d", "R", "nodes", "M", "J"}

# Per-study defaults: problem id, discretization and study options.
STUDY_DEFAULTS: dict[str, dict] = {
    "validate": {"problem": "ou", "disc": {}, "options": {"level": "infinite"}},
    "solve-finite": {
        "problem": "ou_space",
        "disc": {"dt": 2.0**-6, "T": 1.0, "R": 8.0, "nodes": 65, "M": 32},
        "options": {"method": "march", "tol": 1e-16, "max_iter": 60, "stride": 16},
    },
    "solve-infinite": {
        "problem": "relax",
        "disc": {"dt": 2.0**-4, "R": 1.0, "nodes": 3, "M": 2, "horizons": None},
        "options": {"tol": 1e-2, "override": False, "stride": 64},
        "n_seeds": 2,
    },
    "picard-study": {
        "problem": "nonlinear",
        "disc": {"T": 1.0, "R": 8.0},
        "options": {"levels": [[2.0**-7, 64, 65], [2.0**-8, 256, 129]], "tol": 1e-16, "max_iter": 60, "slack": 0.15},
    },
    "mode-study": {
        "problem": "modes",
        "disc": {"dt": 2.0**-6, "T": 1.0, "R": 8.0, "nodes": 65, "M": 32},
        "options": {"n_list": [2, 4, 8, 16], "safety": 5.0},
        "n_seeds": 64,
    },
    "horizon-study": {
        "problem": "ou",
        "disc": {"dt": 2.0**-4, "R": 1.0, "nodes": 3, "M": 2, "horizons": [4.0, 8.0, 16.0]},
        "options": {"safety": 5.0, "override": False},
        "n_seeds": 128,
    },
    "stationarity": {
        "problem": "ou",
        "disc": {"dt": 2.0**-6, "M": 8},
        "options": {"t_values": [0.0, 0.25, 1.0], "r_values": [0.0, 0.25, 1.0], "window": 2.0, "tol": 1e-12, "problems": ["ou", "nonlinear"]},
    },
    "weakform": {
        "problem": "ou_space",
        "disc": {"T": 1.0, "R": 4.0},
        "options": {"levels": [[2.0**-4, 33, 16], [2.0**-5, 65, 64], [2.0**-6, 129, 256]], "min_slope": 0.4, "heat_min_order": 0.9},
        "n_seeds": 4,
    },
    "ou-oracle": {
        "problem": "ou",
        "disc": {"dt": 2.0**-8, "horizons": [16.0]},
        "options": {"override": False},
        "n_seeds": 64,
    },
    "continuity-study": {
        "problem": "ou_space",
        "disc": {"dt": 2.0**-8, "T": 1.0, "R": 8.0, "nodes": 129, "M": 32},
        "options": {"base": 0.25, "gap_steps": [2, 4, 8, 16, 32, 64], "slack": 0.3},
        "n_seeds": 8,
    },
}


@dataclass
class ExperimentConfig:
    study: str
    problem: str
    problem_params: dict = field(default_factory=dict)
    constants_overrides: dict = field(default_factory=dict)
    discretization: dict = field(default_factory=dict)
    seed: int = 0
    n_seeds: int = 1
    output_dir: str = "out"
    options: dict = field(default_factory=dict)

    def build_problem(self) -> Problem:
        problem = get_problem(self.problem, **self.problem_params)
        if self.constants_overrides:
            problem = problem.with_constants(**self.constants_overrides)
        return problem

    def to_dict(self) -> dict:
        return {
            "study": self.study,
            "problem": self.problem,
            "problem_params": self.problem_params,
            "constants": self.constants_overrides,
            "discretization": self.discretization,
            "seed": self.seed,
            "n_seeds": self.n_seeds,
            "output_dir": self.output_dir,
            "options": self.options,
        }

    def config_hash(self) -> str:
        """sha256 of the canonical JSON form; the output directory is not part of it."""
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()

    def with_overrides(self, seed: int | None = None, output_dir: str | None = None) -> "ExperimentConfig":
        out = self
        if seed is not None:
            out = replace(out, seed=int(seed))
        if output_dir is not None:
            out = replace(out, output_dir=str(output_dir))
        return out


def _literal(raw: str):
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw.strip()


def read_flat(text: str) -> dict[str, object]:
    """Parse INI-shaped text into ``{"section.key": value}``."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    parser.read_string(text)
    flat = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            flat[f"{section}.{key}"] = _literal(raw)
    return flat


def _factory_params(problem: str) -> set[str]:
    return set(inspect.signature(REGISTRY[problem]).parameters)


def build_config(flat: dict[str, object]) -> ExperimentConfig:
    """Validate a flat key map; every violation is collected before raising."""
    violations: list[str] = []
    flat = dict(flat)
    study = flat.pop("study.name", None)
    if study is None:
        raise ConfigError(["study.name is required"])
    if study not in STUDIES:
        raise ConfigError([f"study.name={study!r} is not one of {list(STUDIES)}"])
    defaults = STUDY_DEFAULTS[study]
    problem = flat.pop("problem.id", defaults["problem"])
    if problem not in REGISTRY:
        violations.append(f"problem.id={problem!r} is not one of {sorted(REGISTRY)}")
    disc = dict(defaults["disc"])
    options = dict(defaults["options"])
    params: dict = {}
    consts: dict = {}
    seed = 0
    n_seeds = defaults.get("n_seeds", 1)
    out_dir = "out"
    constant_names = {f.name for f in fields(ProblemConstants)}
    for key, value in flat.items():
        section, _, name = key.partition(".")
        if section == "problem":
            if problem in REGISTRY and name not in _factory_params(problem):
                violations.append(f"unknown key {key}: problem {problem!r} takes {sorted(_factory_params(problem))}")
            params[name] = value
        elif section == "constants":
            if name not in constant_names:
                violations.append(f"unknown key {key}")
            consts[name] = tuple(value) if isinstance(value, list) else value
        elif section == "discretization":
            if name not in DISCRETIZATION_KEYS:
                violations.append(f"unknown key {key}")
            disc[name] = value
        elif section == "seeds" and name in ("master", "count"):
            if not isinstance(value, int) or isinstance(value, bool):
                violations.append(f"{key} must be an integer")
            elif name == "master":
                seed = value
            else:
                n_seeds = value
        elif section == "output" and name == "dir":
            out_dir = str(value)
        elif section == "study":
            if name not in options:
                violations.append(f"unknown key {key}: study {study!r} takes {sorted(options)}")
            options[name] = value
        else:
            violations.append(f"unknown key {key}")
    d = disc.get("d", 1)
    if d not in (1, 2):
        violations.append(f"discretization.d={d}: the grid solver supports d <= 2 only")
    for name in ("dt", "T", "R"):
        if name in disc and not (isinstance(disc[name], (int, float)) and disc[name] > 0):
            violations.append(f"discretization.{name} must be a positive number")
    for name in ("nodes", "M", "J"):
        if name in disc and not (isinstance(disc[name], int) and disc[name] >= (2 if name == "nodes" else 1)):
            violations.append(f"discretization.{name} must be an integer >= {2 if name == 'nodes' else 1}")
    hs = disc.get("horizons")
    if hs is not None and (not isinstance(hs, (list, tuple)) or any(not isinstance(h, (int, float)) or h <= 0 for h in hs)):
        violations.append("discretization.horizons must be a list of positive numbers")
    if n_seeds < 1:
        violations.append("seeds.count must be at least 1")
    if study == "ou-oracle" and n_seeds < 8:
        violations.append("seeds.count must be at least 8 for the OU oracle")
    cfg = ExperimentConfig(study, problem, params, consts, disc, seed, n_seeds, out_dir, options)
    if problem in REGISTRY and not violations:
        try:
            constants = cfg.build_problem().constants
        except (ParameterError, TypeError) as exc:
            violations.append(f"problem or constants rejected: {exc}")
        else:
            if constants.sum_alpha >= 0.5:
                violations.append(f"alphaj sums to {constants.sum_alpha:g}; the contraction needs sum alphaj < 1/2")
            if constants.q <= 3.0:
                violations.append(f"constants.q={constants.q:g} must exceed 3")
    if violations:
        raise ConfigError(violations)
    return cfg


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config file {path} does not exist"])
    try:
        flat = read_flat(path.read_text())
    except configparser.Error as exc:
        raise ConfigError([f"malformed config: {exc}"]) from exc
    return build_config(flat)


def default_config(study: str) -> ExperimentConfig:
    return build_config({"study.name": study})
