"""Command line: one subcommand per study plus ``run CONFIG``.

Exit status is 0 exactly when every verdict of the study passes.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from . import studies
from .config import STUDIES, ConfigError, ExperimentConfig, build_config, parse_config
from .errors import NonConvergenceError, PreconditionError
from .problems import get_problem
from .weighted import SpatialGrid


@dataclass
class RunManifest:
    config_hash: str
    version: str
    wall_time: float
    verdicts: dict[str, bool]
    files: dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.verdicts) and all(self.verdicts.values())

    def write(self, directory: Path) -> Path:
        path = directory / "manifest.json"
        payload = {
            "config_hash": self.config_hash,
            "version": self.version,
            "wall_time": self.wall_time,
            "verdicts": self.verdicts,
            "files": self.files,
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True))
        return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_table(rows: list[dict], path: Path) -> Path:
    cols: list[str] = []
    for row in rows:
        cols += [k for k in row if k not in cols]
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return path


def _grid(cfg: ExperimentConfig, problem) -> SpatialGrid:
    disc = cfg.discretization
    return SpatialGrid.build(disc.get("d", problem.d), disc.get("R", 8.0), disc.get("nodes", 65), problem.constants.q)


def execute(cfg: ExperimentConfig, threads: int = 1) -> studies.StudyResult:
    """Run the study battery named by the config."""
    disc, opt = cfg.discretization, cfg.options
    problem = cfg.build_problem()
    if cfg.study == "validate":
        return studies.validate_study(problem.constants, opt["level"])
    if cfg.study == "solve-finite":
        return studies.solve_finite_study(problem, disc["T"], disc["dt"], disc["M"], _grid(cfg, problem), cfg.seed, opt["method"], opt["tol"], opt["max_iter"])
    if cfg.study == "solve-infinite":
        return studies.solve_infinite_study(problem, _grid(cfg, problem), cfg.seed, disc.get("horizons"), opt["tol"], disc["dt"], disc["M"], cfg.n_seeds, opt["override"])
    if cfg.study == "picard-study":
        levels = [tuple(lv) for lv in opt["levels"]]
        return studies.picard_study(problem, levels, disc["T"], disc["R"], cfg.seed, opt["tol"], opt["max_iter"], opt["slack"])
    if cfg.study == "mode-study":
        return studies.mode_study(problem, opt["n_list"], disc["T"], disc["dt"], disc["M"], disc["R"], disc["nodes"], cfg.n_seeds, cfg.seed, opt["safety"])
    if cfg.study == "horizon-study":
        grid = SpatialGrid.build(problem.d, disc["R"], disc["nodes"], problem.constants.q)
        return studies.horizon_study(problem, disc["horizons"], disc["dt"], disc["M"], grid, cfg.n_seeds, cfg.seed, opt["safety"], opt["override"])
    if cfg.study == "stationarity":
        names = opt["problems"]
        pairs = []
        for name in names:
            p = problem if name == cfg.problem else get_problem(name)
            grid = SpatialGrid.build(p.d, 1.0, 3) if name == "ou" else SpatialGrid.build(p.d, 4.0, 33)
            pairs.append((p, grid))
        return studies.stationarity_study(pairs, opt["t_values"], opt["r_values"], cfg.seed, disc["dt"], opt["window"], disc["M"], opt["tol"])
    if cfg.study == "weakform":
        levels = [tuple(lv) for lv in opt["levels"]]
        return studies.weakform_study(problem, levels, disc["R"], disc["T"], cfg.n_seeds, cfg.seed, opt["min_slope"], opt["heat_min_order"], threads)
    if cfg.study == "ou-oracle":
        params = cfg.problem_params
        horizon = disc["horizons"][-1]
        return studies.ou_oracle_study(params.get("mu", 0.5), params.get("sigma0", 1.0), problem.constants.K, disc["dt"], horizon, cfg.n_seeds, cfg.seed, opt["override"])
    if cfg.study == "continuity-study":
        return studies.continuity_study(problem, disc["dt"], disc["T"], opt["base"], opt["gap_steps"], disc["M"], disc["R"], disc["nodes"], cfg.n_seeds, cfg.seed, opt["slack"])
    raise ConfigError([f"study {cfg.study!r} has no battery"])


def run(cfg: ExperimentConfig, threads: int = 1) -> RunManifest:
    """Execute the study and write tables, summary and manifest into ``cfg.output_dir``."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    written: list[Path] = []
    try:
        result = execute(cfg, threads)
    except NonConvergenceError as exc:
        trace = out / "residuals.json"
        trace.write_text(json.dumps({"error": str(exc), "residuals": exc.residuals}, indent=2))
        written.append(trace)
        verdicts = {"converged": False}
    except PreconditionError as exc:
        err = out / "error.json"
        err.write_text(json.dumps({"error": str(exc)}, indent=2))
        written.append(err)
        verdicts = {"preconditions": False}
    else:
        verdicts = dict(result.verdicts)
        for name, rows in result.tables.items():
            written.append(write_table(rows, out / f"{name}.csv"))
        for name, path in result.paths.items():
            written += path.export(out / name, cfg.config_hash(), stride=cfg.options.get("stride", 1))
        for name, report in result.reports.items():
            written.append(report.write_json(out / f"{name}_report.json"))
        summary = out / "summary.json"
        summary.write_text(json.dumps({"study": cfg.study, "verdicts": verdicts, "summary": result.summary}, indent=2, sort_keys=True, default=float))
        written.append(summary)
    config_file = out / "config.json"
    recorded = cfg.to_dict()
    recorded.pop("output_dir")
    config_file.write_text(json.dumps(recorded, indent=2, sort_keys=True, default=str))
    written.append(config_file)
    files = {str(p.relative_to(out)): _sha256(p) for p in sorted(written)}
    manifest = RunManifest(cfg.config_hash(), __version__, time.perf_counter() - start, verdicts, files)
    manifest.write(out)
    return manifest


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bdsdelab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--threads", type=int, default=1, help="cap on worker threads")
        p.add_argument("--out", default=None, help="output directory override")

    run_p = sub.add_parser("run", help="run the study named in a config file")
    run_p.add_argument("config")
    common(run_p)
    for study in STUDIES:
        p = sub.add_parser(study, help=f"run the {study} battery")
        p.add_argument("--config", default=None, help="config file; its study.name must match")
        p.add_argument("--problem", default=None, help="benchmark problem id")
        common(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = parse_config(args.config)
        elif args.config:
            cfg = parse_config(args.config)
            if cfg.study != args.command:
                raise ConfigError([f"config names study {cfg.study!r}, command is {args.command!r}"])
        else:
            flat = {"study.name": args.command}
            if args.problem:
                flat["problem.id"] = args.problem
            cfg = build_config(flat)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return 2
    cfg = cfg.with_overrides(args.seed, args.out)
    manifest = run(cfg, max(1, args.threads))
    for name, ok in manifest.verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'} {cfg.study}: {name}")
    print(f"outputs in {cfg.output_dir}")
    return 0 if manifest.passed else 1


if __name__ == "__main__":
    sys.exit(main())
