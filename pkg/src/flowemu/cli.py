"""Command-line driver: ``flowemu {run,simulate,build,rollout,analyze,batch}``.

Stages communicate only through files in the output directory, so running
``simulate``, ``build``, ``rollout`` and ``analyze`` in turn produces the
same bytes as ``run``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import __version__
from . import analysis, emulator as em
from .config import ExperimentConfig, load_config
from .design import BoundingBox, estimate_bounds, latin_hypercube
from .dynsys import generate_training, samples_to_arrays, simulate
from .errors import ConfigError, FlowEmuError, NumericalError, UsageError
from .propagate import Mode, PropagationConfig

logger = logging.getLogger("flowemu")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class MissingArtifactError(UsageError):
    """An upstream stage has not been run for this output directory."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def provenance(cfg: ExperimentConfig, **extra) -> dict:
    return {"tool": "flowemu", "version": __version__, "system": cfg.system,
            "seeds": cfg.seeds, **extra}


def write_csv(path: Path, header: list[str], rows, prov: dict) -> Path:
    """UTF-8 CSV with ``#`` provenance lines before the header row."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {json.dumps(prov, sort_keys=True)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    if not Path(path).exists():
        raise MissingArtifactError(f"missing upstream artifact {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    data = np.array([[float(v) for v in row] for row in reader], dtype=float)
    return header, data.reshape(-1, len(header))


def trajectory_header(d: int) -> list[str]:
    return (["t"] + [f"mean_{i + 1}" for i in range(d)]
            + [f"sd_{i + 1}" for i in range(d)] + ["det_cov"])


def paths(out: Path, mode: str | None = None) -> dict:
    out = Path(out)
    p = {"training": out / "training.csv", "emulator": out / "emulator.npz",
         "truth": out / "truth.csv"}
    if mode is not None:
        p["trajectory"] = out / f"trajectory_{mode}.csv"
        p["report"] = out / f"report_{mode}.json"
    return p


def resolve_box(cfg: ExperimentConfig) -> BoundingBox:
    if cfg.box_mode == "explicit":
        return BoundingBox(cfg.box_lower, cfg.box_upper)
    probe = cfg.probe if cfg.probe is not None else (0.1,) * cfg.dim
    return estimate_bounds(cfg.system_instance(), probe, cfg.probe_horizon, cfg.margin,
                           cfg.dt, (cfg.atol, cfg.rtol))


def stage_simulate(cfg: ExperimentConfig, out: Path | None = None, x0=None) -> Path:
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    x0 = cfg.x0 if x0 is None else tuple(x0)
    truth = simulate(cfg.system_instance(), x0, cfg.dt, cfg.steps, (cfg.atol, cfg.rtol))
    t = np.arange(cfg.steps + 1) * cfg.dt
    header = ["t"] + [f"x_{i + 1}" for i in range(cfg.dim)]
    return write_csv(paths(out)["truth"], header, np.column_stack([t, truth]),
                     provenance(cfg, stage="simulate", x0=list(x0)))


def stage_build(cfg: ExperimentConfig, out: Path | None = None) -> Path:
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    system = cfg.system_instance()
    box = resolve_box(cfg)
    design = latin_hypercube(cfg.design_size, box, cfg.design_seed)
    X0, X1 = samples_to_arrays(generate_training(system, design, cfg.dt, (cfg.atol, cfg.rtol)))
    prov = provenance(cfg, stage="build", box_lower=box.lower.tolist(),
                      box_upper=box.upper.tolist())
    d = cfg.dim
    write_csv(paths(out)["training"],
              [f"x0_{i + 1}" for i in range(d)] + [f"x1_{i + 1}" for i in range(d)],
              np.hstack([X0, X1]), prov)
    emulator = em.fit_emulator(X0, X1, cfg.dt, box, cfg.kernel, cfg.fit_seed, cfg.restarts,
                               meta={"system": cfg.system})
    return em.save(emulator, paths(out)["emulator"],
                   provenance={**prov, "config": cfg.to_ini()})


def _load_emulator(out: Path) -> em.FlowMapEmulator:
    path = paths(out)["emulator"]
    if not path.exists():
        raise MissingArtifactError(f"missing upstream artifact {path}; run 'build' first")
    return em.load(path)


def stage_rollout(cfg: ExperimentConfig, out: Path | None = None, x0=None,
                  emulator_path: Path | None = None) -> Path:
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    emulator = _load_emulator(Path(emulator_path).parent if emulator_path else out)
    x0 = np.array(cfg.x0 if x0 is None else x0, dtype=float)
    mode = Mode.parse(cfg.mode).value
    pconf = PropagationConfig(mode, cfg.n_mc, cfg.rollout_seed, cfg.antithetic)
    traj = em.rollout(emulator, x0, cfg.steps, pconf)
    rows = np.column_stack([traj.times, traj.means, traj.sds, traj.gen_var])
    prov = provenance(cfg, stage="rollout", mode=mode, n_mc=cfg.n_mc,
                      antithetic=cfg.antithetic, x0=x0.tolist())
    if traj.error:
        prov["error"] = traj.error
    path = write_csv(paths(out, mode)["trajectory"], trajectory_header(emulator.dim), rows, prov)
    if traj.error:
        raise NumericalError(f"rollout stopped early ({traj.error}); partial trajectory in {path}")
    return path


def stage_analyze(cfg: ExperimentConfig, out: Path | None = None,
                  emulator_path: Path | None = None) -> Path:
    out = Path(out or cfg.out)
    mode = Mode.parse(cfg.mode).value
    p = paths(out, mode)
    emulator = _load_emulator(Path(emulator_path).parent if emulator_path else out)
    _, traj = read_csv(p["trajectory"])
    _, truth = read_csv(p["truth"])
    d = emulator.dim
    means, sds, det = traj[:, 1:1 + d], traj[:, 1 + d:1 + 2 * d], traj[:, -1]
    truth = truth[:, 1:]
    if truth.shape != means.shape:
        raise UsageError(f"truth has {len(truth)} rows, trajectory has {len(means)}; "
                         "rerun 'simulate' with the same steps")
    hz = analysis.horizon(sds, cfg.dt)
    err = analysis.error_trace(means, truth)
    report = {
        "provenance": provenance(cfg, stage="analyze", mode=mode),
        "loo_mse": [em.loo_mse(emulator, l) for l in range(d)],
        "horizon": hz.as_dict(),
        "coverage": analysis.coverage_trace(_Traj(means, sds), truth, hz.horizon_index),
        "max_abs_error": err.max(axis=0).tolist(),
        "max_abs_error_before_horizon": err[:hz.horizon_index + 1].max(axis=0).tolist(),
        "mean_det_cov_before_horizon": float(det[:hz.horizon_index].mean()),
        "config": cfg.as_dict(),
        "config_ini": cfg.to_ini(),
    }
    path = p["report"]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


class _Traj(NamedTuple):
    means: np.ndarray
    sds: np.ndarray


def run_experiment(cfg: ExperimentConfig) -> dict:
    """All stages in order; returns the artifact paths."""
    out = Path(cfg.out)
    return {
        "truth": stage_simulate(cfg, out),
        "emulator": stage_build(cfg, out),
        "trajectory": stage_rollout(cfg, out),
        "report": stage_analyze(cfg, out),
    }


def batch_initial_conditions(cfg: ExperimentConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.batch_seed)
    return rng.uniform(cfg.batch_low, cfg.batch_high, size=(cfg.batch_count, cfg.dim))


def run_batch(cfg: ExperimentConfig) -> list[Path]:
    """Shared emulator, one subdirectory per random initial condition."""
    out = Path(cfg.out)
    if not paths(out)["emulator"].exists():
        stage_build(cfg, out)
    emulator_path = paths(out)["emulator"]
    reports = []
    summary = []
    for k, x0 in enumerate(batch_initial_conditions(cfg), start=1):
        sub = out / "batch" / f"ic_{k:02d}"
        sub_cfg = cfg.with_overrides(out=str(sub))
        sub_cfg = ExperimentConfig(**{**sub_cfg.as_dict(), "x0": tuple(x0)})
        stage_simulate(sub_cfg, sub)
        stage_rollout(sub_cfg, sub, emulator_path=emulator_path)
        reports.append(stage_analyze(sub_cfg, sub, emulator_path=emulator_path))
        with open(reports[-1], encoding="utf-8") as fh:
            hz = json.load(fh)["horizon"]
        summary.append([k, *x0, hz["horizon"]])
    write_csv(out / "batch" / "summary.csv",
              ["ic"] + [f"x0_{i + 1}" for i in range(cfg.dim)] + ["horizon"], summary,
              provenance(cfg, stage="batch", mode=Mode.parse(cfg.mode).value))
    return reports


STAGES = {
    "run": run_experiment,
    "simulate": stage_simulate,
    "build": stage_build,
    "rollout": stage_rollout,
    "analyze": stage_analyze,
    "batch": run_batch,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowemu", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"flowemu {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "simulate, build, rollout and analyze in one go",
        "simulate": "integrate the reference trajectory (truth.csv)",
        "build": "design, training runs and GP fits (training.csv, emulator.npz)",
        "rollout": "load emulator.npz and predict (trajectory_<mode>.csv)",
        "analyze": "horizon, coverage and LOO report (report_<mode>.json)",
        "batch": "shared emulator, random initial conditions from [low, high]^d",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="experiment INI file")
        p.add_argument("--seed", type=int, help="override every seed")
        p.add_argument("--mode", choices=[m.value for m in Mode], help="propagation mode")
        p.add_argument("--out", help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.mode, args.out)
    except ConfigError as exc:
        print(f"flowemu: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = STAGES[args.command](cfg)
    except NumericalError as exc:
        print(f"flowemu: numerical failure in stage '{args.command}': {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FlowEmuError as exc:
        print(f"flowemu: error in stage '{args.command}': {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if isinstance(result, dict):
        for key, path in result.items():
            print(f"{key}: {path}")
    elif isinstance(result, list):
        for path in result:
            print(path)
    else:
        print(result)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
