"""Run orchestration: wiring configs into scenarios, simulations, and output
directories with reproducibility manifests.

Every output directory contains a manifest with the raw config, its digest,
the scenario content hash, and the seed: enough to reproduce the run
bit-exactly. Deterministic artifacts (logs, schedules, metrics) never include
wall-clock measurements; those go to a separate timing file.
"""
from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import asdict

import yaml

from . import __version__
from .config import (
    ConfigError,
    RunConfig,
    ScenarioConfig,
    config_digest,
    load_run_config,
    load_scenario_config,
)
from .evaluation import (
    RunMetrics,
    compute_run_metrics,
    predictor_error_curve,
    write_error_curve_csv,
)
from .executive import ExecutiveConfig, RunResult, SimulationSetup, run
from .network import write_deliveries_csv
from .orbits import build_walker
from .scenario import (
    PerturbationSpec,
    ResponseKernel,
    Scenario,
    generate_scenario,
    load_scenario,
    save_scenario,
)
from .attitude import SlewModel
from .scheduler import SchedulePath, write_schedule_csv

logger = logging.getLogger(__name__)

PARTIAL_MARKER = "INCOMPLETE"


def out_root() -> str:
    """Output root directory; overridable via FLOODSAT_OUT_ROOT only."""
    return os.environ.get("FLOODSAT_OUT_ROOT", ".")


def resolve_out(path: str) -> str:
    if os.path.isabs(path):
        return path
    return os.path.join(out_root(), path)


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    """Generate a scenario from its validated config."""
    return generate_scenario(
        region_specs=[asdict(r) for r in cfg.regions],
        horizon_s=cfg.horizon_s,
        seed=cfg.seed,
        perturbation=PerturbationSpec(**asdict(cfg.perturbation)),
        value_table=tuple(tuple(row) for row in cfg.value_table),
        kernel=ResponseKernel(**asdict(cfg.kernel)),
        slot_s=cfg.slot_s,
        **asdict(cfg.truth),
    )


def generate_scenario_cmd(
    config_path: str, out_dir: str, seed_override: int | None = None
) -> Scenario:
    cfg = load_scenario_config(config_path, seed_override)
    scenario = build_scenario(cfg)
    out_dir = resolve_out(out_dir)
    save_scenario(scenario, out_dir)
    manifest = {
        "kind": "scenario",
        "package_version": __version__,
        "seed": cfg.seed,
        "config": asdict(cfg),
        "config_digest": config_digest(asdict(cfg)),
        "content_hash": scenario.content_hash(),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info("scenario written to %s", out_dir)
    return scenario


def build_setup(cfg: RunConfig, scenario: Scenario) -> SimulationSetup:
    constellation = build_walker(
        n_sats=cfg.constellation.n_sats,
        n_planes=cfg.constellation.n_planes,
        altitude_km=cfg.constellation.altitude_km,
        inclination_deg=cfg.constellation.inclination_deg,
        phasing=cfg.constellation.phasing,
        raan0_deg=cfg.constellation.raan0_deg,
    )
    exec_cfg = ExecutiveConfig(**asdict(cfg.executive))
    return SimulationSetup(
        constellation=constellation,
        scenario=scenario,
        sim_duration_s=cfg.sim_duration_s,
        config=exec_cfg,
        slew_model=SlewModel(**asdict(cfg.slew)),
    )


def execute_run(cfg: RunConfig) -> tuple[Scenario, RunResult, RunMetrics]:
    """Load the scenario, run the configured mode, and compute metrics."""
    scenario = load_scenario(cfg.scenario_dir)
    setup = build_setup(cfg, scenario)
    result = run(setup)
    metrics = compute_run_metrics(
        scenario,
        result,
        mode=cfg.executive.mode,
        plan_horizon_s=(
            cfg.executive.plan_horizon_s
            if cfg.executive.mode == "onboard"
            else cfg.executive.gs_contact_cadence_s
        ),
        thresholds=cfg.evaluation.category_thresholds,
    )
    return scenario, result, metrics


def write_observations_csv(
    scenario: Scenario, result: RunResult, path: str
) -> None:
    """Observation logs as CSV: sat_id, gp_id, t_s, precip_mm, flood_true."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sat_id", "gp_id", "t_s", "precip_mm", "flood_true"])
        for sat_id in sorted(result.observation_logs):
            for e in result.observation_logs[sat_id]:
                writer.writerow(
                    [
                        e.sat_id,
                        int(scenario.gp_ids[e.gp_index]),
                        f"{e.t_s:.3f}",
                        f"{e.precip_mm:.9f}",
                        f"{e.flood_true:.9f}",
                    ]
                )


def write_run_outputs(
    out_dir: str,
    cfg: RunConfig,
    scenario: Scenario,
    result: RunResult,
    metrics: RunMetrics,
) -> None:
    os.makedirs(out_dir, exist_ok=True)
    marker = os.path.join(out_dir, PARTIAL_MARKER)
    with open(marker, "w") as f:
        f.write("run in progress or failed; outputs may be partial\n")

    write_observations_csv(scenario, result, os.path.join(out_dir, "observations.csv"))
    write_deliveries_csv(result.delivery_records, os.path.join(out_dir, "deliveries.csv"))
    paths = [
        SchedulePath(sat_id=s, nodes=result.schedules[s])
        for s in sorted(result.schedules)
    ]
    gp_id_of = {i: int(g) for i, g in enumerate(scenario.gp_ids)}
    write_schedule_csv(paths, os.path.join(out_dir, "schedule.csv"), gp_id_of)

    with open(os.path.join(out_dir, "metrics.json"), "w") as f:
        json.dump(metrics.as_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    timing = {
        "plans": [
            {
                "sat_id": e.sat_id,
                "epoch_s": e.epoch_s,
                "work_units": e.work_units,
                "modeled_runtime_s": round(e.modeled_runtime_s, 6),
                "wall_runtime_s": round(e.wall_runtime_s, 6),
                "skipped": e.skipped,
                "n_nodes": e.n_nodes,
            }
            for e in result.plan_events
        ],
        "max_wall_runtime_s": metrics.max_wall_runtime_s,
    }
    with open(os.path.join(out_dir, "timing.json"), "w") as f:
        json.dump(timing, f, indent=2, sort_keys=True)
        f.write("\n")
    manifest = {
        "kind": "run",
        "package_version": __version__,
        "seed": cfg.seed,
        "label": cfg.label,
        "config": asdict(cfg),
        "config_digest": config_digest(asdict(cfg)),
        "scenario_hash": scenario.content_hash(),
        "outputs": [
            "observations.csv",
            "deliveries.csv",
            "schedule.csv",
            "metrics.json",
            "timing.json",
        ],
        "warnings": result.warnings,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    os.remove(marker)


def run_cmd(
    config_path: str,
    out_dir: str,
    seed_override: int | None = None,
    scenario_override: str | None = None,
) -> RunMetrics:
    cfg = load_run_config(config_path, seed_override, scenario_override)
    out_dir = resolve_out(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    marker = os.path.join(out_dir, PARTIAL_MARKER)
    with open(marker, "w") as f:
        f.write("run in progress or failed; outputs may be partial\n")
    scenario, result, metrics = execute_run(cfg)
    write_run_outputs(out_dir, cfg, scenario, result, metrics)
    if os.path.exists(marker):
        os.remove(marker)
    return metrics


def compare_cmd(config_paths: list[str], out_dir: str) -> list[dict]:
    """Run each config on its (shared) scenario and emit the comparison table."""
    from .evaluation import ComparisonMismatchError, compare_modes, write_comparison_csv

    if len(config_paths) < 2:
        raise ComparisonMismatchError("comparison requires at least two run configs")
    rows = []
    hashes = []
    out_dir = resolve_out(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    for i, path in enumerate(config_paths):
        cfg = load_run_config(path)
        scenario, result, metrics = execute_run(cfg)
        label = cfg.label or f"run{i}"
        sub = os.path.join(out_dir, label)
        write_run_outputs(sub, cfg, scenario, result, metrics)
        hashes.append(scenario.content_hash())
        rows.append(
            {
                "label": label,
                "total_flood_magnitude": metrics.total_flood_magnitude,
                "per_observation": metrics.per_observation,
                "n_observations": metrics.n_observations,
                "max_modeled_runtime_s": metrics.max_modeled_runtime_s,
                "plan_horizon_s": metrics.plan_horizon_s,
            }
        )
    table = compare_modes(rows, hashes)
    write_comparison_csv(table, os.path.join(out_dir, "compare.csv"))
    return table


def evaluate_error_curve_cmd(
    scenario_dir: str,
    out_file: str,
    n_updates_grid: list[int] | None = None,
    frequency_grid: list[int] | None = None,
) -> list[dict]:
    scenario = load_scenario(scenario_dir)
    n_updates_grid = n_updates_grid or [1, 2, 4, 7]
    frequency_grid = frequency_grid or [1, 2, 3, 4, 6, 8, 12]
    rows = predictor_error_curve(scenario, n_updates_grid, frequency_grid)
    write_error_curve_csv(rows, resolve_out(out_file))
    return rows


def evaluate_run_cmd(run_dir: str) -> dict:
    """Recompute metrics of an existing run directory from its logs."""
    from .executive import ObservationEntry

    run_dir = resolve_out(run_dir)
    with open(os.path.join(run_dir, "manifest.json")) as f:
        manifest = json.load(f)
    cfg_dict = manifest["config"]
    scenario = load_scenario(cfg_dict["scenario_dir"])
    index = scenario.gp_index
    logs: dict[int, list[ObservationEntry]] = {}
    with open(os.path.join(run_dir, "observations.csv"), newline="") as f:
        for row in csv.DictReader(f):
            e = ObservationEntry(
                sat_id=int(row["sat_id"]),
                gp_index=index[int(row["gp_id"])],
                t_s=float(row["t_s"]),
                precip_mm=float(row["precip_mm"]),
                flood_true=float(row["flood_true"]),
            )
            logs.setdefault(e.sat_id, []).append(e)
    from .evaluation import category_counts, total_flood_magnitude

    total, unique_nodes = total_flood_magnitude(scenario, logs)
    n_obs = sum(len(v) for v in logs.values())
    return {
        "total_flood_magnitude": total,
        "n_observations": n_obs,
        "per_observation": total / n_obs if n_obs else 0.0,
        "unique_observed_nodes": unique_nodes,
        "category_counts": category_counts(scenario, logs),
        "scenario_hash": manifest.get("scenario_hash"),
    }
