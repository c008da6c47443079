"""Execution of run configurations: quantum, classical, correspondence, sweep."""

import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from loguru import logger

from .analysis import (
    angle_between,
    envelope,
    fit_phase,
    summarize,
    theoretical_branching_ratio,
)
from .bridges import EventLogBridge
from .classical import ClassicalSolver, ClassicalState, ClassicalTrajectory, stationary_amplitude
from .config import (
    EFFECTIVE_CONFIG_NAME,
    RunConfig,
    apply_overrides,
    load_config,
    param_hash,
    render_config,
    sweep_members,
)
from .enums import OutputFormat, PlotKind, RunMode
from .errors import AnalysisError, ParameterError
from .managers import SimulationSignalManager
from .model import drive_field, peak_adiabaticity_margin
from .outputs import (
    SnapshotRecord,
    TimeSeriesRow,
    emit_plot_data,
    read_snapshot,
    write_snapshot,
    write_table,
    write_timeseries,
)
from .processors import EventProcessor
from .quantum import SplitStepPropagator, init_state, leakage, spin_vector

__all__ = ["RunResult", "Runner", "analyze_directory", "run", "run_file"]

SUMMARY_NAME = "summary.yaml"
SWEEP_SUMMARY_NAME = "sweep_summary.tsv"
CORRESPONDENCE_WEIGHT_LIMIT = 1e-2
SWEEP_COLUMNS = (
    "split_tau",
    "branching_ratio",
    "small_weight_final",
    "final_mean_z",
    "final_std_z",
    "phase",
    "final_z",
    "max_envelope",
)


@dataclass
class RunResult:
    out_dir: Path
    summary: dict[str, Any]
    files: list[Path] = field(default_factory=list)
    exit_status: int = 0


def sample_times(t_end: float, spacing: float, t0: float = 0.0) -> np.ndarray:
    """``t0 + k*spacing`` up to ``t_end``, plus ``t_end`` itself."""
    count = math.floor((t_end - t0) / spacing + 1e-9)
    taus = t0 + spacing * np.arange(count + 1)
    if abs(taus[-1] - t_end) > 1e-12 * max(1.0, abs(t_end)):
        taus = np.append(taus, t_end)
    return taus


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, list | tuple | np.ndarray):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    return value


class Runner:
    """Executes one ``RunConfig`` into its output directory."""

    class Meta:
        event_type = "lifecycle"
        signal_manager = SimulationSignalManager()

    def __init__(self, cfg: RunConfig, event_log: EventLogBridge | None = None):
        self.cfg = cfg
        self.event_log = event_log
        self.mode = cfg.mode.value
        self.out_dir = cfg.output_dir
        self.param_hash = param_hash(cfg)
        self.files: list[Path] = []

    @property
    def sample_spacing(self) -> float:
        return 2.0 * math.pi / self.cfg.run.samples_per_period

    def _record(self, path: Path) -> Path:
        self.files.append(path)
        return path

    @EventProcessor.emits_event(data=["mode", "out_dir", "param_hash"])
    def run(self) -> RunResult:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        config_path = self.out_dir / EFFECTIVE_CONFIG_NAME
        config_path.write_text(render_config(self.cfg), encoding="utf-8")
        self._record(config_path)
        logger.info("{} run -> {} (hash {})", self.mode, self.out_dir, self.param_hash[:12])

        match self.cfg.mode:
            case RunMode.QUANTUM:
                summary = self._run_quantum()[0]
            case RunMode.CLASSICAL:
                summary = self._run_classical()[0]
            case RunMode.CORRESPONDENCE:
                summary = self._run_correspondence()
            case RunMode.SWEEP:
                summary = self._run_sweep()
        summary = _plain({"mode": self.mode, "param_hash": self.param_hash, **summary})
        summary_path = self.out_dir / SUMMARY_NAME
        summary_path.write_text(
            yaml.safe_dump(summary, sort_keys=False, default_flow_style=None),
            encoding="utf-8",
        )
        self._record(summary_path)
        return RunResult(self.out_dir, summary, list(self.files))

    def _run_quantum(self) -> tuple[dict[str, Any], list[TimeSeriesRow]]:
        cfg = self.cfg
        params = cfg.build_params()
        threshold = cfg.run.peak_threshold
        coherent, spin = cfg.coherent(), cfg.spin_init()
        state = init_state(params.grid, coherent, spin, params)
        chi0 = spin.amplitudes(drive_field(params, 0.0))

        rows: list[TimeSeriesRow] = []

        def on_sample(live):
            rows.append(TimeSeriesRow.from_summary(summarize(live, params, threshold)))

        propagator = SplitStepPropagator(
            params, workers=cfg.run.workers, progress_every=cfg.run.progress_every
        )
        final, snapshots = propagator.propagate(
            state,
            cfg.run.t_end,
            cfg.snapshots,
            sample_taus=sample_times(cfg.run.t_end, self.sample_spacing),
            on_sample=on_sample,
        )

        records = [
            SnapshotRecord.from_state(snap, self.param_hash, params, threshold)
            for snap in snapshots
        ]
        if cfg.wants(OutputFormat.SNAPSHOTS):
            for index, record in enumerate(records):
                self._record(write_snapshot(record, self.out_dir / f"snapshot_{index:03d}.tsv"))
        if cfg.wants(OutputFormat.TIMESERIES):
            self._record(write_timeseries(rows, self.out_dir / "timeseries.tsv"))
        self._emit_plots(records, rows)

        two_peak = [r for r in rows if r.n_peaks == 2]
        split_tau = two_peak[0].tau if two_peak else None
        theta = angle_between(spin_vector(chi0), drive_field(params, 0.0).vector)
        last_split = two_peak[-1] if two_peak else None
        report = leakage(final)
        summary: dict[str, Any] = {
            "t_end": cfg.run.t_end,
            "samples": len(rows),
            "split_tau": split_tau,
            "initial_misalignment": theta,
            "predicted_branching_ratio": theoretical_branching_ratio(theta),
            "branching_ratio": (
                last_split.w_small / last_split.w_big if last_split is not None else 0.0
            ),
            "small_weight_final": rows[-1].w_small if rows else math.nan,
            "small_weight_max": max((r.w_small for r in two_peak), default=0.0),
            "final_mean_z": rows[-1].mean_z if rows else math.nan,
            "final_std_z": rows[-1].std_z if rows else math.nan,
            "norm_defect": report.norm_defect,
            "edge_mass": report.edge_mass,
            "peak_adiabaticity_margin": peak_adiabaticity_margin(params),
            "steps": propagator.steps_taken,
            "kappa_history": [[r.tau, r.kappa, r.kappa_residual] for r in two_peak],
            "snapshots": [
                {"tau": rec.tau, "n_peaks": rec.row.n_peaks, "w_small": rec.row.w_small}
                for rec in records
            ],
        }
        if cfg.run.phase_window is not None:
            summary["phase_fit"] = self._phase_fit(rows)
            summary["phase"] = summary["phase_fit"].get("phase", math.nan)
        return summary, rows

    def _phase_fit(self, rows: list[TimeSeriesRow]) -> dict[str, Any]:
        series = [(r.tau, r.mean_z) for r in rows]
        try:
            fit = fit_phase(series, self.cfg.run.phase_window)
        except AnalysisError as ex:
            logger.warning("phase fit skipped: {}", ex)
            return {"error": str(ex)}
        return {
            "amplitude": fit.amplitude,
            "phase": fit.phase,
            "drift": fit.drift,
            "window": list(fit.fit_window),
            "residual_rms": fit.residual_rms,
            "relative_residual": fit.relative_residual,
            "reliable": fit.reliable,
        }

    def _emit_plots(self, records: list[SnapshotRecord], rows: list[TimeSeriesRow]) -> None:
        plots_dir = self.out_dir / "plots"
        if records and self.cfg.wants(OutputFormat.DENSITY_PANELS):
            self.files.extend(emit_plot_data(records, PlotKind.DENSITY_PANELS, plots_dir))
        for fmt, kind in (
            (OutputFormat.TRAJECTORY, PlotKind.TRAJECTORY),
            (OutputFormat.DECOMPOSITION, PlotKind.DECOMPOSITION),
        ):
            if rows and self.cfg.wants(fmt):
                self.files.extend(emit_plot_data(rows, kind, plots_dir))

    def _classical_trajectory(self) -> ClassicalTrajectory:
        cfg = self.cfg
        params = cfg.build_params()
        init = ClassicalState.from_quantum(cfg.coherent(), cfg.spin_init(), params)
        solver = ClassicalSolver(params, rtol=cfg.run.classical_rtol)
        return solver.integrate(init, cfg.run.t_end, self.sample_spacing)

    def _run_classical(self) -> tuple[dict[str, Any], ClassicalTrajectory]:
        cfg = self.cfg
        trajectory = self._classical_trajectory()
        if cfg.wants(OutputFormat.TIMESERIES):
            self._record(
                write_table(
                    self.out_dir / "classical.tsv",
                    (
                        ("tau", "1"),
                        ("z", "1"),
                        ("p", "1"),
                        ("spin_x", "hbar"),
                        ("spin_y", "hbar"),
                        ("spin_z", "hbar"),
                    ),
                    np.column_stack(
                        [trajectory.taus, trajectory.z, trajectory.p, trajectory.spin]
                    ),
                )
            )
        env = envelope(trajectory.taus, trajectory.z)
        final = trajectory.final
        summary: dict[str, Any] = {
            "t_end": cfg.run.t_end,
            "samples": len(trajectory),
            "final_z": final.z,
            "final_p": final.p,
            "final_spin": list(final.spin),
            "max_envelope": float(env.max()),
            "spin_drift_rate": trajectory.spin_drift_rate(),
        }
        if cfg.physical is not None:
            try:
                summary["stationary_amplitude_m"] = stationary_amplitude(
                    cfg.build_params(),
                    cfg.physical,
                    trajectory.state_at(0),
                )
            except ParameterError as ex:
                logger.warning("stationary amplitude skipped: {}", ex)
                summary["stationary_amplitude_m"] = None
        return summary, trajectory

    def _run_correspondence(self) -> dict[str, Any]:
        quantum, rows = self._run_quantum()
        classical, trajectory = self._run_classical()
        taus = np.array([r.tau for r in rows])
        mean_z = np.array([r.mean_z for r in rows])
        small = np.nan_to_num(np.array([r.w_small for r in rows]), nan=np.inf)
        classical_z = np.interp(taus, trajectory.taus, trajectory.z)
        env_q = envelope(taus, mean_z)
        env_c = envelope(taus, classical_z)
        deviation = np.abs(env_q - env_c) / np.maximum(env_c, np.finfo(float).tiny)
        self._record(
            write_table(
                self.out_dir / "correspondence.tsv",
                (
                    ("tau", "1"),
                    ("quantum_mean_z", "1"),
                    ("classical_z", "1"),
                    ("quantum_envelope", "1"),
                    ("classical_envelope", "1"),
                    ("envelope_deviation", "1"),
                    ("w_small", "1"),
                ),
                np.column_stack([taus, mean_z, classical_z, env_q, env_c, deviation, small]),
            )
        )
        valid = small < CORRESPONDENCE_WEIGHT_LIMIT
        max_dev = float(deviation[valid].max()) if valid.any() else math.nan
        return {
            "quantum": quantum,
            "classical": classical,
            "max_envelope_deviation": max_dev,
            "compared_until": float(taus[valid][-1]) if valid.any() else None,
        }

    def _run_sweep(self) -> dict[str, Any]:
        members = sweep_members(self.cfg)
        configs = [member.config for member in members]
        workers = min(self.cfg.run.workers, len(configs))
        logger.info("sweep of {} runs on {} worker(s)", len(configs), workers)
        if workers > 1:
            # Fresh interpreters: forked workers would inherit connected bridges.
            context = multiprocessing.get_context("spawn")
            with ProcessPoolExecutor(max_workers=workers, mp_context=context) as pool:
                summaries = list(pool.map(_run_member, configs))
        else:
            # Members write their own logs; keep them out of this one.
            quiet = self.event_log.paused() if self.event_log is not None else nullcontext()
            with quiet:
                summaries = [_run_member(member_cfg) for member_cfg in configs]

        axes = list(self.cfg.sweep.axes)
        lines = ["# " + "\t".join(["run", *axes, *SWEEP_COLUMNS])]
        table = []
        for member, summary in zip(members, summaries, strict=True):
            entry = {"run": member.label, **member.values}
            entry.update({key: summary.get(key) for key in SWEEP_COLUMNS})
            table.append(entry)
            cells = [member.label, *(str(member.values[a]) for a in axes)]
            cells += [
                "nan" if summary.get(key) is None else repr(float(summary[key]))
                for key in SWEEP_COLUMNS
            ]
            lines.append("\t".join(cells))
        table_path = self.out_dir / SWEEP_SUMMARY_NAME
        table_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        self._record(table_path)
        return {"runs": len(members), "members": table}


def _run_member(cfg: RunConfig) -> dict[str, Any]:
    """One sweep member; module level so that it pickles into worker processes."""
    return run(cfg, member=cfg.output_dir.name).summary


def run(cfg: RunConfig, member: str | None = None) -> RunResult:
    """Execute ``cfg`` with its events logged to ``events.jsonl`` in the output directory.

    A sweep ``member`` label wraps the run in ``LIFECYCLE_*`` events carrying it.
    """
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    with EventLogBridge(cfg.output_dir) as bridge:
        bridge.connect(SimulationSignalManager())
        if member is None:
            result = Runner(cfg, bridge).run()
        else:
            with EventProcessor.context(
                SimulationSignalManager(), "lifecycle", data={"member": member}
            ):
                result = Runner(cfg, bridge).run()
    result.files.append(bridge.path)
    return result


def run_file(path: str | Path, **overrides) -> RunResult:
    """Load, override and run a configuration file."""
    return run(apply_overrides(load_config(path), **overrides))


def analyze_directory(
    directory: str | Path, threshold_frac: float | None = None
) -> list[TimeSeriesRow]:
    """Re-analyse every ``snapshot_*.tsv`` in ``directory``.

    Writes ``analysis.tsv`` (time-series layout, one row per snapshot) and
    the density-panel and decomposition plot data under ``analysis/``. The
    effective configuration next to the snapshots, when present, supplies the
    peak threshold and the drive for field-alignment angles.
    """
    directory = Path(directory)
    paths = sorted(directory.glob("snapshot_*.tsv"))
    if not paths:
        raise AnalysisError(f"no snapshot files in {directory}")
    params = None
    config_path = directory / EFFECTIVE_CONFIG_NAME
    if config_path.exists():
        cfg = load_config(config_path)
        params = cfg.build_params()
        if threshold_frac is None:
            threshold_frac = cfg.run.peak_threshold
    threshold_frac = 1e-8 if threshold_frac is None else threshold_frac

    records = []
    for path in paths:
        stored = read_snapshot(path)
        record = SnapshotRecord.from_state(
            stored.state(), stored.param_hash, params, threshold_frac
        )
        records.append(record)
        logger.info(
            "{}: tau={:.6g} peaks={} w_small={:.3e}",
            path.name,
            record.tau,
            record.row.n_peaks,
            record.row.w_small,
        )
    rows = [record.row for record in records]
    write_timeseries(rows, directory / "analysis.tsv")
    emit_plot_data(records, PlotKind.DENSITY_PANELS, directory / "analysis")
    emit_plot_data(records, PlotKind.DECOMPOSITION, directory / "analysis")
    return rows
