"""Delimited text outputs: time series, self-describing snapshots, plot data.

Every table is tab separated with one commented header line of
``name[unit]`` columns; numbers are written with ``%.17g`` so that reruns are
byte identical and values round-trip exactly.
"""

import math
from collections.abc import Sequence
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np
from loguru import logger

from .analysis import DEFAULT_PEAK_THRESHOLD, Densities, StateSummary, density, summarize
from .enums import PlotKind, parse_enum
from .errors import AnalysisError
from .grid import GridSpec
from .model import SimParams
from .quantum import SpinorField

__all__ = [
    "SNAPSHOT_FORMAT",
    "SnapshotRecord",
    "TimeSeriesRow",
    "emit_plot_data",
    "read_snapshot",
    "read_table",
    "write_snapshot",
    "write_table",
    "write_timeseries",
]

SNAPSHOT_FORMAT = "mrfm-spincat-snapshot/1"
NUMBER_FORMAT = "%.17g"

Column = tuple[str, str]

SNAPSHOT_COLUMNS: tuple[Column, ...] = (
    ("z", "1"),
    ("P", "1/z"),
    ("P1", "1/z"),
    ("P2", "1/z"),
    ("re_psi1", "1/sqrt(z)"),
    ("im_psi1", "1/sqrt(z)"),
    ("re_psi2", "1/sqrt(z)"),
    ("im_psi2", "1/sqrt(z)"),
)


@dataclass(frozen=True)
class TimeSeriesRow:
    """One sample of the run's time series; unavailable values are ``nan``."""

    tau: float
    mean_z: float
    std_z: float
    spin_x: float
    spin_y: float
    spin_z: float
    pop_up: float
    pop_down: float
    n_peaks: int
    w_big: float = math.nan
    w_small: float = math.nan
    kappa: float = math.nan
    kappa_residual: float = math.nan
    angle_big: float = math.nan
    angle_small: float = math.nan

    UNITS = {
        "tau": "1",
        "mean_z": "1",
        "std_z": "1",
        "spin_x": "hbar",
        "spin_y": "hbar",
        "spin_z": "hbar",
        "pop_up": "1",
        "pop_down": "1",
        "n_peaks": "count",
        "angle_big": "rad",
        "angle_small": "rad",
    }

    @classmethod
    def columns(cls) -> tuple[Column, ...]:
        return tuple((f.name, cls.UNITS.get(f.name, "1")) for f in fields(cls))

    @classmethod
    def from_summary(cls, summary: StateSummary) -> "TimeSeriesRow":
        obs, dec = summary.observables, summary.decomposition
        extra = {}
        if dec is not None:
            extra = {
                "w_big": dec.w_big,
                "w_small": dec.w_small,
                "kappa": dec.kappa,
                "kappa_residual": dec.kappa_residual,
                "angle_big": summary.angle_big,
                "angle_small": summary.angle_small,
            }
        sx, sy, sz = (float(c) for c in obs.spin_expect)
        return cls(
            tau=obs.tau,
            mean_z=obs.mean_z,
            std_z=obs.std_z,
            spin_x=sx,
            spin_y=sy,
            spin_z=sz,
            pop_up=obs.pop_up,
            pop_down=obs.pop_down,
            n_peaks=summary.n_peaks,
            **extra,
        )

    @classmethod
    def from_values(cls, values: dict[str, float]) -> "TimeSeriesRow":
        kwargs = {f.name: float(values[f.name]) for f in fields(cls)}
        kwargs["n_peaks"] = int(kwargs["n_peaks"])
        return cls(**kwargs)

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(float(v) for v in astuple(self))


def _header(columns: Sequence[Column]) -> str:
    return "\t".join(f"{name}[{unit}]" for name, unit in columns)


def write_table(path: str | Path, columns: Sequence[Column], data) -> Path:
    """Write rows of ``data`` under a one-line ``name[unit]`` header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    array = np.asarray(data, dtype=float).reshape(-1, len(columns))
    np.savetxt(
        path,
        array,
        fmt=NUMBER_FORMAT,
        delimiter="\t",
        header=_header(columns),
        comments="# ",
    )
    return path


def read_table(path: str | Path) -> dict[str, np.ndarray]:
    """Columns of a table written by ``write_table``, keyed by name without unit."""
    path = Path(path)
    with path.open(encoding="utf-8") as handle:
        header = ""
        for line in handle:
            if not line.startswith("#"):
                break
            header = line
    names = [item.split("[", 1)[0] for item in header.lstrip("# ").rstrip("\n").split("\t")]
    data = np.loadtxt(path, delimiter="\t", comments="#", ndmin=2)
    if data.size == 0:
        data = np.empty((0, len(names)))
    if data.shape[1] != len(names):
        raise AnalysisError(f"{path}: {data.shape[1]} columns but {len(names)} names")
    return {name: data[:, i] for i, name in enumerate(names)}


def write_timeseries(rows: Sequence[TimeSeriesRow], path: str | Path) -> Path:
    return write_table(path, TimeSeriesRow.columns(), [row.as_tuple() for row in rows])


@dataclass(eq=False)
class SnapshotRecord:
    """A stored state with enough metadata to be re-analysed on its own."""

    tau: float
    grid: GridSpec
    psi: np.ndarray
    param_hash: str
    row: TimeSeriesRow

    @classmethod
    def from_state(
        cls,
        state: SpinorField,
        param_hash: str,
        params: SimParams | None = None,
        threshold_frac: float = DEFAULT_PEAK_THRESHOLD,
        summary: StateSummary | None = None,
    ) -> "SnapshotRecord":
        if summary is None:
            summary = summarize(state, params, threshold_frac)
        return cls(
            state.tau,
            state.grid,
            state.psi.copy(),
            param_hash,
            TimeSeriesRow.from_summary(summary),
        )

    @property
    def densities(self) -> Densities:
        return density(self.state())

    def state(self) -> SpinorField:
        return SpinorField(self.grid, self.psi, self.tau)


def write_snapshot(record: SnapshotRecord, path: str | Path) -> Path:
    """Header of ``key: value`` lines followed by the snapshot columns."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": SNAPSHOT_FORMAT,
        "tau": repr(float(record.tau)),
        "z_min": repr(float(record.grid.z_min)),
        "z_max": repr(float(record.grid.z_max)),
        "n_points": str(record.grid.n_points),
        "param_hash": record.param_hash,
        **{
            f.name: repr(float(getattr(record.row, f.name)))
            for f in fields(TimeSeriesRow)
            if f.name != "tau"
        },
    }
    lines = [f"{key}: {value}" for key, value in meta.items()]
    lines.append(f"columns: {_header(SNAPSHOT_COLUMNS)}")
    P, P1, P2 = record.densities
    body = np.column_stack(
        [
            record.grid.z,
            P,
            P1,
            P2,
            record.psi[0].real,
            record.psi[0].imag,
            record.psi[1].real,
            record.psi[1].imag,
        ]
    )
    np.savetxt(
        path, body, fmt=NUMBER_FORMAT, delimiter="\t", header="\n".join(lines), comments="# "
    )
    return path


def read_snapshot(path: str | Path) -> SnapshotRecord:
    """Rebuild a ``SnapshotRecord`` (including the complex spinor) from disk."""
    path = Path(path)
    meta: dict[str, str] = {}
    with path.open(encoding="utf-8") as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            key, sep, value = line[1:].strip().partition(": ")
            if sep:
                meta[key] = value
    if meta.get("format") != SNAPSHOT_FORMAT:
        raise AnalysisError(f"{path} is not a {SNAPSHOT_FORMAT} file")
    try:
        grid = GridSpec(float(meta["z_min"]), float(meta["z_max"]), int(meta["n_points"]))
        row_values = {
            f.name: float(meta[f.name]) for f in fields(TimeSeriesRow) if f.name != "tau"
        }
        tau = float(meta["tau"])
    except KeyError as ex:
        raise AnalysisError(f"{path}: missing header key {ex}") from ex
    body = np.loadtxt(path, delimiter="\t", comments="#", ndmin=2)
    if body.shape != (grid.n_points, len(SNAPSHOT_COLUMNS)):
        raise AnalysisError(f"{path}: body shape {body.shape} does not match the grid")
    psi = np.vstack([body[:, 4] + 1j * body[:, 5], body[:, 6] + 1j * body[:, 7]])
    row = TimeSeriesRow.from_values({"tau": tau, **row_values})
    return SnapshotRecord(tau, grid, psi, meta.get("param_hash", ""), row)


def _rows(records: Sequence) -> list[TimeSeriesRow]:
    return [r.row if isinstance(r, SnapshotRecord) else r for r in records]


def emit_plot_data(
    records: Sequence, kind: PlotKind | str, out_dir: str | Path
) -> list[Path]:
    """Write plot-ready tables for ``kind``.

    ``density_panels`` writes one file per snapshot record with raw
    (not logged) densities; ``trajectory`` and ``decomposition`` write one
    table over all records, which may be snapshot records or time-series rows.
    """
    kind = parse_enum(PlotKind, kind)
    if not records:
        raise AnalysisError("emit_plot_data needs at least one record")
    out_dir = Path(out_dir)
    written: list[Path] = []
    match kind:
        case PlotKind.DENSITY_PANELS:
            columns = (("z", "1"), ("P", "1/z"), ("P1", "1/z"), ("P2", "1/z"))
            for index, record in enumerate(records):
                if not isinstance(record, SnapshotRecord):
                    raise AnalysisError("density panels need snapshot records")
                P, P1, P2 = record.densities
                name = f"density_panel_{index:02d}_tau{record.tau:.4f}.tsv"
                written.append(
                    write_table(
                        out_dir / name, columns, np.column_stack([record.grid.z, P, P1, P2])
                    )
                )
        case PlotKind.TRAJECTORY:
            rows = _rows(records)
            written.append(
                write_table(
                    out_dir / "trajectory.tsv",
                    (("tau", "1"), ("mean_z", "1"), ("std_z", "1")),
                    [(r.tau, r.mean_z, r.std_z) for r in rows],
                )
            )
        case PlotKind.DECOMPOSITION:
            rows = _rows(records)
            written.append(
                write_table(
                    out_dir / "decomposition.tsv",
                    (
                        ("tau", "1"),
                        ("w_big", "1"),
                        ("w_small", "1"),
                        ("kappa", "1"),
                        ("kappa_residual", "1"),
                        ("angle_big", "rad"),
                    ),
                    [
                        (r.tau, r.w_big, r.w_small, r.kappa, r.kappa_residual, r.angle_big)
                        for r in rows
                    ],
                )
            )
    logger.debug("wrote {} {} file(s) to {}", len(written), kind.value, out_dir)
    return written
