"""CSV/JSON writers, per-run invariant checks and the run manifest."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .audit import LEDGER_COLUMNS, EnergyLedger

SCHEMAS = {
    "ledger": "thermovisco.ledger/1",
    "fields": "thermovisco.fields/1",
    "diagnostics": "thermovisco.diagnostics/1",
    "study": "thermovisco.study/1",
    "manifest": "thermovisco.manifest/1",
}
FIELD_COLUMNS = ["node", "x1", "x2", "y1", "y2", "theta", "w"]
DIAGNOSTIC_COLUMNS = ["step", "phase", "iterations", "residual", "min_det", "min_theta", "backtracks",
                      "clamped_nodes", "competitor_gap"]


def _write_csv(path: Path, schema: str, columns: list[str], rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# schema: {schema}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def read_csv(path) -> tuple[str, list[dict]]:
    """Return the schema string and the rows of a file written here."""
    with Path(path).open() as fh:
        first = fh.readline().strip()
        if not first.startswith("# schema: "):
            raise ValueError(f"{path} has no schema line")
        rows = list(csv.DictReader(fh))
    return first[len("# schema: "):], rows


def write_ledger(path, ledger: EnergyLedger) -> Path:
    return _write_csv(path, SCHEMAS["ledger"], LEDGER_COLUMNS, ledger.rows())


def nodal_internal_energy(traj, k: int) -> np.ndarray:
    """Average of the corner values of internal energy over the cells touching each node."""
    grid = traj.grid
    corners = grid.cell_corners().ravel()
    total = np.bincount(corners, traj.ws[k].ravel(), minlength=grid.n_nodes)
    count = np.bincount(corners, minlength=grid.n_nodes)
    return (total / count).reshape(grid.n, grid.n)


def write_fields(path, traj, k: int) -> Path:
    grid = traj.grid
    X = grid.coords().reshape(-1, 2)
    y = traj.y(k).reshape(-1, 2)
    th = traj.thetas[k].ravel()
    w = nodal_internal_energy(traj, k).ravel()
    rows = ([i, X[i, 0], X[i, 1], y[i, 0], y[i, 1], th[i], w[i]] for i in range(grid.n_nodes))
    return _write_csv(path, SCHEMAS["fields"], FIELD_COLUMNS, rows)


def write_diagnostics(path, traj) -> Path:
    rows = []
    for k, (mr, tr) in enumerate(zip(traj.mech_reports, traj.thermal_reports), start=1):
        rows.append([k, "mechanical", mr.iterations, mr.residual, mr.min_det, "", mr.backtracks, "",
                     mr.competitor_gap])
        rows.append([k, "thermal", tr.iterations, tr.residual, "", tr.min_theta, tr.backtracks, tr.clamped,
                     tr.competitor_gap])
    return _write_csv(path, SCHEMAS["diagnostics"], DIAGNOSTIC_COLUMNS, rows)


def write_study(path, rows: list[dict]) -> Path:
    columns = list(rows[0]) if rows else []
    return _write_csv(path, SCHEMAS["study"], columns, ([r[c] for c in columns] for r in rows))


# ---------------------------------------------------------------------------
# invariants


RESIDUAL_TOL = 1e-8
COMPETITOR_TOL = 1e-12
THETA_FLOOR = -1e-10


def run_invariants(traj, ledger: EnergyLedger) -> dict[str, bool]:
    """Hard per-run checks; a run passes only if all hold."""
    mech, therm = traj.mech_reports, traj.thermal_reports
    c = ledger.columns
    res_int = c["res_internal"][1:] / np.maximum(c["res_internal_scale"][1:], 1e-300)
    res_mech = c["res_mech_identity"][1:] / np.maximum(c["res_mech_scale"][1:], 1e-300)
    return {
        "mechanical_residuals": all(r.residual <= RESIDUAL_TOL for r in mech),
        "thermal_residuals": all(r.residual <= RESIDUAL_TOL for r in therm),
        "mechanical_competitor": all(r.competitor_gap <= COMPETITOR_TOL for r in mech),
        "thermal_competitor": all(r.competitor_gap <= COMPETITOR_TOL for r in therm),
        "min_theta": bool(np.min(traj.thetas) >= THETA_FLOOR),
        "min_det_positive": bool(np.min(c["min_det"]) > 0),
        "internal_balance": bool(np.all(res_int <= RESIDUAL_TOL)),
        "mechanical_identity": bool(np.all(res_mech <= RESIDUAL_TOL)),
        "dissipation_nonnegative": bool(np.all(c["diss_step"] >= 0)),
        "V_nondecreasing": bool(np.all(np.diff(c["V_k"]) >= 0)),
        "energy_decomposition": bool(np.allclose(c["E_total"], c["M"] + c["Win_total"], rtol=0, atol=1e-12)),
        "finite": all(bool(np.all(np.isfinite(c[k]))) for k in LEDGER_COLUMNS),
    }


# ---------------------------------------------------------------------------
# manifest


@dataclass
class RunManifest:
    config_hash: str
    code_version: str
    seed: int
    outputs: dict = field(default_factory=dict)  # path -> schema
    wall_clock: float = 0.0
    invariants: dict = field(default_factory=dict)
    passed: bool = False
    backend: str = ""
    summary: dict = field(default_factory=dict)

    def write(self, path) -> Path:
        path = Path(path)
        data = asdict(self)
        data["schema"] = SCHEMAS["manifest"]
        path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")
        return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))

