"""Checkpoints, CSV time series and JSON/SVG reports.

Checkpoint layout: a directory holding ``manifest.json`` plus ``fields.bin``
with the raw field payloads concatenated in manifest order, little-endian
float64, row-major (x index outermost).  Round trips are bit-exact.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict

import numpy as np

from .errors import CorruptPayload, VersionMismatch
from .fields import FlowState, ScalarField, StripGrid

CHECKPOINT_VERSION = 1
MANIFEST_NAME = "manifest.json"
PAYLOAD_NAME = "fields.bin"


def write_checkpoint(path: str, grid: StripGrid, t: float, fields: dict, meta: dict | None = None):
    """Write named physical-view fields plus grid/time metadata."""
    os.makedirs(path, exist_ok=True)
    entries = []
    offset = 0
    blobs = []
    for name, f in fields.items():
        arr = np.ascontiguousarray(f.values() if isinstance(f, ScalarField) else f, dtype="<f8")
        blob = arr.tobytes()
        entries.append(
            {"name": name, "shape": list(arr.shape), "dtype": "<f8", "offset": offset, "nbytes": len(blob)}
        )
        offset += len(blob)
        blobs.append(blob)
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "endianness": "little",
        "order": "row-major (x outermost)",
        "grid": {"nx": grid.nx, "ny": grid.ny, "lx": grid.lx},
        "t": t,
        "fields": entries,
        "meta": meta or {},
    }
    with open(os.path.join(path, MANIFEST_NAME), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    with open(os.path.join(path, PAYLOAD_NAME), "wb") as fh:
        for blob in blobs:
            fh.write(blob)


def read_checkpoint(path: str):
    """Read a checkpoint back as (grid, t, {name: ScalarField}, meta)."""
    with open(os.path.join(path, MANIFEST_NAME)) as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise VersionMismatch(
            f"checkpoint version {manifest.get('format_version')} != {CHECKPOINT_VERSION}"
        )
    g = manifest["grid"]
    grid = StripGrid(int(g["nx"]), int(g["ny"]), float(g["lx"]))
    with open(os.path.join(path, PAYLOAD_NAME), "rb") as fh:
        payload = fh.read()
    expected = sum(e["nbytes"] for e in manifest["fields"])
    if len(payload) != expected:
        raise CorruptPayload(f"payload is {len(payload)} bytes, manifest says {expected}")
    fields = {}
    for e in manifest["fields"]:
        raw = payload[e["offset"] : e["offset"] + e["nbytes"]]
        arr = np.frombuffer(raw, dtype="<f8").reshape(e["shape"]).copy()
        if arr.shape != (grid.nx, grid.ny):
            raise CorruptPayload(f"field {e['name']} has shape {arr.shape}")
        fields[e["name"]] = ScalarField.from_phys(grid, arr)
    return grid, float(manifest["t"]), fields, manifest.get("meta", {})


def checkpoint_flow_state(path: str, state: FlowState, meta: dict | None = None):
    meta = dict(meta or {})
    meta["eps"] = state.eps
    write_checkpoint(
        path,
        state.u.grid,
        state.t,
        {"u": state.u, "v": state.v, "q1": state.q1, "q2": state.q2},
        meta,
    )


def load_flow_state(path: str) -> FlowState:
    grid, t, fields, meta = read_checkpoint(path)
    missing = {"u", "v", "q1", "q2"} - set(fields)
    if missing:
        raise CorruptPayload(f"flow checkpoint missing fields {sorted(missing)}")
    return FlowState(eps=float(meta["eps"]), t=t, u=fields["u"], v=fields["v"],
                     q1=fields["q1"], q2=fields["q2"])


# ---------------------------------------------------------------------------
# CSV / JSON


def write_csv(path: str, header: list[str], rows) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])


def read_csv(path: str):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    return header, rows


def write_json(path: str, payload: dict) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    raise TypeError(f"cannot serialize {type(obj)}")


def sweep_report(records, verdict) -> dict:
    return {
        "slope": verdict.fit.slope,
        "r2": verdict.fit.r2,
        "m_hat": verdict.fit.m_hat,
        "m_hats_finest": list(verdict.m_hats),
        "m_hat_drift": verdict.m_hat_drift,
        "y_monotone_in_eps": verdict.monotone,
        "pass": {
            "slope": verdict.slope_ok,
            "r2": verdict.r2_ok,
            "m_hat_stable": verdict.m_hat_ok,
        },
        "ladder": [
            {"eps": r.eps, "y_loss": r.y_loss, "status": r.terminal_status} for r in records
        ],
    }


def write_sweep_outputs(out_dir: str, records, verdict, svg: bool = True) -> None:
    from .sweep import SAMPLE_COLUMNS

    os.makedirs(out_dir, exist_ok=True)
    write_json(os.path.join(out_dir, "sweep_report.json"), sweep_report(records, verdict))
    for rec in records:
        rows = [
            [t] + [rec.series[c][i] for c in SAMPLE_COLUMNS[1:]]
            for i, t in enumerate(rec.times)
        ]
        write_csv(
            os.path.join(out_dir, f"series_eps{rec.eps:g}.csv"),
            list(SAMPLE_COLUMNS),
            rows,
        )
    if svg:
        try:
            plot_loglog(
                os.path.join(out_dir, "sweep_loglog.svg"),
                [r.eps for r in records],
                [r.y_loss for r in records],
                verdict.fit,
            )
        except Exception:  # plotting is best-effort
            pass


def plot_loglog(path: str, eps, ys, fit) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    eps = np.asarray(eps)
    ys = np.asarray(ys)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(eps, ys, "ko", label="measured loss")
    xs = np.linspace(np.log(eps.min()), np.log(eps.max()), 50)
    ax.loglog(np.exp(xs), np.exp(fit.slope * xs + fit.intercept), "k--",
              label=f"slope {fit.slope:.2f}")
    ax.set_xlabel("eps")
    ax.set_ylabel("sup_t weighted difference norm")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
