"""Loading and validation of the result-file contracts.

This package talks to the solver only through its public files: the
equilibrium JSON written by ``walkinq solve`` and the sweep CSV written
by ``walkinq sweep``, each accompanied by a ``.manifest.json`` sidecar.
The manifest's ``command`` field is what ties a file to a figure kind.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np


class InputError(ValueError):
    """The input file does not match the expected contract."""


def _load_manifest(path: str) -> dict:
    sidecar = path + ".manifest.json"
    if not os.path.exists(sidecar):
        raise InputError(f"missing manifest sidecar {sidecar}")
    with open(sidecar) as fh:
        return json.load(fh)


@dataclass
class EquilibriumDoc:
    schedule: tuple[float, ...]
    horizon: float
    lam: float
    early: bool
    p_e: float
    t0: float
    e_w: float
    times: np.ndarray
    density: np.ndarray
    cdf: np.ndarray
    manifest: dict = field(default_factory=dict)


def load_equilibrium(path: str) -> EquilibriumDoc:
    manifest = _load_manifest(path)
    if manifest.get("command") != "solve":
        raise InputError(
            f"{path} was produced by {manifest.get('command')!r}, not a solve run"
        )
    with open(path) as fh:
        doc = json.load(fh)
    for key in ("params", "schedule", "p_e", "grid"):
        if key not in doc:
            raise InputError(f"{path} lacks field {key!r}")
    grid = np.asarray(doc["grid"], dtype=float)
    if grid.size == 0:
        raise InputError(f"{path} carries an empty grid")
    sched_text = doc["schedule"].strip()
    schedule = tuple(float(x) for x in sched_text.split(",")) if sched_text else ()
    return EquilibriumDoc(
        schedule=schedule,
        horizon=float(doc["params"]["horizon"]),
        lam=float(doc["params"]["lambda"]),
        early=bool(doc["early"]),
        p_e=float(doc["p_e"]),
        t0=float(doc["t0"]),
        e_w=float(doc["E_w"]),
        times=grid[:, 0],
        density=grid[:, 1],
        cdf=grid[:, 2],
        manifest=manifest,
    )


REQUIRED_SWEEP_COLUMNS = ("delta", "schedule", "phi_s", "e_w", "e_i")


@dataclass
class SweepDoc:
    deltas: np.ndarray
    schedules: list[tuple[float, ...]]
    columns: dict[str, np.ndarray]  # cost columns, keyed by header name
    horizon: float
    lam: float
    manifest: dict = field(default_factory=dict)

    def pattern_of(self, schedule: tuple[float, ...]) -> str:
        starts_front = schedule[0] == 0.0
        ends_back = schedule[-1] == self.horizon
        if starts_front and ends_back:
            return "coincident"
        return "front" if starts_front else "back"

    @property
    def phi_columns(self) -> list[str]:
        return [c for c in self.columns if c.startswith("phi_g")]


def load_sweep(path: str) -> SweepDoc:
    manifest = _load_manifest(path)
    if manifest.get("command") != "sweep":
        raise InputError(
            f"{path} was produced by {manifest.get('command')!r}, not a sweep run"
        )
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        rows = list(reader)
    if header is None or any(c not in header for c in REQUIRED_SWEEP_COLUMNS):
        raise InputError(f"{path} lacks required columns {REQUIRED_SWEEP_COLUMNS}")
    if not rows:
        raise InputError(f"{path} has no data rows")
    idx = {name: header.index(name) for name in header}
    deltas = np.array([float(r[idx["delta"]]) for r in rows])
    schedules = [
        tuple(float(x) for x in r[idx["schedule"]].split(",")) for r in rows
    ]
    columns = {}
    for name in header:
        if name in ("delta", "schedule"):
            continue
        columns[name] = np.array([float(r[idx[name]]) for r in rows])
    horizon = float(manifest.get("parameters", {}).get("horizon", max(s[-1] for s in schedules)))
    lam = float(manifest.get("parameters", {}).get("lambda", float("nan")))
    return SweepDoc(
        deltas=deltas,
        schedules=schedules,
        columns=columns,
        horizon=horizon,
        lam=lam,
        manifest=manifest,
    )
