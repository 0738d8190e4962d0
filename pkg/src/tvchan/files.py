"""Scenario files, result tables and manifests."""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import SPEED_OF_LIGHT, PathSet

SCENARIO_VERSION = 1
SCENARIO_COLUMNS = ("path_id", "aod_azimuth_rad", "aoa_azimuth_rad", "delay_s", "gain_re", "gain_im", "doppler_hz")


class ScenarioError(ValueError):
    pass


def fmt(x) -> str:
    """Lossless text for a table cell (17 significant digits for floats)."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def atomic_write_text(path: str | os.PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c, "")) for c in columns])
    return atomic_write_text(path, buf.getvalue())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"cannot serialise {type(o).__name__}")


@dataclass
class Scenario:
    paths: PathSet
    f_c_hz: float
    velocity_mps: tuple[float, float, float] | None = None
    meta: dict = field(default_factory=dict)


def doppler_from_velocity(aod_rad, f_c_hz: float, velocity) -> np.ndarray:
    """f_d = f_c (d . v) / c with d the azimuthal departure direction (cos, sin, 0)."""
    aod = np.asarray(aod_rad, dtype=float)
    v = np.asarray(velocity, dtype=float)
    direction = np.stack([np.cos(aod), np.sin(aod), np.zeros_like(aod)], axis=-1)
    return f_c_hz * (direction @ v) / SPEED_OF_LIGHT


def load_scenario(path) -> Scenario:
    header: dict[str, str] = {}
    rows: list[tuple[int, list[str]]] = []
    columns = None
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                body = s[1:].strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    header[k.strip()] = v.strip()
                continue
            cells = next(csv.reader([s]))
            if columns is None:
                columns = [c.strip() for c in cells]
                missing = [c for c in SCENARIO_COLUMNS if c != "doppler_hz" and c not in columns]
                if missing:
                    raise ScenarioError(f"line {lineno}: missing columns {missing}")
                continue
            rows.append((lineno, cells))
    if not rows:
        raise ScenarioError("scenario has no path rows")
    if "f_c_hz" not in header:
        raise ScenarioError("header lacks f_c_hz")
    velocity = None
    try:
        f_c = float(header["f_c_hz"])
        if "velocity_mps" in header:
            velocity = tuple(float(x) for x in header["velocity_mps"].split(","))
    except ValueError as exc:
        raise ScenarioError(f"bad header value: {exc}") from None
    if velocity is not None and len(velocity) != 3:
        raise ScenarioError("velocity_mps needs three components")

    vals = {c: [] for c in SCENARIO_COLUMNS}
    for lineno, cells in rows:
        if len(cells) != len(columns):
            raise ScenarioError(f"line {lineno}: expected {len(columns)} cells, got {len(cells)}")
        rec = dict(zip(columns, (c.strip() for c in cells)))
        try:
            for c in SCENARIO_COLUMNS:
                raw = rec.get(c, "")
                if c == "doppler_hz" and raw == "":
                    vals[c].append(np.nan)
                elif c == "path_id":
                    vals[c].append(int(raw))
                else:
                    vals[c].append(float(raw))
        except ValueError as exc:
            raise ScenarioError(f"line {lineno}: {exc}") from None
        if vals["delay_s"][-1] < 0:
            raise ScenarioError(f"line {lineno}: negative delay")

    doppler = np.array(vals["doppler_hz"], dtype=float)
    aod = np.array(vals["aod_azimuth_rad"])
    if np.any(np.isnan(doppler)):
        if velocity is None:
            raise ScenarioError("rows without doppler_hz need velocity_mps in the header")
        doppler = np.where(np.isnan(doppler), doppler_from_velocity(aod, f_c, velocity), doppler)
    cols = {
        "aoa_rad": np.array(vals["aoa_azimuth_rad"]),
        "aod_rad": aod,
        "delay_s": np.array(vals["delay_s"]),
        "doppler_hz": doppler,
    }
    for name, v in cols.items():
        cols[name] = _make_distinct(name, v)
    gain = np.array(vals["gain_re"]) + 1j * np.array(vals["gain_im"])
    meta = {k: v for k, v in header.items() if k not in ("f_c_hz", "velocity_mps")}
    meta["path_id"] = vals["path_id"]
    return Scenario(PathSet(gain=gain, **cols), f_c, velocity, meta)


def _make_distinct(name: str, v: np.ndarray) -> np.ndarray:
    v = v.copy()
    _, inverse, counts = np.unique(v, return_inverse=True, return_counts=True)
    if np.all(counts == 1):
        return v
    warnings.warn(f"duplicate {name} values perturbed to keep paths distinct", RuntimeWarning, stacklevel=3)
    seen: dict[int, int] = {}
    for i, g in enumerate(inverse):
        n = seen.get(g, 0)
        seen[g] = n + 1
        v[i] += n * 1e-12 * max(abs(v[i]), 1.0)
    return v


def save_scenario(path, scenario: Scenario) -> Path:
    p = scenario.paths
    lines = [f"# format_version={SCENARIO_VERSION}", f"# f_c_hz={fmt(scenario.f_c_hz)}"]
    if scenario.velocity_mps is not None:
        lines.append("# velocity_mps=" + ",".join(fmt(x) for x in scenario.velocity_mps))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCENARIO_COLUMNS)
    ids = scenario.meta.get("path_id") or list(range(1, len(p) + 1))
    for i in range(len(p)):
        w.writerow([ids[i], fmt(p.aod_rad[i]), fmt(p.aoa_rad[i]), fmt(p.delay_s[i]),
                    fmt(p.gain[i].real), fmt(p.gain[i].imag), fmt(p.doppler_hz[i])])
    return atomic_write_text(path, "\n".join(lines) + "\n" + buf.getvalue())
