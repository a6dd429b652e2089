"""File formats and scenario configuration.

Binary recordings (``.egmr``), all little-endian::

    magic    4s   b"EGMR"
    version  u16  1
    M        u32  channel count
    T        u64  samples per channel
    rate     f64  samples per second
    rows     u16  layout rows (0 when the array has no grid layout)
    cols     u16  layout cols
    xy       f64  M pairs of electrode positions, mm
    z0       f64  electrode height, mm
    gain     f64
    samples  f64  M * T values, channel-major

Readers reject malformed input with a :class:`DataError` subclass whose
message names the file and the offending field; nothing is repaired.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .leadfield import (PRESETS, SOURCES, EgmRecording, ElectrodeArray, add_noise,
                        forward_egm, rectangular_array)
from .simulation import (APParams, APTemplate, CellSignals, LATField, TissueModel,
                         corner_stimuli, generate_ap_template, solve_lat,
                         synthesize_cell_signals)

MAGIC = b"EGMR"
VERSION = 1
_HEADER = struct.Struct("<4sHIQdHH")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class MagicError(DataError):
    pass


class TruncatedError(DataError):
    pass


class VersionError(DataError):
    pass


class NonFiniteError(DataError):
    pass


class ScenarioError(DataError):
    """Invalid scenario configuration; the message names section and key."""


# ---------------------------------------------------------------------------
# binary recordings
# ---------------------------------------------------------------------------


def encode_recording(rec: EgmRecording) -> bytes:
    arr = rec.array
    rows, cols = arr.layout if arr.layout is not None else (0, 0)
    if rows > 0xFFFF or cols > 0xFFFF:
        raise DataError(f"layout {rows}x{cols} does not fit the u16 header fields")
    head = _HEADER.pack(MAGIC, VERSION, rec.n_channels, rec.n_samples, float(rec.rate), rows, cols)
    return b"".join([
        head,
        np.ascontiguousarray(arr.positions, dtype="<f8").tobytes(),
        struct.pack("<dd", arr.height, arr.gain),
        np.ascontiguousarray(rec.samples, dtype="<f8").tobytes(),
    ])


def decode_recording(buf: bytes, name: str = "<bytes>") -> EgmRecording:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise MagicError(f"{name}: bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}")
    if len(buf) < _HEADER.size:
        raise TruncatedError(
            f"{name}: truncated header, expected {_HEADER.size} bytes, got {len(buf)}"
        )
    _, version, m, t, rate, rows, cols = _HEADER.unpack_from(buf, 0)
    if version != VERSION:
        raise VersionError(f"{name}: unsupported version {version} (this reader handles {VERSION})")
    expected = _HEADER.size + 16 * m + 16 + 8 * m * t
    if len(buf) != expected:
        kind = "truncated payload" if len(buf) < expected else "trailing bytes after payload"
        raise TruncatedError(
            f"{name}: {kind}: header declares {m} channels x {t} samples, "
            f"expected {expected} bytes, got {len(buf)}"
        )
    if m == 0 or t == 0:
        raise DataError(f"{name}: empty recording ({m} channels x {t} samples)")
    if not (math.isfinite(rate) and rate > 0):
        raise DataError(f"{name}: header rate {rate} is not a positive number")
    if (rows == 0) != (cols == 0) or (rows and rows * cols != m):
        raise DataError(f"{name}: layout {rows}x{cols} inconsistent with {m} channels")
    off = _HEADER.size
    pos = np.frombuffer(buf, "<f8", 2 * m, off).reshape(m, 2).astype(float)
    off += 16 * m
    z0, gain = struct.unpack_from("<dd", buf, off)
    off += 16
    samples = np.frombuffer(buf, "<f8", m * t, off).reshape(m, t).astype(float)
    bad = ~np.isfinite(samples)
    if bad.any():
        ch, k = np.argwhere(bad)[0]
        raise NonFiniteError(f"{name}: non-finite sample at channel {ch}, index {k}")
    try:
        arr = ElectrodeArray(pos, z0, gain, (rows, cols) if rows else None)
        return EgmRecording(samples, rate, arr)
    except ValueError as exc:
        raise DataError(f"{name}: {exc}") from exc


def write_recording(rec: EgmRecording, path) -> None:
    Path(path).write_bytes(encode_recording(rec))


def read_recording(path) -> EgmRecording:
    return decode_recording(Path(path).read_bytes(), str(path))


# ---------------------------------------------------------------------------
# CSV recordings
# ---------------------------------------------------------------------------


def write_csv_recording(rec: EgmRecording, path, header: bool = True) -> None:
    """One column per channel, one row per sample, 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow([f"ch{i}" for i in range(rec.n_channels)])
        for row in rec.samples.T:
            w.writerow([format(float(v), ".17g") for v in row])


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_csv_recording(path, rate: float, layout: tuple[int, int] | None = None,
                       pitch: float = 2.0, height: float = 1.0, gain: float = 1.0,
                       lsb_mv: float | None = None) -> EgmRecording:
    """Recording from a numeric CSV with one column per channel.

    A first line with no numeric cells is a header. With ``lsb_mv`` the
    cells must be 16-bit integers and are scaled to mV. Without a layout the
    electrodes are placed on a line at ``pitch`` spacing.
    """
    with open(path, newline="") as fh:
        lines = list(csv.reader(fh))
    data, width = [], None
    for lineno, cells in enumerate(lines, start=1):
        cells = [c.strip() for c in cells]
        if not cells or (len(cells) == 1 and not cells[0]) or cells[0].startswith("#"):
            continue
        if lineno == 1 and not any(_is_number(c) for c in cells):
            continue
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise DataError(f"{path}:{lineno}: ragged row with {len(cells)} cells, expected {width}")
        row = []
        for col, c in enumerate(cells, start=1):
            try:
                v = float(c)
            except ValueError:
                raise DataError(f"{path}:{lineno}: column {col}: non-numeric cell {c!r}") from None
            if not math.isfinite(v):
                raise NonFiniteError(f"{path}:{lineno}: column {col}: non-finite value {c!r}")
            if lsb_mv is not None:
                if v != int(v) or not -32768 <= v <= 32767:
                    raise DataError(f"{path}:{lineno}: column {col}: {c!r} is not a 16-bit integer")
            row.append(v)
        data.append(row)
    if not data:
        raise DataError(f"{path}: no samples")
    x = np.array(data).T
    if lsb_mv is not None:
        x = x * lsb_mv
    m = x.shape[0]
    if layout is not None:
        rows, cols = layout
        if rows * cols != m:
            raise DataError(f"{path}: layout {rows}x{cols} needs {rows * cols} columns, found {m}")
        arr = rectangular_array(rows, cols, pitch, height=height, gain=gain)
    else:
        arr = ElectrodeArray(np.column_stack([np.arange(m) * pitch, np.zeros(m)]), height, gain)
    return EgmRecording(x, rate, arr)


# ---------------------------------------------------------------------------
# annotations
# ---------------------------------------------------------------------------

ANNOTATION_KEYS = ("recording", "location", "rhythm")


@dataclass
class Annotations:
    beats: list[float] = field(default_factory=list)
    labels: dict[str, str] = field(default_factory=dict)


def parse_annotations(text: str, name: str = "<annotations>") -> Annotations:
    ann = Annotations()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        kind, _, rest = line.partition(",")
        if kind == "beat":
            try:
                t = float(rest)
            except ValueError:
                raise DataError(f"{name}:{lineno}: bad beat time {rest!r}") from None
            if not math.isfinite(t):
                raise DataError(f"{name}:{lineno}: beat time must be finite")
            if ann.beats and t <= ann.beats[-1]:
                raise DataError(
                    f"{name}:{lineno}: beat time {t} not after previous {ann.beats[-1]}"
                )
            ann.beats.append(t)
        elif kind == "label":
            key, eq, value = rest.partition("=")
            key, value = key.strip(), value.strip()
            if not eq or key not in ANNOTATION_KEYS:
                raise DataError(f"{name}:{lineno}: unknown label key {key!r}; "
                                f"expected one of {ANNOTATION_KEYS}")
            if key == "rhythm" and value not in ("SR", "AF"):
                raise DataError(f"{name}:{lineno}: rhythm must be SR or AF, got {value!r}")
            if key in ann.labels:
                raise DataError(f"{name}:{lineno}: label {key!r} given twice")
            ann.labels[key] = value
        else:
            raise DataError(f"{name}:{lineno}: unknown record type {kind!r}")
    return ann


def read_annotations(path) -> Annotations:
    return parse_annotations(Path(path).read_text(), str(path))


def format_annotations(ann: Annotations) -> str:
    lines = [f"label,{k}={ann.labels[k]}" for k in ANNOTATION_KEYS if k in ann.labels]
    lines += [f"beat,{t!r}" for t in ann.beats]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

# section -> key -> (type, default); ``None`` default means required
_TISSUE_KEYS = {
    "rows": (int, None),
    "cols": (int, None),
    "spacing_mm": (float, None),
    "conductivity": (float, 1.0),
    "velocity_mm_per_ms": (float, 0.5),
    "init_radius": (float, 5.0),
}
_PATCH_KEYS = {
    "shape": (str, None),
    "value": (float, None),
    "x0": (float, 0.0),
    "y0": (float, 0.0),
    "x1": (float, 0.0),
    "y1": (float, 0.0),
    "width_mm": (float, 0.0),
}
_MORPH_KEYS = {
    "upstroke_ms": (float, APParams.upstroke_ms),
    "plateau_mv": (float, APParams.plateau_mv),
    "plateau_ms": (float, APParams.plateau_ms),
    "repol_tau_ms": (float, APParams.repol_tau_ms),
    "resting_mv": (float, APParams.resting_mv),
    "duration_ms": (float, 450.0),
    "region": (str, "all"),
}
_STIM_KEYS = {
    "sites": (str, ""),
    "cells": (str, ""),
    "onset_ms": (float, 0.0),
}
_ARRAY_KEYS = {
    "preset": (str, ""),
    "rows": (int, 0),
    "cols": (int, 0),
    "pitch_mm": (float, 0.0),
    "center_x": (float, math.nan),
    "center_y": (float, math.nan),
    "height_mm": (float, 1.0),
    "gain": (float, 1.0),
}
_RUN_KEYS = {
    "rate_hz": (float, 1000.0),
    "duration_ms": (float, 0.0),
    "source": (str, "current"),
    "amplitude": (float, 1.0),
    "gain_gradient_per_mm": (float, 0.0),
    "noise_std": (float, 0.0),
    "seed": (int, 0),
}


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _read_section(cp, section: str, spec: dict) -> dict:
    raw = cp[section]
    unknown = sorted(set(raw) - set(spec))
    if unknown:
        raise ScenarioError(f"[{section}] unknown key {unknown[0]!r}")
    out = {}
    for key, (typ, default) in spec.items():
        if key not in raw:
            if default is None:
                raise ScenarioError(f"[{section}] missing required key {key!r}")
            out[key] = default
            continue
        text = raw[key].strip()
        try:
            out[key] = typ(text)
        except ValueError:
            raise ScenarioError(f"[{section}] {key}: cannot parse {text!r} as {typ.__name__}") from None
        if typ is float and not math.isfinite(out[key]):
            raise ScenarioError(f"[{section}] {key}: value must be finite")
    return out


def _require(cond: bool, section: str, key: str, msg: str):
    if not cond:
        raise ScenarioError(f"[{section}] {key}: {msg}")


def _segment_distance(x, y, p0, p1):
    d = np.subtract(p1, p0, dtype=float)
    length2 = float(d @ d)
    if length2 == 0:
        return np.hypot(x - p0[0], y - p0[1])
    t = np.clip(((x - p0[0]) * d[0] + (y - p0[1]) * d[1]) / length2, 0.0, 1.0)
    return np.hypot(x - (p0[0] + t * d[0]), y - (p0[1] + t * d[1]))


def patch_mask(patch: dict, rows: int, cols: int, spacing: float) -> np.ndarray:
    """Cells covered by a conductivity patch (line, rect or uniform)."""
    rr, cc = np.mgrid[:rows, :cols]
    x, y = cc * spacing, rr * spacing
    shape = patch["shape"]
    if shape == "uniform":
        return np.ones((rows, cols), dtype=bool)
    if shape == "rect":
        xlo, xhi = sorted((patch["x0"], patch["x1"]))
        ylo, yhi = sorted((patch["y0"], patch["y1"]))
        return (x >= xlo) & (x <= xhi) & (y >= ylo) & (y <= yhi)
    if shape == "line":
        dist = _segment_distance(x, y, (patch["x0"], patch["y0"]), (patch["x1"], patch["y1"]))
        return dist <= patch["width_mm"] / 2.0
    raise ValueError(shape)


def region_mask(region: str, rows: int, cols: int, spacing: float, where: str) -> np.ndarray:
    """Cells of a morphology region: all, left-half, right-half, top-half,
    bottom-half or ``rect:x0,y0,x1,y1`` in mm."""
    mask = np.zeros((rows, cols), dtype=bool)
    if region == "all":
        mask[:] = True
    elif region == "left-half":
        mask[:, : cols // 2] = True
    elif region == "right-half":
        mask[:, cols // 2:] = True
    elif region == "top-half":
        mask[: rows // 2] = True
    elif region == "bottom-half":
        mask[rows // 2:] = True
    elif region.startswith("rect:"):
        try:
            x0, y0, x1, y1 = (float(v) for v in region[5:].split(","))
        except ValueError:
            raise ScenarioError(f"[{where}] region: expected rect:x0,y0,x1,y1, got {region!r}") from None
        mask = patch_mask({"shape": "rect", "x0": x0, "y0": y0, "x1": x1, "y1": y1},
                          rows, cols, spacing)
    else:
        raise ScenarioError(f"[{where}] region: unknown region {region!r}")
    return mask


@dataclass
class Scenario:
    """A validated scenario: geometry, morphology bank, array and run options.

    ``sections`` holds every effective value (defaults filled in) and is
    what :meth:`to_config` writes back out.
    """

    tissue: TissueModel
    array: ElectrodeArray
    templates: list[APTemplate]
    run: dict
    sections: dict[str, dict]

    @property
    def velocity(self) -> float:
        return self.sections["tissue"]["velocity_mm_per_ms"]

    def to_config(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for name, values in self.sections.items():
            cp[name] = {k: _fmt(v) for k, v in values.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def cell_amplitudes(self) -> np.ndarray:
        x, _ = self.tissue.cell_coordinates()
        return self.run["amplitude"] * np.exp(self.run["gain_gradient_per_mm"] * x)

    def simulate(self) -> "Simulation":
        return run_scenario(self)


def parse_scenario_text(text: str, name: str = "<scenario>") -> Scenario:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        cp.read_string(text, source=name)
    except configparser.Error as exc:
        raise ScenarioError(f"{name}: {exc}") from None
    sections = cp.sections()
    allowed = {"tissue", "stimuli", "array", "run"}
    for s in sections:
        if s not in allowed and not s.startswith(("conductivity.", "morphology.")):
            raise ScenarioError(f"[{s}] unknown section")
    for req in ("tissue", "stimuli", "array"):
        if req not in sections:
            raise ScenarioError(f"[{req}] section missing")
    eff: dict[str, dict] = {}

    tis = _read_section(cp, "tissue", _TISSUE_KEYS)
    _require(tis["rows"] > 0, "tissue", "rows", "must be > 0")
    _require(tis["cols"] > 0, "tissue", "cols", "must be > 0")
    _require(tis["spacing_mm"] > 0, "tissue", "spacing_mm", "must be > 0")
    _require(tis["conductivity"] >= 0, "tissue", "conductivity", "must be >= 0")
    _require(tis["velocity_mm_per_ms"] > 0, "tissue", "velocity_mm_per_ms", "must be > 0")
    _require(tis["init_radius"] >= 0, "tissue", "init_radius", "must be >= 0")
    eff["tissue"] = tis
    rows, cols, h = tis["rows"], tis["cols"], tis["spacing_mm"]

    cond = np.full((rows, cols), tis["conductivity"])
    owner = np.full((rows, cols), "", dtype=object)
    for s in sections:
        if not s.startswith("conductivity."):
            continue
        p = _read_section(cp, s, _PATCH_KEYS)
        _require(p["shape"] in ("uniform", "rect", "line"), s, "shape",
                 f"expected uniform, rect or line, got {p['shape']!r}")
        _require(p["value"] >= 0, s, "value", "must be >= 0")
        if p["shape"] == "line":
            _require(p["width_mm"] > 0, s, "width_mm", "line width must be > 0")
            _require((p["x0"], p["y0"]) != (p["x1"], p["y1"]), s, "x1",
                     "line endpoints coincide")
        if p["shape"] == "rect":
            _require(p["x0"] != p["x1"] and p["y0"] != p["y1"], s, "x1", "rectangle has zero area")
        mask = patch_mask(p, rows, cols, h)
        _require(mask.any(), s, "shape", "patch covers no cells")
        clash = mask & (owner != "") & (cond != p["value"])
        if clash.any():
            r, c = np.argwhere(clash)[0]
            raise ScenarioError(
                f"[{s}] value: overlaps [{owner[r, c]}] with a different conductivity at cell ({r}, {c})"
            )
        cond[mask] = p["value"]
        owner[mask] = s
        eff[s] = p

    morph_sections = [s for s in sections if s.startswith("morphology.")]
    if not morph_sections:
        morph_sections = ["morphology.default"]
        cp["morphology.default"] = {}
    morph = np.full((rows, cols), -1)
    claimed = np.zeros((rows, cols), dtype=bool)
    templates = []
    background = None
    for k, s in enumerate(morph_sections):
        m = _read_section(cp, s, _MORPH_KEYS)
        params = APParams(m["upstroke_ms"], m["plateau_mv"], m["plateau_ms"],
                          m["repol_tau_ms"], m["resting_mv"])
        try:
            templates.append(generate_ap_template(params, rate=1000.0, duration=m["duration_ms"]))
        except ValueError as exc:
            raise ScenarioError(f"[{s}] {exc}") from None
        if m["region"] == "all":
            _require(background is None, s, "region",
                     f"only one morphology may cover 'all' ([{background}] already does)")
            background = s
            morph[morph == -1] = k
            eff[s] = m
            continue
        mask = region_mask(m["region"], rows, cols, h, s)
        _require(mask.any(), s, "region", "region covers no cells")
        taken = mask & claimed
        if taken.any():
            r, c = np.argwhere(taken)[0]
            raise ScenarioError(
                f"[{s}] region: overlaps [{morph_sections[morph[r, c]]}] at cell ({r}, {c})"
            )
        morph[mask] = k
        claimed |= mask
        eff[s] = m
    if (morph == -1).any():
        r, c = np.argwhere(morph == -1)[0]
        raise ScenarioError(f"[{morph_sections[0]}] region: cell ({r}, {c}) has no morphology; "
                            f"give one section region = all")

    st = _read_section(cp, "stimuli", _STIM_KEYS)
    sites = [v.strip() for v in st["sites"].split(",") if v.strip()]
    try:
        stimuli = corner_stimuli(rows, cols, sites, st["onset_ms"])
    except ValueError as exc:
        raise ScenarioError(f"[stimuli] sites: {exc}") from None
    for item in (v.strip() for v in st["cells"].split(";") if v.strip()):
        try:
            rc, _, at = item.partition("@")
            r, c = (int(v) for v in rc.split(":"))
            t = float(at) if at else st["onset_ms"]
        except ValueError:
            raise ScenarioError(f"[stimuli] cells: expected row:col[@ms], got {item!r}") from None
        _require(0 <= r < rows and 0 <= c < cols, "stimuli", "cells", f"cell {item!r} outside grid")
        stimuli.append((r * cols + c, t))
    _require(bool(stimuli), "stimuli", "sites", "no stimulus given")
    eff["stimuli"] = st

    ar = _read_section(cp, "array", _ARRAY_KEYS)
    if ar["preset"]:
        _require(ar["preset"] in PRESETS, "array", "preset",
                 f"unknown preset {ar['preset']!r}; expected one of {sorted(PRESETS)}")
        for key, val in zip(("rows", "cols", "pitch_mm"), PRESETS[ar["preset"]]):
            _require(ar[key] in (0, val), "array", key,
                     f"{ar[key]} contradicts preset {ar['preset']} ({key} = {val})")
            ar[key] = val
    _require(ar["rows"] > 0, "array", "rows", "must be > 0")
    _require(ar["cols"] > 0, "array", "cols", "must be > 0")
    _require(ar["pitch_mm"] > 0, "array", "pitch_mm", "must be > 0")
    _require(ar["height_mm"] > 0, "array", "height_mm", "must be > 0")
    if math.isnan(ar["center_x"]):
        ar["center_x"] = (cols - 1) * h / 2.0
    if math.isnan(ar["center_y"]):
        ar["center_y"] = (rows - 1) * h / 2.0
    eff["array"] = ar

    run = _read_section(cp, "run", _RUN_KEYS) if "run" in sections else \
        {k: d for k, (_, d) in _RUN_KEYS.items()}
    _require(run["rate_hz"] > 0, "run", "rate_hz", "must be > 0")
    _require(run["duration_ms"] >= 0, "run", "duration_ms", "must be >= 0 (0 means automatic)")
    _require(run["source"] in SOURCES, "run", "source", f"expected one of {SOURCES}")
    _require(run["amplitude"] > 0, "run", "amplitude", "must be > 0")
    _require(run["noise_std"] >= 0, "run", "noise_std", "must be >= 0")
    eff["run"] = run
    if run["rate_hz"] != 1000.0:
        templates = [generate_ap_template(t.params, rate=run["rate_hz"],
                                          duration=eff[s]["duration_ms"])
                     for t, s in zip(templates, morph_sections)]

    tissue = TissueModel(rows, cols, h, cond, morph, stimuli, n_templates=len(templates))
    array = rectangular_array(ar["rows"], ar["cols"], ar["pitch_mm"],
                              center=(ar["center_x"], ar["center_y"]),
                              height=ar["height_mm"], gain=ar["gain"])
    ordered = {k: eff[k] for k in ["tissue", *[s for s in sections if s.startswith("conductivity.")],
                                   *morph_sections, "stimuli", "array", "run"]}
    return Scenario(tissue, array, templates, run, ordered)


def parse_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror}") from None
    return parse_scenario_text(text, str(path))


def fixture_path(name: str) -> Path:
    """Path of a scenario shipped with the package (``name`` with or without ``.cfg``)."""
    base = Path(__file__).parent / "scenarios"
    p = base / (name if name.endswith(".cfg") else name + ".cfg")
    if not p.exists():
        raise FileNotFoundError(f"no shipped scenario {name!r}; have {sorted(f.stem for f in base.glob('*.cfg'))}")
    return p


def load_fixture(name: str) -> Scenario:
    return parse_scenario(fixture_path(name))


# ---------------------------------------------------------------------------
# running a scenario
# ---------------------------------------------------------------------------


@dataclass
class Simulation:
    scenario: Scenario
    lat: LATField
    cells: CellSignals
    recording: EgmRecording


def simulation_samples(tissue: TissueModel, lat: LATField, templates, rate: float,
                       requested_ms: float = 0.0) -> int:
    """Even sample count covering the latest activation plus the longest template."""
    reach = np.isfinite(lat.tau)
    tau_max = float(lat.tau[reach].max()) if reach.any() else 0.0
    need = tau_max + max(t.duration_ms for t in templates)
    dur = requested_ms if requested_ms > 0 else need
    n = int(math.ceil(dur * rate / 1000.0 - 1e-9))
    return n + (n % 2)


def run_scenario(scen: Scenario) -> Simulation:
    """LAT field, cell signals and electrode recording for a scenario."""
    tissue = scen.tissue
    lat = solve_lat(tissue, scen.velocity, scen.sections["tissue"]["init_radius"])
    rate = scen.run["rate_hz"]
    n = simulation_samples(tissue, lat, scen.templates, rate, scen.run["duration_ms"])
    cells = synthesize_cell_signals(tissue, lat, scen.templates, scen.cell_amplitudes(),
                                    duration=n * 1000.0 / rate)
    rec = forward_egm(scen.array, tissue, cells, source=scen.run["source"])
    if scen.run["noise_std"] > 0:
        rec = add_noise(rec, scen.run["noise_std"], scen.run["seed"])
    return Simulation(scen, lat, cells, rec)
