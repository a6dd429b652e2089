"""Command-line front end.

Every command writes its artifacts plus ``manifest.json`` into ``--out``.
The manifest records every effective option (defaults included), input
file digests and, for ``simulate``, the full effective scenario, so
``egmrank rerun --manifest <file>`` can regenerate the same bytes.

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .dataio import (DataError, Scenario, parse_scenario, parse_scenario_text, fixture_path,
                     read_annotations, read_csv_recording, read_recording, run_scenario,
                     write_recording)
from .latmap import detect_blocks, egm_activation_map, write_activation_csv, write_blocks_csv
from .leadfield import EgmRecording
from .sigmamap import read_map_csv, render_pgm, sigma2_map, write_map_csv
from .spectral import bandpass, detect_r_peaks, full_window, magnitude_matrix, segment_beats
from .stats import (RHYTHMS, aggregate, boxplot_summary, rank_sum_test, read_table,
                    suggested_thresholds, write_table)
from .svdcore import NumericalError, svd_profile

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _pair(text: str, what: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"{what} must look like a:b, got {text!r}") from None
    return a, b


def _layout(text: str | None):
    if text is None:
        return None
    try:
        r, c = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"layout must look like ROWSxCOLS, got {text!r}") from None
    return r, c


def load_input(params: dict) -> EgmRecording:
    path = params["in"]
    if str(path).lower().endswith(".csv"):
        if params.get("rate") is None:
            raise UsageError("--rate is required for CSV recordings")
        return read_csv_recording(path, params["rate"], _layout(params.get("layout")),
                                  pitch=params.get("pitch", 2.0), lsb_mv=params.get("lsb"))
    return read_recording(path)


def select_beats(rec: EgmRecording, params: dict):
    """Band-pass and segment according to the effective options.

    Returns ``(beats, report)``.
    """
    ann = read_annotations(params["annotations"]) if params.get("annotations") else None
    if params["band"] != "none":
        lo, hi = _pair(params["band"], "--band")
        rec = bandpass(rec, lo, hi)
    if params["window"] == "full":
        beat = full_window(rec)
        if beat.width % 2:
            beat = full_window(rec.replace(samples=rec.samples[:, :-1]))
        return [beat], {"mode": "full", "n_samples": beat.width}, ann
    window = _pair(params["window"], "--window")
    if ann is not None and ann.beats:
        peaks, source = ann.beats, "annotations"
    elif params.get("detect_channel") is not None:
        ch = params["detect_channel"]
        if not 0 <= ch < rec.n_channels:
            raise UsageError(f"--detect-channel {ch} outside 0..{rec.n_channels - 1}")
        peaks, source = detect_r_peaks(rec.samples[ch], rec.rate), f"pan-tompkins channel {ch}"
    else:
        raise UsageError("a beat window needs --annotations with beat times or --detect-channel")
    seg = segment_beats(rec, peaks, window)
    report = {"mode": "segmented", "r_peaks_from": source, **seg.report()}
    return seg.beats, report, ann


def _resolve_signal_defaults(params: dict) -> None:
    if params.get("window") is None:
        params["window"] = "320:60" if params.get("annotations") else "full"
    if params.get("band") is None:
        params["band"] = "0.33:30" if params["window"] != "full" else "none"


def write_manifest(out: Path, command: str, params: dict, inputs: list[str],
                   extra: dict | None = None) -> None:
    artifacts = sorted(p.name for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    manifest = {
        "program": "egmrank",
        "version": __version__,
        "command": command,
        "parameters": {k: v for k, v in sorted(params.items()) if k != "out"},
        "inputs": [{"path": str(p), "sha256": sha256(p)} for p in inputs],
        "outputs": {name: sha256(out / name) for name in artifacts},
        "libraries": {"numpy": np.__version__, "scipy": scipy.__version__},
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(params: dict, scenario_text: str | None = None) -> dict:
    out = Path(params["out"])
    if scenario_text is None:
        src = fixture_path(params["fixture"]) if params.get("fixture") else params.get("config")
        if src is None:
            raise UsageError("simulate needs --config or --fixture")
        scen: Scenario = parse_scenario(src)
    else:
        scen = parse_scenario_text(scenario_text, "<manifest scenario>")
    sim = run_scenario(scen)
    out.mkdir(parents=True, exist_ok=True)
    write_recording(sim.recording, out / "recording.egmr")
    (out / "scenario.cfg").write_text(scen.to_config())
    tau = np.where(np.isfinite(sim.lat.tau), sim.lat.tau, np.nan).reshape(scen.tissue.rows, -1)
    with open(out / "lat_field.csv", "w") as fh:
        for row in tau:
            fh.write(",".join("" if np.isnan(v) else format(float(v), ".17g") for v in row) + "\n")
    prof = svd_profile(magnitude_matrix(full_window(sim.recording)))
    summary = {"lat_status": sim.lat.status, "n_samples": sim.recording.n_samples,
               "sigma2_whole_array": prof.sigma2}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    params = {k: v for k, v in params.items() if k not in ("config", "fixture")}
    write_manifest(out, "simulate", params, [], {"scenario": scen.to_config()})
    return summary


def cmd_analyze(params: dict) -> dict:
    _resolve_signal_defaults(params)
    out = Path(params["out"])
    rec = load_input(params)
    beats, report, ann = select_beats(rec, params)
    labels = dict(ann.labels) if ann is not None else {}
    labels.setdefault("recording", Path(params["in"]).stem)
    out.mkdir(parents=True, exist_ok=True)
    profiles = [svd_profile(magnitude_matrix(b)) for b in beats]
    if {"location", "rhythm"} <= set(labels):
        items = [({**labels, "beat": b.source_beat_index}, p) for b, p in zip(beats, profiles)]
        write_table(aggregate(items), out / "features.csv")
    else:
        with open(out / "profiles.csv", "w") as fh:
            fh.write("beat,sigma2,profile\n")
            for b, p in zip(beats, profiles):
                fh.write(f"{b.source_beat_index},{p.sigma2!r},"
                         + ";".join(repr(float(v)) for v in p.normalized) + "\n")
    (out / "segmentation.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    inputs = [params["in"]] + ([params["annotations"]] if params.get("annotations") else [])
    write_manifest(out, "analyze", params, inputs)
    return report


def _grid_text(values: np.ndarray, fmt) -> list[str]:
    return [" ".join(fmt(v) for v in row) for row in values]


def comparison_report(amap, blocks, smap) -> str:
    """Activation map, block edges and sigma_2 map of one beat as text panels."""
    rows, cols = amap.layout
    lat = amap.grid()
    finite = lat[np.isfinite(lat)]
    base = float(finite.min()) if finite.size else 0.0
    lat_lines = _grid_text(lat - base, lambda v: "  ." if np.isnan(v) else f"{v:3.0f}")
    # block panel: electrodes as 'o', blocked horizontal / vertical links as '|' / '-'
    canvas = [[" "] * (2 * cols - 1) for _ in range(2 * rows - 1)]
    for r in range(rows):
        for c in range(cols):
            canvas[2 * r][2 * c] = "o"
    for a, b in blocks.edges:
        ra, ca = divmod(a, cols)
        rb, cb = divmod(b, cols)
        canvas[ra + rb][ca + cb] = "|" if ra == rb else "-"
    block_lines = ["".join(row) for row in canvas]
    sig_lines = _grid_text(smap.values * 100.0, lambda v: f"{v:3.0f}")
    parts = [
        f"activation map (ms after earliest, '.' = no activation), {rows}x{cols}",
        *lat_lines, "",
        f"conduction block (|dLAT| >= {blocks.threshold:g} ms): {len(blocks)} edges",
        *block_lines, "",
        f"sigma2 map x100 ({smap.window}x{smap.window} windows, interior grid "
        f"{smap.shape[0]}x{smap.shape[1]}), max {smap.values.max():.4f}",
        *sig_lines, "",
    ]
    return "\n".join(parts)


def cmd_map(params: dict) -> dict:
    _resolve_signal_defaults(params)
    out = Path(params["out"])
    rec = load_input(params)
    layout = _layout(params.get("layout")) or rec.array.layout
    if layout is None:
        raise UsageError("recording has no grid layout; pass --layout ROWSxCOLS")
    beats, report, _ = select_beats(rec, params)
    k = params["beat"]
    chosen = [b for b in beats if b.source_beat_index == k]
    if not chosen:
        raise DataError(f"beat {k} not available; usable beats {[b.source_beat_index for b in beats]}")
    beat = chosen[0]
    smap = sigma2_map(beat, layout, window=params["map_window"])
    out.mkdir(parents=True, exist_ok=True)
    write_map_csv(smap, out / "sigma2_map.csv")
    render_pgm(smap.values, out / "sigma2_map.pgm")
    result = {"beat": k, "max_sigma2": float(smap.values.max())}
    if params["compare"]:
        amap = egm_activation_map(beat, layout, floor=params["floor"])
        blocks = detect_blocks(amap, layout, params["block_ms"])
        write_activation_csv(amap, out / "activation.csv")
        write_blocks_csv(blocks, out / "blocks.csv")
        (out / "compare.txt").write_text(comparison_report(amap, blocks, smap))
        result["block_edges"] = len(blocks)
    inputs = [params["in"]] + ([params["annotations"]] if params.get("annotations") else [])
    write_manifest(out, "map", params, inputs)
    return result


def cmd_stats(params: dict) -> dict:
    out = Path(params["out"])
    table = read_table(params["in"])
    keys = tuple(k.strip() for k in params["group_by"].split(",") if k.strip())
    groups = table.groups(keys)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "groups.csv", "w") as fh:
        fh.write(",".join(keys) + ",n,mean,min,q25,median,q75,max,whisker_lo,whisker_hi,outliers\n")
        for key, vals in groups.items():
            s = boxplot_summary(vals)
            fh.write(",".join(key) + f",{s.n},{float(np.mean(vals))!r},{s.min!r},{s.q25!r},"
                     f"{s.median!r},{s.q75!r},{s.max!r},{s.whisker_lo!r},{s.whisker_hi!r},"
                     + ";".join(repr(v) for v in s.outliers) + "\n")
    tests = []
    if "rhythm" in keys:
        rest = tuple(k for k in keys if k != "rhythm")
        strata = table.groups(rest + ("rhythm",))
        for stratum in sorted({k[:-1] for k in strata}):
            sr, af = strata.get(stratum + ("SR",)), strata.get(stratum + ("AF",))
            if sr is None or af is None or len(sr) < 3 or len(af) < 3:
                continue
            res = rank_sum_test(sr, af)
            tests.append((stratum, len(sr), len(af), res))
        with open(out / "ranksum.csv", "w") as fh:
            fh.write(",".join(rest) + ("," if rest else "") + "n_sr,n_af,u,p,method\n")
            for stratum, n_sr, n_af, res in tests:
                fh.write(",".join(stratum) + ("," if rest else "")
                         + f"{n_sr},{n_af},{res.u!r},{res.p!r},{res.method}\n")
    with open(out / "thresholds.csv", "w") as fh:
        fh.write("location,suggested_threshold\n")
        for loc, thr in suggested_thresholds(table).items():
            fh.write(f"{loc},{thr!r}\n")
    write_manifest(out, "stats", params, [params["in"]])
    return {"groups": len(groups), "tests": len(tests)}


def cmd_render(params: dict) -> dict:
    values = read_map_csv(params["map"])
    out = Path(params["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    render_pgm(values, out, params["clamp"])
    return {"shape": list(values.shape)}


def cmd_rerun(params: dict) -> dict:
    manifest = json.loads(Path(params["manifest"]).read_text())
    command = manifest.get("command")
    if command not in ("simulate", "analyze", "map", "stats"):
        raise DataError(f"{params['manifest']}: cannot rerun command {command!r}")
    for item in manifest.get("inputs", []):
        if sha256(item["path"]) != item["sha256"]:
            raise DataError(f"input {item['path']} changed since the manifest was written")
    run = dict(manifest["parameters"])
    run["out"] = params["out"] or str(Path(params["manifest"]).parent)
    if command == "simulate":
        return cmd_simulate(run, manifest["scenario"])
    return COMMANDS[command](run)


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "map": cmd_map,
            "stats": cmd_stats, "render": cmd_render, "rerun": cmd_rerun}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="egmrank", description="Singular-value analysis of electrode-array electrograms.")
    p.add_argument("--version", action="version", version=f"egmrank {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate a scenario into an .egmr recording")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="scenario file")
    src.add_argument("--fixture", help="name of a shipped scenario, e.g. corner_homogeneous")
    s.add_argument("--out", required=True)

    def recording_args(q):
        q.add_argument("--in", dest="in", required=True, help=".egmr or .csv recording")
        q.add_argument("--annotations", help="beat/label annotation file")
        q.add_argument("--band", help="band-pass lo:hi in Hz or 'none' (default 0.33:30 for "
                       "beat windows, none for the full trace)")
        q.add_argument("--window", help="a:b ms before each R-peak or 'full' (default 320:60 "
                       "with annotations, else full)")
        q.add_argument("--detect-channel", type=int, help="find R-peaks on this channel")
        q.add_argument("--rate", type=float, help="sample rate for CSV input")
        q.add_argument("--layout", help="ROWSxCOLS for CSV input")
        q.add_argument("--pitch", type=float, default=2.0, help="electrode pitch for CSV input (mm)")
        q.add_argument("--lsb", type=float, help="mV per count for 16-bit integer CSV input")
        q.add_argument("--out", required=True)

    a = sub.add_parser("analyze", help="per-beat singular-value profiles")
    recording_args(a)

    m = sub.add_parser("map", help="sigma2 map of one beat")
    recording_args(m)
    m.add_argument("--beat", type=int, default=0)
    m.add_argument("--compare", action="store_true",
                   help="also write activation map, block edges and a side-by-side report")
    m.add_argument("--map-window", type=int, default=3)
    m.add_argument("--block-ms", type=float, default=12.0)
    m.add_argument("--floor", type=float, default=0.05)

    st = sub.add_parser("stats", help="group summaries and rank-sum tests of a feature table")
    st.add_argument("--in", dest="in", required=True)
    st.add_argument("--group-by", default="location,rhythm")
    st.add_argument("--out", required=True)

    r = sub.add_parser("render", help="sigma2 map CSV to an ASCII graymap")
    r.add_argument("--map", required=True, help="sigma2_map.csv written by 'map'")
    r.add_argument("--out", required=True, help="output .pgm file")
    r.add_argument("--clamp", type=float, default=0.25,
                   help="sigma2 mapped to full white (default 0.25)")

    rr = sub.add_parser("rerun", help="repeat a run from its manifest")
    rr.add_argument("--manifest", required=True)
    rr.add_argument("--out", help="output directory (default: the manifest's directory)")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        params = {k: v for k, v in vars(args).items() if k != "command"}
        result = COMMANDS[args.command](params)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, ValueError, OSError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
