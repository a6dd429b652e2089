import struct

import numpy as np
import pytest

from egmrank.dataio import (Annotations, DataError, MagicError, NonFiniteError, ScenarioError,
                            TruncatedError, VersionError, encode_recording, fixture_path,
                            format_annotations, load_fixture, parse_annotations,
                            parse_scenario, parse_scenario_text, read_csv_recording,
                            read_recording, write_csv_recording, write_recording)
from egmrank.leadfield import EgmRecording, ElectrodeArray, rectangular_array


@pytest.fixture
def rec():
    rng = np.random.default_rng(0)
    arr = rectangular_array(2, 2, 2.0, center=(3.0, 4.0), height=1.25, gain=0.5)
    return EgmRecording(rng.normal(size=(4, 1000)), 2034.5, arr)


def test_binary_round_trip_bit_identical(rec, tmp_path):
    p = tmp_path / "r.egmr"
    write_recording(rec, p)
    back = read_recording(p)
    assert back.samples.tobytes() == rec.samples.tobytes()
    assert back.rate == rec.rate
    assert back.array.positions.tobytes() == rec.array.positions.tobytes()
    assert (back.array.height, back.array.gain, back.array.layout) == (1.25, 0.5, (2, 2))
    assert encode_recording(back) == p.read_bytes()


def test_header_layout_is_little_endian(rec):
    buf = encode_recording(rec)
    assert buf[:4] == b"EGMR"
    version, m, t = struct.unpack_from("<HIQ", buf, 4)
    assert (version, m, t) == (1, 4, 1000)
    assert len(buf) == 4 + 2 + 4 + 8 + 8 + 2 + 2 + 16 * 4 + 16 + 8 * 4000
    # channel-major: first payload value is channel 0 sample 0, the next channel 0 sample 1
    off = len(buf) - 8 * 4000
    assert struct.unpack_from("<dd", buf, off) == (rec.samples[0, 0], rec.samples[0, 1])


def test_no_layout_round_trip(tmp_path):
    arr = ElectrodeArray([[0.0, 0.0], [1.0, 0.5], [3.0, 1.0]])
    r = EgmRecording(np.ones((3, 4)), 500.0, arr)
    write_recording(r, tmp_path / "x.egmr")
    assert read_recording(tmp_path / "x.egmr").array.layout is None


def test_truncation_error_names_sizes(rec, tmp_path):
    buf = encode_recording(rec)
    p = tmp_path / "t.egmr"
    p.write_bytes(buf[:-100])
    with pytest.raises(TruncatedError, match=rf"expected {len(buf)} bytes, got {len(buf) - 100}"):
        read_recording(p)


def test_trailing_bytes_rejected(rec, tmp_path):
    p = tmp_path / "t.egmr"
    p.write_bytes(encode_recording(rec) + b"\0")
    with pytest.raises(TruncatedError, match="trailing"):
        read_recording(p)


def test_magic_error(rec, tmp_path):
    p = tmp_path / "m.egmr"
    p.write_bytes(b"EGMX" + encode_recording(rec)[4:])
    with pytest.raises(MagicError):
        read_recording(p)


def test_unsupported_version(rec, tmp_path):
    buf = bytearray(encode_recording(rec))
    struct.pack_into("<H", buf, 4, 9999)
    p = tmp_path / "v.egmr"
    p.write_bytes(bytes(buf))
    with pytest.raises(VersionError, match="9999"):
        read_recording(p)


def test_non_finite_sample_error(rec, tmp_path):
    buf = bytearray(encode_recording(rec))
    struct.pack_into("<d", buf, len(buf) - 8, float("nan"))
    p = tmp_path / "n.egmr"
    p.write_bytes(bytes(buf))
    with pytest.raises(NonFiniteError, match="channel 3, index 999"):
        read_recording(p)


def test_error_kinds_are_distinct():
    kinds = {MagicError, TruncatedError, VersionError, NonFiniteError}
    assert len(kinds) == 4 and all(issubclass(k, DataError) for k in kinds)


# --- CSV -------------------------------------------------------------------


def test_csv_shape(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("a,b,c\n" + "\n".join(f"{i},{i + 1},{i + 2}" for i in range(5)) + "\n")
    r = read_csv_recording(p, rate=1000.0)
    assert r.samples.shape == (3, 5)
    np.testing.assert_array_equal(r.samples[:, 0], [0, 1, 2])


def test_csv_without_header(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("1,2\n3,4\n")
    assert read_csv_recording(p, 1000.0).samples.tolist() == [[1, 3], [2, 4]]


def test_csv_ragged_row_line_number(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("a,b\n1,2\n3\n")
    with pytest.raises(DataError, match=r":3: ragged"):
        read_csv_recording(p, 1000.0)


def test_csv_non_numeric_cell(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("1,2\n3,x\n")
    with pytest.raises(DataError, match=r":2: column 2"):
        read_csv_recording(p, 1000.0)


def test_csv_round_trip_17_digits(rec, tmp_path):
    p = tmp_path / "r.csv"
    write_csv_recording(rec, p)
    back = read_csv_recording(p, rec.rate, layout=(2, 2))
    np.testing.assert_allclose(back.samples, rec.samples, rtol=1e-12, atol=0)
    np.testing.assert_array_equal(back.samples, rec.samples)


def test_csv_layout_mismatch(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("1,2,3\n")
    with pytest.raises(DataError):
        read_csv_recording(p, 1000.0, layout=(2, 2))


def test_csv_int16_scaling(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("100,-200\n32767,-32768\n")
    r = read_csv_recording(p, 1000.0, lsb_mv=0.001)
    np.testing.assert_allclose(r.samples, [[0.1, 32.767], [-0.2, -32.768]])
    p.write_text("1.5,2\n")
    with pytest.raises(DataError, match="16-bit"):
        read_csv_recording(p, 1000.0, lsb_mv=0.001)


# --- annotations -------------------------------------------------------------


def test_annotations_parse_and_format():
    text = "# comment\nlabel,location=LA\nlabel,rhythm=AF\nbeat,100\nbeat,950.5\n"
    ann = parse_annotations(text)
    assert ann.beats == [100.0, 950.5]
    assert ann.labels == {"location": "LA", "rhythm": "AF"}
    assert parse_annotations(format_annotations(ann)) == ann


@pytest.mark.parametrize("text,match", [
    ("beat,100\nbeat,100\n", "not after"),
    ("label,patient=7\n", "unknown label key"),
    ("label,rhythm=VF\n", "SR or AF"),
    ("peak,3\n", "unknown record"),
    ("beat,abc\n", "bad beat time"),
])
def test_annotation_errors(text, match):
    with pytest.raises(DataError, match=match):
        parse_annotations(text, "a.txt")


# --- scenarios ---------------------------------------------------------------


def test_corner_homogeneous_fixture():
    s = load_fixture("corner_homogeneous")
    t = s.tissue
    assert (t.rows, t.cols, t.spacing) == (200, 200, 0.1)
    assert np.all(t.conductivity == 1.0)
    assert t.stimuli == ((0, 0.0),)
    assert s.array.layout == (10, 10) and s.array.height == 1.0
    pos = s.array.positions
    assert pos[1, 0] - pos[0, 0] == pytest.approx(2.0)
    np.testing.assert_allclose(pos.mean(axis=0), [9.95, 9.95])
    assert s.velocity == 0.5 and s.run["source"] == "current"


def test_all_fixtures_parse():
    for name in ["corner_homogeneous", "two_wavefronts", "plane_wave", "far_corner",
                 "homogeneous_32", "diagonal_block", "one_front_two_morphologies"]:
        assert fixture_path(name).exists()
        load_fixture(name)


def test_patch_morphologies():
    m = load_fixture("one_front_two_morphologies").tissue.morphology_id
    assert len({m[50, 50], m[150, 150], m[50, 150]}) == 3
    assert len(np.unique(m)) == 3


def test_two_wavefront_morphologies():
    s = load_fixture("two_wavefronts")
    m = s.tissue.morphology_id
    assert np.all(m[:, :100] == 0) and np.all(m[:, 100:] == 1)
    assert s.templates[1].params.plateau_ms == 80.0


def test_block_line_geometry():
    s = load_fixture("diagonal_block")
    cond = s.tissue.conductivity
    assert cond[0, 239] == 0.01 and cond[239, 0] == 0.01 and cond[120, 119] == 0.01
    assert cond[0, 0] == 1.0 and cond[239, 239] == 1.0


def test_effective_config_round_trip():
    s = load_fixture("diagonal_block")
    again = parse_scenario_text(s.to_config())
    assert again.to_config() == s.to_config()
    np.testing.assert_array_equal(again.tissue.conductivity, s.tissue.conductivity)


BASE = """
[tissue]
rows = 20
cols = 20
spacing_mm = 0.1
[stimuli]
sites = top-left
[array]
rows = 3
cols = 3
pitch_mm = 0.5
"""


def test_defaults_are_filled_in():
    s = parse_scenario_text(BASE)
    assert s.run == {"rate_hz": 1000.0, "duration_ms": 0.0, "source": "current",
                     "amplitude": 1.0, "gain_gradient_per_mm": 0.0, "noise_std": 0.0, "seed": 0}
    assert s.sections["array"]["center_x"] == pytest.approx(0.95)
    assert "[run]" in s.to_config()


@pytest.mark.parametrize("extra,match", [
    ("[conductivity.band]\nshape = line\nvalue = 0.1\nx1 = 1\ny1 = 1\nwidth_mm = 0\n",
     r"\[conductivity.band\] width_mm"),
    ("[run]\ncolour = red\n", r"\[run\] unknown key 'colour'"),
    ("[run]\nrate_hz = -5\n", r"\[run\] rate_hz"),
    ("[extras]\nx = 1\n", r"\[extras\] unknown section"),
    ("[conductivity.a]\nshape = rect\nvalue = 0.5\nx1 = 1\ny1 = 1\n"
     "[conductivity.b]\nshape = rect\nvalue = 0.2\nx0 = 0.5\ny0 = 0.5\nx1 = 1.5\ny1 = 1.5\n",
     r"\[conductivity.b\] value: overlaps \[conductivity.a\]"),
    ("[morphology.a]\nregion = left-half\n[morphology.b]\nregion = rect:0,0,1.5,1.5\n",
     r"\[morphology.b\] region: overlaps"),
    ("[morphology.a]\nplateau_ms = 500\n", r"\[morphology.a\].*envelope"),
])
def test_scenario_errors_name_section_and_key(extra, match):
    with pytest.raises(ScenarioError, match=match):
        parse_scenario_text(BASE + extra)


def test_missing_array_section():
    text = BASE.split("[array]")[0]
    with pytest.raises(ScenarioError, match=r"\[array\] section missing"):
        parse_scenario_text(text)


def test_preset_conflict():
    text = BASE.replace("rows = 3\ncols = 3", "preset = 10x10\nrows = 4")
    with pytest.raises(ScenarioError, match="contradicts preset"):
        parse_scenario_text(text)


def test_same_value_overlap_allowed_and_explicit_cells():
    extra = ("[conductivity.a]\nshape = rect\nvalue = 0.5\nx1 = 1\ny1 = 1\n"
             "[conductivity.b]\nshape = rect\nvalue = 0.5\nx0 = 0.5\ny0 = 0.5\nx1 = 1.5\ny1 = 1.5\n")
    s = parse_scenario_text(BASE.replace("sites = top-left", "sites = top-left\ncells = 5:6@2.5")
                            + extra)
    assert s.tissue.stimuli == ((0, 0.0), (106, 2.5))
    assert s.tissue.conductivity[15, 15] == 0.5


def test_parse_scenario_missing_file(tmp_path):
    with pytest.raises(ScenarioError):
        parse_scenario(tmp_path / "none.cfg")


def test_small_scenario_simulates():
    s = parse_scenario_text(BASE + "[run]\nnoise_std = 0.01\nseed = 3\n")
    sim = s.simulate()
    assert sim.recording.n_channels == 9 and sim.recording.n_samples % 2 == 0
    again = parse_scenario_text(BASE + "[run]\nnoise_std = 0.01\nseed = 3\n").simulate()
    np.testing.assert_array_equal(sim.recording.samples, again.recording.samples)
