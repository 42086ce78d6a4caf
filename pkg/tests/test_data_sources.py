"""Test the data_sources module."""
import json

import numpy as np
import pytest
from annalist.annalist import Annalist

import fastscan.data_sources as data_sources
from fastscan.model import (
    BYTES_PER_MBPS,
    InvalidParameterError,
    ManifestError,
    TraceError,
    VideoManifest,
)
from fastscan.simulator import SessionConfig, run_session

ann = Annalist()
ann.configure()

commented_trace = """# measured on a train
1.0

2.5
   # indented comment
0
"""


@pytest.fixture()
def manifest_dict():
    """Two chunks at two levels. Do not change these values!"""
    return {
        "chunk_duration_s": 2,
        "startup_delay_s": 4,
        "levels": [
            {"name": "low", "nominal_mbps": 0.5},
            {"name": "high", "nominal_mbps": 1.0},
        ],
        "chunks": [{"sizes_bytes": [100, 200]}, {"sizes_bytes": [110, 190]}],
    }


# Actual tests begin here:
##########################


@pytest.mark.dependency(name="test_get_default_ladder")
def test_get_default_ladder():
    """Testing the default ladder."""
    ladder = data_sources.get_default_ladder()
    assert len(ladder) == 5, "Default ladder should have five levels"
    assert ladder[0] == ("240p", 0.338)
    assert ladder[-1] == ("1080p", 2.806)
    rates = [rate for _, rate in ladder]
    assert rates == sorted(rates), "Ladder not ordered lowest first"


def test_parse_trace():
    """Testing comments, blank lines and unit conversion."""
    timeline = data_sources.parse_trace(commented_trace)
    assert timeline.horizon == 3, "Comments and blank lines should be skipped"
    assert timeline.samples == (BYTES_PER_MBPS, 2.5 * BYTES_PER_MBPS, 0.0)


@pytest.mark.parametrize(
    ("text", "line"),
    [
        ("1.0\n-0.5\n", 2),
        ("1.0\n# note\nfast\n", 3),
        ("nan\n", 1),
    ],
)
def test_parse_trace_errors(text, line):
    """Testing that bad values name their line."""
    with pytest.raises(TraceError, match=f"line {line}") as error:
        data_sources.parse_trace(text)
    assert error.value.line == line


def test_parse_empty_trace():
    """Testing a trace with no samples."""
    with pytest.raises(TraceError, match="no samples"):
        data_sources.parse_trace("# nothing\n\n")


def test_manifest_dict(manifest_dict):
    """Testing manifest conversion both ways."""
    manifest = data_sources.manifest_from_dict(manifest_dict)
    assert manifest.sizes == ((100, 200), (110, 190))
    assert manifest.level_names == ("low", "high")
    assert manifest.level_rates == (0.5 * BYTES_PER_MBPS, BYTES_PER_MBPS)
    assert not manifest.is_cbr
    assert data_sources.manifest_to_dict(manifest) == manifest_dict

    del manifest_dict["chunks"]
    with pytest.raises(ManifestError, match="missing field"):
        data_sources.manifest_from_dict(manifest_dict)


def test_manifest_dict_errors(manifest_dict):
    """Testing malformed manifests."""
    manifest_dict["chunks"][1]["sizes_bytes"] = [110]
    with pytest.raises(ManifestError, match="Chunk 2"):
        data_sources.manifest_from_dict(manifest_dict)
    manifest_dict["chunks"][1]["sizes_bytes"] = [210, 190]
    with pytest.raises(ManifestError, match="strictly increase"):
        data_sources.manifest_from_dict(manifest_dict)


def test_manifest_files(tmp_path, manifest_dict):
    """Testing that a written manifest reads back unchanged."""
    manifest = data_sources.manifest_from_dict(manifest_dict)
    path = tmp_path / "manifest.json"
    data_sources.write_manifest(manifest, path)
    assert data_sources.read_manifest(path) == manifest

    broken = tmp_path / "broken.json"
    broken.write_text('{\n  "chunk_duration_s": 2,\n  oops\n}\n')
    with pytest.raises(ManifestError, match="line 3"):
        data_sources.read_manifest(broken)


def test_trace_files(tmp_path):
    """Testing trace formatting and reading."""
    assert data_sources.format_trace([1]) == "1.0\n"
    assert data_sources.format_trace(np.array([0.1234567, 2.0])) == "0.123457\n2.0\n"
    path = tmp_path / "trace.txt"
    data_sources.write_trace([1.0, 0.5], path)
    assert data_sources.read_trace(path).samples == (
        BYTES_PER_MBPS,
        0.5 * BYTES_PER_MBPS,
    )


@pytest.mark.dependency(name="test_generate_trace")
def test_generate_trace():
    """Testing the synthetic trace models."""
    constant = data_sources.generate_trace(300, 1.0)
    assert len(constant) == 300
    assert (constant == 1.0).all()

    first = data_sources.generate_trace(200, 2.0, 1.0, seed=3, model="markov-2state")
    second = data_sources.generate_trace(200, 2.0, 1.0, seed=3, model="markov-2state")
    assert np.array_equal(first, second), "Seeded traces should repeat"
    assert set(np.unique(first)) <= {1.0, 3.0}, "Markov trace has two states"

    ou = data_sources.generate_trace(500, 0.5, 2.0, seed=5, model="ou")
    assert (ou >= 0).all(), "Bandwidth should never be negative"

    with pytest.raises(InvalidParameterError, match="Unknown trace model"):
        data_sources.generate_trace(10, 1.0, model="pareto")
    with pytest.raises(InvalidParameterError):
        data_sources.generate_trace(0, 1.0)
    with pytest.raises(InvalidParameterError):
        data_sources.generate_trace(10, -1.0)


@pytest.mark.dependency(depends=["test_get_default_ladder"])
def test_generate_manifest():
    """Testing the synthetic manifest."""
    cbr = data_sources.generate_manifest(6, num_levels=3, chunk_duration_s=2)
    assert isinstance(cbr, VideoManifest)
    assert cbr.is_cbr, "No jitter should give a constant bitrate"
    assert cbr.sizes[0] == (84500, 145750, 239750)
    assert cbr.startup_delay_s == 2

    vbr = data_sources.generate_manifest(6, jitter_pct=10, seed=1)
    assert not vbr.is_cbr
    nominal = np.array([0.338, 2.806]) * BYTES_PER_MBPS * 4
    sizes = np.array(vbr.sizes)[:, [0, 4]]
    assert (np.abs(sizes / nominal - 1) <= 0.1 + 1e-6).all()

    with pytest.raises(InvalidParameterError):
        data_sources.generate_manifest(4, jitter_pct=30)
    with pytest.raises(InvalidParameterError):
        data_sources.generate_manifest(4, num_levels=6)
    with pytest.raises(InvalidParameterError):
        data_sources.generate_manifest(0)


@pytest.mark.dependency(depends=["test_generate_trace"])
def test_session_export(tmp_path):
    """Testing the JSON and CSV outputs of a session."""
    manifest = data_sources.generate_manifest(5, num_levels=3)
    samples = data_sources.generate_trace(60, 2.0)
    trace = data_sources.parse_trace(data_sources.format_trace(samples))
    log = run_session(manifest, trace, SessionConfig(window=2), "flat")
    prefix = tmp_path / "session"
    data_sources.session_export(log, prefix)

    with open(tmp_path / "session.json") as json_file:
        data = json.load(json_file)
    assert data["trace"] == "flat"
    assert len(data["chunks"]) == 5
    csv_lines = (tmp_path / "session.csv").read_text().splitlines()
    assert len(csv_lines) == 6, "Header and one row per chunk"
