"""Test the model module."""
# pyright: reportGeneralTypeIssues=false

import pandas as pd
import pytest
from annalist.annalist import Annalist

from fastscan import model

ann = Annalist()
ann.configure()

three_level_sizes = (
    (1, 3, 4),
    (2, 5, 9),
    (1, 3, 4),
)

cbr_sizes = ((4, 8), (4, 8), (4, 8))


@pytest.fixture()
def manifest():
    """Three chunks, three levels. Do not change these values!"""
    return model.VideoManifest(1, 1, three_level_sizes)


@pytest.fixture()
def cbr_manifest():
    """Three CBR chunks of 4 seconds. Do not change these values!"""
    return model.VideoManifest(4, 4, cbr_sizes)


# Actual tests begin here:
##########################


def test_validate_beta():
    """Test the level weight condition."""
    assert model.validate_beta(0.1, 5, 4), "beta=0.1 should hold for W=5, N=4"
    assert not model.validate_beta(0.5, 5, 4), "beta=0.5 should fail for W=5, N=4"
    assert model.validate_beta(0.9, 50, 0), "A single level always holds"
    assert not model.validate_beta(0.1, 10, 1), "W*beta = 1 is not strictly below 1"
    with pytest.raises(model.InvalidParameterError):
        model.validate_beta(1.0, 5, 4)
    with pytest.raises(model.InvalidParameterError):
        model.validate_beta(0.1, 0, 4)


def test_error_hierarchy():
    """Test that callers can catch the generic classes."""
    assert issubclass(model.BetaConditionError, ValueError)
    assert issubclass(model.TraceError, ValueError)
    assert issubclass(model.SizeGuardError, ValueError)
    assert issubclass(model.InsufficientTraceError, RuntimeError)
    assert issubclass(model.ProgressTimeoutError, RuntimeError)
    error = model.InsufficientTraceError(3, 17)
    assert (error.chunk, error.slot) == (3, 17), "Error lost its chunk and slot"


def test_manifest(manifest, cbr_manifest):
    """Test the manifest accessors."""
    assert manifest.num_chunks == 3
    assert manifest.num_levels == 3
    assert manifest.top_level == 2
    assert manifest.size(2, 2) == 9, "size is 1-based in chunks, 0-based in levels"
    assert [manifest.increment(2, n) for n in range(3)] == [2, 3, 4]
    assert not manifest.is_cbr, "Chunk 2 differs, manifest is not CBR"
    assert cbr_manifest.is_cbr, "Identical rows should be CBR"
    assert manifest.level_of(2, 5) == 1
    assert manifest.level_of(2, 6) is None


def test_manifest_level_rates(cbr_manifest):
    """Test level rates with and without nominal bitrates."""
    assert cbr_manifest.level_rates == pytest.approx((1.0, 2.0))
    nominal = model.VideoManifest(4, 4, cbr_sizes, nominal_mbps=(0.5, 1.0))
    assert nominal.level_rates == pytest.approx((62500, 125000))


def test_manifest_errors():
    """Test the manifest invariants."""
    with pytest.raises(model.ManifestError, match="strictly increase"):
        model.VideoManifest(1, 1, ((1, 1),))
    with pytest.raises(model.ManifestError):
        model.VideoManifest(0, 1, ((1, 2),))
    with pytest.raises(model.ManifestError):
        model.VideoManifest(1, -1, ((1, 2),))
    with pytest.raises(model.ManifestError, match="Chunk 2"):
        model.VideoManifest(1, 1, ((1, 2), (1,)))
    with pytest.raises(model.ManifestError):
        model.VideoManifest(1, 1, ())
    with pytest.raises(model.ManifestError):
        model.VideoManifest(1, 1, ((1, 2),), level_names=("low",))
    # Empty level-0 files are allowed
    assert model.VideoManifest(1, 1, ((0, 1),)).size(1, 0) == 0


def test_bandwidth_timeline():
    """Test the bandwidth timeline."""
    timeline = model.BandwidthTimeline((2, 0, 3))
    assert timeline.horizon == 3
    assert timeline.at(0) == 0, "Slots before 1 carry nothing"
    assert timeline.at(4) == 0, "Slots past the horizon carry nothing"
    assert timeline.cumulative == (0, 2, 2, 5)
    assert timeline.upto(10) == 5, "upto should clamp to the horizon"
    assert timeline.extended(5).samples == (2, 0, 3, 3, 3)
    assert timeline.extended(2) is timeline
    series = timeline.to_series()
    assert isinstance(series, pd.Series)
    assert list(series.index) == [1, 2, 3]
    with pytest.raises(model.TraceError, match="Slot 2"):
        model.BandwidthTimeline((1, -1))
    with pytest.raises(model.TraceError):
        model.BandwidthTimeline((1.0, float("nan")))


def test_window_context(manifest):
    """Test window bounds and release slots."""
    timeline = model.BandwidthTimeline((1,) * 10)
    with pytest.raises(model.StructuralError):
        model.WindowContext(3, 2, 1, 1, 10, timeline)
    with pytest.raises(model.StructuralError):
        model.WindowContext(1, 2, 0, 1, 10, timeline)

    ctx = model.WindowContext(2, 3, 3, 1, 2, timeline, (5, 2, 7))
    assert ctx.buffered_deadlines == (2, 5, 7), "Buffered deadlines not sorted"
    assert ctx.live_buffered() == (5, 7), "Chunk played by slot 3 still counted"
    assert ctx.size == 2
    assert list(ctx.chunks) == [2, 3]
    assert ctx.base_deadline(3, manifest) == 3
    assert ctx.buffer_places(manifest) == 2
    assert ctx.release_slot(0, (), 2) == 5, "Should wait for the first buffered"
    assert ctx.release_slot(1, (), 2) == 7, "Should wait for the second buffered"
    assert ctx.release_slot(2, (9,), 2) == 9, "Should wait for a window deadline"
    assert ctx.release_slot(0, (), 4) == 3, "Free places release immediately"

    ctx.check_against(manifest)
    with pytest.raises(model.StructuralError):
        model.WindowContext(1, 4, 1, 1, 10, timeline).check_against(manifest)
    with pytest.raises(model.StructuralError):
        model.WindowContext(1, 3, 1, 1, 0.5, timeline).check_against(manifest)


def test_decision_set(manifest):
    """Test building decisions from levels."""
    decisions = model.DecisionSet.from_levels(
        manifest, 1, (2, 1, 0), (0, 0, 1), (1, 2, 4), prior_stall_s=1
    )
    assert decisions.indicators == ((1, 1, 1), (1, 1, 0), (1, 0, 0))
    assert decisions.target_size == (4, 5, 1)
    assert decisions.levels == (2, 1, 0)
    assert decisions.level_counts() == (3, 2, 1)
    assert decisions.total_stall == 1
    assert decisions.last_chunk == 3
    assert list(decisions.chunks) == [1, 2, 3]


def test_fetch_schedule():
    """Test per-slot aggregation and buffer occupancy."""
    schedule = model.FetchSchedule(
        (
            model.FetchRecord(1, 0, 1, 1),
            model.FetchRecord(2, 0, 2, 0.5),
            model.FetchRecord(2, 1, 2, 0.5),
        ),
        1,
        10,
    )
    assert schedule.per_slot() == {1: 1, 2: 1.0}
    assert schedule.per_chunk() == {(1, 1): 1, (2, 2): 1.0}
    assert schedule.first_slots() == {1: 1, 2: 2}
    occupancy = schedule.buffer_occupancy({1: 2, 2: 3})
    assert list(occupancy) == [1.0, 1.0, 0.0], "Buffer occupancy is wrong"
    assert list(occupancy.index) == [1, 2, 3]


def test_exact():
    """Test the exact conversion."""
    assert model.exact(0.1) * 10 == 1, "0.1 should convert to exactly 1/10"
    assert model.exact(3) == 3
