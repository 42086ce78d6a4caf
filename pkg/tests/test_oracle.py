"""Test the oracle module, and the scans against it."""
# pyright: reportGeneralTypeIssues=false

import random
from fractions import Fraction

import pytest
from annalist.annalist import Annalist

from fastscan import oracle, scanner
from fastscan.evaluator import check_feasibility
from fastscan.model import (
    BandwidthTimeline,
    DecisionSet,
    InsufficientTraceError,
    InvalidParameterError,
    SizeGuardError,
    VideoManifest,
    WindowContext,
)
from fastscan.qoe import QoEParams, score
from fastscan.simulator import replay_decisions

ann = Annalist()
ann.configure()

two_chunk_sizes = ((1, 2), (1, 2))

binding_buffer_sizes = ((1, 3, 4),) * 4
binding_buffer_trace = (4, 0, 3, 0)


@pytest.fixture()
def two_chunk_manifest():
    """Two CBR chunks with X_0=1, X_1=2. Do not change these values!"""
    return VideoManifest(1, 1, two_chunk_sizes)


def window(manifest, samples, buffer_cap_s=10):
    """Whole-video window from slot 1."""
    return WindowContext(
        1,
        manifest.num_chunks,
        1,
        manifest.startup_delay_s,
        buffer_cap_s,
        BandwidthTimeline(samples),
    )


def random_cbr_instance(rng, buffer_places):
    """A CBR manifest and a window with integer bandwidth."""
    chunks = rng.randint(2, 8)
    levels = rng.randint(1, 3)
    row = [rng.randint(1, 3)]
    for _ in range(levels):
        row.append(row[-1] + rng.randint(1, 3))
    manifest = VideoManifest(1, rng.randint(1, 3), [row] * chunks)
    samples = [rng.randint(0, 4) for _ in range(3 * chunks)] + [4] * 10
    return manifest, window(manifest, samples, buffer_places)


# Actual tests begin here:
##########################


@pytest.mark.dependency(name="test_enumerate_small")
def test_enumerate_small(two_chunk_manifest):
    """Test the optimum of hand-checked instances."""
    single = VideoManifest(1, 1, ((1, 2),))
    result = oracle.enumerate_optimal(single, None, window(single, (10,) * 5), 0.1, 10)
    assert result.best_qoe == Fraction(11, 10), "Expected 1 + beta"
    assert result.best_decisions.levels == (1,)

    tight = oracle.enumerate_optimal(
        two_chunk_manifest, None, window(two_chunk_manifest, (1,) * 10), 0.1, 10
    )
    assert tight.best_qoe == 2
    assert tight.best_decisions.levels == (0, 0)
    assert tight.optimal_levels == ((0, 0),), "Only all-zero reaches 2"

    loose = oracle.enumerate_optimal(
        two_chunk_manifest, None, window(two_chunk_manifest, (2,) * 10), 0.1, 10
    )
    assert loose.best_qoe == Fraction(11, 5), "Expected 2 + 2 beta"
    assert loose.best_decisions.levels == (1, 1)
    assert loose.enumerated >= 1


def test_enumerate_timeline_override(two_chunk_manifest):
    """Test that a given timeline replaces the context's prediction."""
    ctx = window(two_chunk_manifest, (1,) * 10)
    result = oracle.enumerate_optimal(
        two_chunk_manifest, BandwidthTimeline((2,) * 10), ctx, 0.1, 10
    )
    assert result.best_decisions.levels == (1, 1)


def test_enumerate_binding_buffer():
    """Test the instance where the exhaustive search beats the scans."""
    manifest = VideoManifest(1, 1, binding_buffer_sizes)
    result = oracle.enumerate_optimal(
        manifest, None, window(manifest, binding_buffer_trace, 2), 0.1, 10
    )
    assert result.best_decisions.levels == (0, 0, 2, 0)
    assert result.best_qoe == Fraction(411, 100)


def test_size_guards():
    """Test that large instances are refused."""
    long = VideoManifest(1, 1, ((1, 2),) * 11)
    with pytest.raises(SizeGuardError) as error:
        oracle.enumerate_optimal(long, None, window(long, (1,) * 40), 0.1, 10)
    assert error.value.bound == oracle.MAX_WINDOW
    wide = VideoManifest(1, 1, ((1, 2, 3, 4, 5),) * 9)
    with pytest.raises(SizeGuardError) as error:
        oracle.enumerate_optimal(wide, None, window(wide, (1,) * 40), 0.01, 10)
    assert error.value.bound == oracle.MAX_ASSIGNMENTS
    seven = VideoManifest(1, 1, ((1,),) * 7)
    with pytest.raises(SizeGuardError):
        oracle.min_stall_bruteforce(seven, None, window(seven, (1,) * 40))


def test_min_stall_bruteforce():
    """Test the stall search on hand-checked instances."""
    unit = VideoManifest(1, 1, ((1,),) * 3)
    assert oracle.min_stall_bruteforce(unit, None, window(unit, (10,) * 10)) == 0
    double = VideoManifest(1, 1, ((2,),) * 3)
    assert oracle.min_stall_bruteforce(double, None, window(double, (1,) * 10)) == 3
    alternating = window(unit, (0, 2) * 5)
    expected = scanner.level0_forward(alternating, unit).total_stall
    assert expected == 1
    assert oracle.min_stall_bruteforce(unit, None, alternating) == expected
    with pytest.raises(InvalidParameterError):
        oracle.min_stall_bruteforce(unit, None, window(unit, (0.5,) * 10))


def test_window_feasible():
    """Test the interval capacity check."""
    unit = VideoManifest(1, 1, ((1,),) * 3)
    ctx = window(unit, (1,) * 10)
    timeline = ctx.predicted_bandwidth
    assert oracle.window_feasible(ctx, unit, timeline, (1, 1, 1), (1, 2, 3))
    assert not oracle.window_feasible(ctx, unit, timeline, (1, 1, 1), (1, 1, 3))
    assert not oracle.window_feasible(ctx, unit, timeline, (2, 1, 1), (1, 3, 4))


@pytest.mark.dependency(name="test_forward_stall_is_minimal")
def test_forward_stall_is_minimal():
    """Test that the forward scan finds the minimum stall."""
    rng = random.Random(1201)
    for _ in range(500):
        chunks = rng.randint(1, 6)
        manifest = VideoManifest(
            1, rng.randint(1, 3), [[rng.randint(1, 4)] for _ in range(chunks)]
        )
        samples = [rng.randint(0, 4) for _ in range(3 * chunks)] + [4] * 8
        ctx = window(manifest, samples, rng.choice((2, 10)))
        forward = scanner.level0_forward(ctx, manifest)
        assert forward.total_stall == oracle.min_stall_bruteforce(
            manifest, None, ctx
        ), f"Forward stall not minimal for {manifest.sizes} over {samples}"


@pytest.mark.dependency(
    depends=["test_enumerate_small", "test_forward_stall_is_minimal"]
)
def test_cbr_optimality():
    """Test the scans against exhaustive search on random CBR windows.

    With room in the buffer for the whole window the scan reaches the optimum
    exactly. The two-place buffer cases only check that the scan is feasible,
    reaches the minimum stall and scores no more than the optimum. There the
    scan can fall short of it, as the binding-buffer regression in the scanner
    tests shows.
    """
    rng = random.Random(4242)
    params = QoEParams(0.1, 10)
    for _ in range(500):
        places = rng.choice((2, 10))
        manifest, ctx = random_cbr_instance(rng, places)
        decisions = scanner.fastscan_window(ctx, manifest, 0.1, 10)
        result = oracle.enumerate_optimal(manifest, None, ctx, 0.1, 10)
        found = score(decisions, params, exact_result=True)

        schedule = replay_decisions(
            manifest, ctx.predicted_bandwidth, decisions, ctx.buffer_cap_s
        )
        report = check_feasibility(
            manifest, ctx.predicted_bandwidth, decisions, schedule
        )
        assert report.passed, f"Infeasible scan output: {report.violations}"
        assert decisions.total_stall == result.best_decisions.total_stall
        if places >= manifest.num_chunks:
            assert found == result.best_qoe, (
                f"Scan {decisions.levels} scored {found}, optimum "
                f"{result.best_decisions.levels} scored {result.best_qoe}"
            )
        else:
            assert found <= result.best_qoe


def skipped(levels, level):
    """Chunk indices left below ``level``."""
    return [i for i, chunk_level in enumerate(levels, start=1) if chunk_level < level]


@pytest.mark.dependency(depends=["test_cbr_optimality"])
def test_skips_come_first():
    """Test that the scan skips the earliest chunks any optimum could skip."""
    rng = random.Random(2718)
    for _ in range(300):
        manifest, ctx = random_cbr_instance(rng, 10)
        decisions = scanner.fastscan_window(ctx, manifest, 0.1, 10)
        result = oracle.enumerate_optimal(manifest, None, ctx, 0.1, 10)
        for optimum in result.optimal:
            for level in range(1, manifest.num_levels):
                ours = skipped(decisions.levels, level)
                theirs = skipped(optimum.levels, level)
                assert len(ours) == len(theirs), (
                    f"Level {level} counts differ: {decisions.levels} against "
                    f"{optimum.levels}"
                )
                assert all(a <= b for a, b in zip(ours, theirs, strict=True)), (
                    f"Level {level} skips {ours} later than the optimum's {theirs}"
                )


def test_vbr_gap():
    """Test that the scan never beats the optimum on random VBR windows."""
    rng = random.Random(1618)
    params = QoEParams(0.1, 10)
    gaps = []
    for _ in range(300):
        chunks = rng.randint(1, 5)
        top = rng.randint(1, 2)
        sizes = []
        for _ in range(chunks):
            row = [rng.randint(1, 3)]
            for _ in range(top):
                row.append(row[-1] + rng.randint(1, 3))
            sizes.append(row)
        manifest = VideoManifest(1, rng.randint(1, 3), sizes)
        samples = [rng.randint(0, 4) for _ in range(3 * chunks)] + [4] * 10
        ctx = window(manifest, samples, rng.choice((2, 10)))
        decisions = scanner.fastscan_window(ctx, manifest, 0.1, 10)
        result = oracle.enumerate_optimal(manifest, None, ctx, 0.1, 10)

        gap = result.best_qoe - score(decisions, params, exact_result=True)
        assert gap >= 0, f"Scan {decisions.levels} beat the optimum by {-gap}"
        assert decisions.total_stall == result.best_decisions.total_stall
        schedule = replay_decisions(
            manifest, ctx.predicted_bandwidth, decisions, ctx.buffer_cap_s
        )
        report = check_feasibility(
            manifest, ctx.predicted_bandwidth, decisions, schedule
        )
        assert report.passed, f"Infeasible scan output: {report.violations}"
        gaps.append(gap)
    assert min(gaps) >= 0
    assert sum(gaps) / len(gaps) < 1, "Mean gap larger than one base chunk"


def test_optimum_dominates_feasible_decisions():
    """Test the optimum against every feasible assignment tried."""
    rng = random.Random(3141)
    params = QoEParams(0.1, 10)
    checked = 0
    for _ in range(100):
        manifest, ctx = random_cbr_instance(rng, rng.choice((2, 10)))
        result = oracle.enumerate_optimal(manifest, None, ctx, 0.1, 10)
        timeline = ctx.predicted_bandwidth
        for _ in range(5):
            levels = [
                rng.randint(0, manifest.top_level) for _ in range(manifest.num_chunks)
            ]
            sizes = [manifest.size(i, level) for i, level in enumerate(levels, 1)]
            try:
                forward = scanner.level0_forward(ctx, manifest, sizes=sizes)
            except InsufficientTraceError:
                continue
            decisions = DecisionSet.from_levels(
                manifest,
                1,
                levels,
                forward.stall_before,
                forward.deadline,
                prior_stall_s=ctx.prior_stall_s,
            )
            schedule = replay_decisions(
                manifest, timeline, decisions, ctx.buffer_cap_s
            )
            report = check_feasibility(manifest, timeline, decisions, schedule)
            if not report.passed:
                continue
            checked += 1
            assert score(decisions, params, exact_result=True) <= result.best_qoe, (
                f"{levels} outscored the optimum {result.best_decisions.levels}"
            )
    assert checked >= 100, "Too few feasible assignments were checked"


def test_optimum_ignores_common_scale():
    """Test that scaling sizes and bandwidth together keeps the optimum."""
    rng = random.Random(1414)
    for _ in range(100):
        manifest, ctx = random_cbr_instance(rng, rng.choice((2, 10)))
        factor = rng.randint(2, 5)
        scaled = VideoManifest(
            manifest.chunk_duration_s,
            manifest.startup_delay_s,
            [[factor * size for size in row] for row in manifest.sizes],
        )
        samples = [factor * sample for sample in ctx.predicted_bandwidth.samples]
        scaled_ctx = window(scaled, samples, ctx.buffer_cap_s)

        result = oracle.enumerate_optimal(manifest, None, ctx, 0.1, 10)
        scaled_result = oracle.enumerate_optimal(scaled, None, scaled_ctx, 0.1, 10)
        assert scaled_result.optimal_levels == result.optimal_levels
        assert scaled_result.best_qoe == result.best_qoe
        assert (
            scanner.fastscan_window(scaled_ctx, scaled, 0.1, 10).levels
            == scanner.fastscan_window(ctx, manifest, 0.1, 10).levels
        ), "Scan decisions changed with the scale"
