"""Exhaustive reference solvers for small windows.

``enumerate_optimal`` searches every level assignment of a window and
``min_stall_bruteforce`` every stall placement; both are independent of the
scans except for the shared in-order fetch model.
"""

from dataclasses import dataclass, replace
from fractions import Fraction

from fastscan.model import (
    DecisionSet,
    InsufficientTraceError,
    InvalidParameterError,
    SizeGuardError,
    exact,
)
from fastscan.scanner import level0_forward

MAX_WINDOW = 10
MAX_ASSIGNMENTS = 10**6
MAX_STALL_WINDOW = 6


@dataclass(frozen=True)
class OracleResult:
    """Best score of a window and every assignment reaching it.

    Attributes
    ----------
    best_qoe : Fraction
        Exact optimum of the objective.
    best_decisions : DecisionSet
        The optimum with the lexicographically smallest level vector.
    optimal : tuple of DecisionSet
        Every optimal assignment, in lexicographic level order.
    enumerated : int
        Number of assignments scored.
    """

    best_qoe: Fraction
    best_decisions: DecisionSet
    optimal: tuple
    enumerated: int

    @property
    def optimal_levels(self) -> tuple:
        """Level vectors of every optimum."""
        return tuple(decisions.levels for decisions in self.optimal)


def _with_timeline(ctx, timeline):
    return ctx if timeline is None else replace(ctx, predicted_bandwidth=timeline)


def enumerate_optimal(manifest, timeline, ctx, beta, lam) -> OracleResult:
    """Find every level assignment of the window maximizing the objective.

    The search walks positions left to right, trying levels from the highest
    down, and cuts a branch when even the highest levels for the remaining
    positions (with the stall the assigned positions already force) cannot
    reach the best score found.

    Parameters
    ----------
    manifest : VideoManifest
        Chunk sizes.
    timeline : BandwidthTimeline or None
        Known bandwidth; None uses the context's prediction.
    ctx : WindowContext
        The window.
    beta : float
        Level weight ratio.
    lam : float
        Stall weight.

    Returns
    -------
    OracleResult
        The optimum, its assignments and the number scored.

    Raises
    ------
    SizeGuardError
        If the window has more than 10 chunks or more than 10**6 assignments.
    InsufficientTraceError
        If even the lowest levels do not fit in the timeline.
    """
    width = ctx.size
    if width > MAX_WINDOW:
        raise SizeGuardError(
            f"Window of {width} chunks exceeds the oracle limit of {MAX_WINDOW}.",
            MAX_WINDOW,
        )
    if manifest.num_levels**width > MAX_ASSIGNMENTS:
        raise SizeGuardError(
            f"{manifest.num_levels}**{width} assignments exceed the oracle limit "
            f"of {MAX_ASSIGNMENTS}.",
            MAX_ASSIGNMENTS,
        )
    if lam <= 0 or not 0 < beta < 1:
        raise InvalidParameterError(
            f"Need 0 < beta < 1 and lambda > 0, got beta={beta}, lambda={lam}."
        )
    ctx = _with_timeline(ctx, timeline)
    ctx.check_against(manifest)
    b, penalty = exact(beta), exact(lam)
    top = manifest.top_level
    gains = [sum((b**k for k in range(n + 1)), Fraction(0)) for n in range(top + 1)]
    chunks = list(ctx.chunks)

    def stall_of(levels):
        sizes = [manifest.size(chunk, level) for chunk, level in zip(chunks, levels)]
        try:
            return level0_forward(ctx, manifest, sizes=sizes)
        except InsufficientTraceError:
            return None

    base = stall_of([0] * width)
    if base is None:
        raise InsufficientTraceError(chunks[-1], ctx.predicted_bandwidth.horizon + 1)
    best = gains[0] * width - penalty * base.total_stall
    found = {}
    scored = 0

    def search(prefix, quality):
        nonlocal best, scored
        rest = width - len(prefix)
        if rest == 0:
            scored += 1
            result = stall_of(prefix)
            if result is None:
                return
            value = quality - penalty * result.total_stall
            if value > best:
                best = value
                found.clear()
            if value == best:
                found[tuple(prefix)] = result
            return
        for level in range(top, -1, -1):
            levels = [*prefix, level]
            partial = stall_of(levels + [0] * (rest - 1))
            if partial is None:
                continue
            gain = quality + gains[level]
            bound = gain + gains[top] * (rest - 1) - penalty * partial.total_stall
            if bound < best:
                continue
            search(levels, gain)

    search([], Fraction(0))
    if not found:
        found[(0,) * width] = base

    optimal = tuple(
        DecisionSet.from_levels(
            manifest,
            ctx.first_chunk,
            levels,
            found[levels].stall_before,
            found[levels].deadline,
            prior_stall_s=ctx.prior_stall_s,
        )
        for levels in sorted(found)
    )
    return OracleResult(best, optimal[0], optimal, scored)


def window_feasible(ctx, manifest, timeline, sizes, deadlines) -> bool:
    """Whether chunks of ``sizes`` can be fetched in order by ``deadlines``.

    Checks, for every range of positions a..b, that their total size fits in
    the bandwidth between the release slot of a and the deadline of b.

    Parameters
    ----------
    ctx : WindowContext
        Supplies the current slot, buffer and already buffered chunks.
    manifest : VideoManifest
        Supplies the chunk duration.
    timeline : BandwidthTimeline
        Bandwidth available.
    sizes, deadlines : sequence
        Size and deadline slot of the first ``len(deadlines)`` positions.

    Returns
    -------
    bool
        True iff every range passes.
    """
    places = ctx.buffer_places(manifest)
    count = len(deadlines)
    releases = [ctx.release_slot(q, deadlines, places) for q in range(count)]
    for a in range(count):
        demand = 0
        for b in range(a, count):
            demand += sizes[b]
            if deadlines[b] < releases[a]:
                supply = 0
            else:
                supply = timeline.upto(deadlines[b]) - timeline.upto(releases[a] - 1)
            if demand > supply:
                return False
    return True


def min_stall_bruteforce(manifest, timeline, ctx) -> int:
    """Smallest total stall of any in-order level-0 fetch of the window.

    Stall vectors are tried in order of their total, each non-decreasing
    vector checked with ``window_feasible`` as it is built.

    Parameters
    ----------
    manifest : VideoManifest
        Chunk sizes.
    timeline : BandwidthTimeline or None
        Known bandwidth; None uses the context's prediction.
    ctx : WindowContext
        The window.

    Returns
    -------
    int
        Minimum d(C) in seconds.

    Raises
    ------
    SizeGuardError
        If the window has more than six chunks.
    InsufficientTraceError
        If no stall placement fits in the timeline.
    """
    width = ctx.size
    if width > MAX_STALL_WINDOW:
        raise SizeGuardError(
            f"Window of {width} chunks exceeds the stall search limit of "
            f"{MAX_STALL_WINDOW}.",
            MAX_STALL_WINDOW,
        )
    ctx = _with_timeline(ctx, timeline)
    timeline = ctx.predicted_bandwidth
    if any(value != int(value) for value in timeline.samples):
        raise InvalidParameterError("Stall search needs integer bandwidth samples.")
    sizes = [manifest.size(chunk, 0) for chunk in ctx.chunks]
    bases = [ctx.base_deadline(chunk, manifest) for chunk in ctx.chunks]
    limit = max(0, timeline.horizon - bases[0]) + width * manifest.chunk_duration_s

    def extend(stalls, total):
        position = len(stalls)
        low = stalls[-1] if stalls else 0
        options = [total] if position == width - 1 else range(low, total + 1)
        for stall in options:
            if stall < low:
                continue
            candidate = [*stalls, stall]
            deadlines = [base + d for base, d in zip(bases, candidate)]
            if not window_feasible(ctx, manifest, timeline, sizes, deadlines):
                continue
            if position == width - 1 or extend(candidate, total):
                return True
        return False

    for total in range(limit + 1):
        if extend([], total):
            return total
    raise InsufficientTraceError(ctx.last_chunk, timeline.horizon + 1)
