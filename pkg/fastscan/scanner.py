"""Forward and backward scans deciding the quality levels of one window.

Every scan works on 1-second slots of the predicted bandwidth timeline held
by the ``WindowContext``. Positions ``q`` run over the window (``0..W-1``);
chunk indices are ``first_chunk + q``.

The buffer cap is enforced through release slots: with ``K`` buffer places,
the chunk at position ``q`` may receive bytes only from the deadline slot of
the chunk ``K`` places ahead of it (see ``WindowContext.release_slot``).
"""

from dataclasses import dataclass

from fastscan.model import (
    BetaConditionError,
    DecisionSet,
    FormulationError,
    InsufficientTraceError,
    InvalidParameterError,
    InvariantViolation,
    SkipRecord,
    validate_beta,
)


class ScanCounter:
    """Counts inner-loop iterations across the scans of a window."""

    def __init__(self):
        """Start at zero."""
        self.count = 0

    def tick(self, steps: int = 1):
        """Add iterations."""
        self.count += steps

    def __repr__(self):
        """Counter representation."""
        return f"ScanCounter({self.count})"


@dataclass(frozen=True)
class Level0Result:
    """Stalls and deadlines found by the level-0 scans.

    ``final_stall`` is empty until the backward scan has run.
    """

    stall_before: tuple
    deadline: tuple
    final_stall: tuple = ()

    @property
    def total_stall(self) -> int:
        """d(C)."""
        return self.stall_before[-1] if self.stall_before else 0


@dataclass(frozen=True)
class LevelNForwardResult:
    """Earliest starts of an in-order fetch under fixed deadlines.

    Attributes
    ----------
    earliest_start : tuple
        t(i), the first slot with bytes of each chunk (None if not fetched).
    first_slot_amount : tuple
        a(i), bytes of each chunk fetched in slot t(i).
    opening : tuple
        Bandwidth left in slot t(i) just before chunk i took its share.
    release_bound : tuple
        Whether the buffer release delayed the start of each chunk.
    residual : tuple
        e(j) for the slots ``start_slot .. start_slot + len(residual) - 1``.
    start_slot : int
        Slot of ``residual[0]``.
    """

    earliest_start: tuple
    first_slot_amount: tuple
    opening: tuple
    release_bound: tuple
    residual: tuple
    start_slot: int

    def residual_at(self, slot: int):
        """e(j); slots outside the scanned range are reported as untouched."""
        index = slot - self.start_slot
        if 0 <= index < len(self.residual):
            return self.residual[index]
        return None


@dataclass(frozen=True)
class LevelNBackwardResult:
    """Sizes after one level's backward scan."""

    sizes: tuple
    promoted: frozenset
    skipped: tuple


def _counter(counter):
    return ScanCounter() if counter is None else counter


def level0_forward(ctx, manifest, sizes=None, counter=None) -> Level0Result:
    """Find the minimum stalls that fetch the window in order.

    Parameters
    ----------
    ctx : WindowContext
        Window, current slot, prior stall, buffer cap and predicted bandwidth.
    manifest : VideoManifest
        Chunk sizes.
    sizes : sequence, optional
        Size to fetch per window position, level-0 sizes by default.
    counter : ScanCounter, optional
        Iteration counter to add to.

    Returns
    -------
    Level0Result
        d(i) per chunk and the deadlines they imply.

    Raises
    ------
    InsufficientTraceError
        If the predicted timeline ends before the last chunk is fetched.
    """
    counter = _counter(counter)
    timeline = ctx.predicted_bandwidth
    horizon = timeline.horizon
    places = ctx.buffer_places(manifest)
    if sizes is None:
        sizes = [manifest.size(chunk, 0) for chunk in ctx.chunks]

    slot = ctx.current_slot
    left = timeline.at(slot)
    stall = 0
    stalls = []
    deadlines = []
    for q, chunk in enumerate(ctx.chunks):
        release = ctx.release_slot(q, deadlines, places)
        if release > slot:
            slot = release
            left = timeline.at(slot)
        remaining = sizes[q]
        while remaining > 0:
            if slot > horizon:
                raise InsufficientTraceError(chunk, slot)
            counter.tick()
            take = min(left, remaining)
            remaining -= take
            left -= take
            if remaining > 0:
                slot += 1
                left = timeline.at(slot)
        base = ctx.base_deadline(chunk, manifest)
        stall = max(stall, slot - base)
        stalls.append(stall)
        deadlines.append(base + stall)
    return Level0Result(tuple(stalls), tuple(deadlines))


def _place_backward(timeline, size, top, pointer, floor_slot, counter):
    """Fill ``size`` as late as possible at or below ``top``.

    Returns the first slot used and the new ``(slot, left)`` frontier.
    """
    if pointer is None or top < pointer[0]:
        slot, left = top, timeline.at(top)
    else:
        slot, left = pointer
    remaining = size
    while remaining > 0:
        if slot < floor_slot:
            return None, (slot, left)
        counter.tick()
        take = min(left, remaining)
        remaining -= take
        left -= take
        if remaining > 0:
            slot -= 1
            left = timeline.at(slot)
    if slot < floor_slot:
        return None, (slot, left)
    return slot, (slot, left)


def level0_backward(ctx, manifest, forward: Level0Result, counter=None) -> Level0Result:
    """Move the window's stalls as early as the buffer allows.

    Chunks are placed as late as possible, last chunk first. Each chunk starts
    from the hypothesis that all stall lies before it (the stall of its
    successor) and gives back one second at a time while its deadline would
    fall after the first slot used by the chunk it releases from the buffer.

    Parameters
    ----------
    ctx : WindowContext
        The context ``forward`` was computed for.
    manifest : VideoManifest
        Chunk sizes.
    forward : Level0Result
        Output of ``level0_forward``.
    counter : ScanCounter, optional
        Iteration counter to add to.

    Returns
    -------
    Level0Result
        ``forward``'s stalls together with the final stalls and deadlines.

    Raises
    ------
    FormulationError
        If a chunk cannot be placed without dropping below its forward stall.
    """
    counter = _counter(counter)
    timeline = ctx.predicted_bandwidth
    places = ctx.buffer_places(manifest)
    width = ctx.size
    if len(forward.stall_before) != width:
        raise FormulationError(
            f"Forward stalls cover {len(forward.stall_before)} chunks, the window "
            f"has {width}."
        )

    final = [0] * width
    deadlines = [0] * width
    starts = [0] * width
    pointer = None
    for q in reversed(range(width)):
        chunk = ctx.first_chunk + q
        base = ctx.base_deadline(chunk, manifest)
        if q == width - 1:
            top = base + forward.total_stall
        else:
            top = base + final[q + 1]
        if q + places < width:
            while top > starts[q + places]:
                if top <= base + forward.stall_before[q]:
                    raise FormulationError(
                        f"Chunk {chunk} cannot release chunk {chunk + places} "
                        f"without dropping below its forward stall."
                    )
                counter.tick()
                top -= 1
        final[q] = top - base
        deadlines[q] = top
        floor_slot = ctx.release_slot(q, (), places) if q < places else ctx.current_slot
        start, pointer = _place_backward(
            timeline, manifest.size(chunk, 0), top, pointer, floor_slot, counter
        )
        if start is None:
            raise FormulationError(
                f"Chunk {chunk} does not fit at level 0 before slot {top}."
            )
        starts[q] = start
    return Level0Result(forward.stall_before, tuple(deadlines), tuple(final))


def leveln_forward(
    ctx, manifest, current_sizes, candidates, deadlines, counter=None
) -> LevelNForwardResult:
    """Fetch the window in order at its current sizes under fixed deadlines.

    Parameters
    ----------
    ctx : WindowContext
        Window context.
    manifest : VideoManifest
        Used for the buffer places.
    current_sizes : sequence
        Size of each window position after the levels decided so far.
    candidates : iterable of int
        Chunks that are fetched (the level-0 set, the whole window).
    deadlines : sequence of int
        Final deadline of each window position.
    counter : ScanCounter, optional
        Iteration counter to add to.

    Returns
    -------
    LevelNForwardResult
        t(i), a(i), openings, release flags and residual bandwidth.

    Raises
    ------
    InvariantViolation
        If a chunk misses its deadline, which the level-0 scans rule out.
    """
    counter = _counter(counter)
    timeline = ctx.predicted_bandwidth
    places = ctx.buffer_places(manifest)
    width = ctx.size
    start_slot = ctx.current_slot
    last = max([start_slot, *deadlines])
    residual = [timeline.at(j) for j in range(start_slot, last + 1)]
    fetched = set(candidates)

    earliest = [None] * width
    amounts = [0] * width
    openings = [0] * width
    bound = [False] * width
    slot = start_slot
    for q, chunk in enumerate(ctx.chunks):
        if chunk not in fetched:
            continue
        release = ctx.release_slot(q, deadlines, places)
        if release > slot:
            slot = release
            bound[q] = True
        remaining = current_sizes[q]
        if remaining == 0:
            earliest[q] = slot
            openings[q] = residual[slot - start_slot] if slot <= last else 0
            continue
        while remaining > 0:
            if slot > deadlines[q]:
                raise InvariantViolation(
                    f"Chunk {chunk} misses its deadline {deadlines[q]} at "
                    f"size {current_sizes[q]}."
                )
            counter.tick()
            index = slot - start_slot
            take = min(residual[index], remaining)
            if take > 0 and earliest[q] is None:
                earliest[q] = slot
                amounts[q] = take
                openings[q] = residual[index]
            residual[index] -= take
            remaining -= take
            if remaining > 0:
                slot += 1
    return LevelNForwardResult(
        tuple(earliest),
        tuple(amounts),
        tuple(openings),
        tuple(bound),
        tuple(residual),
        start_slot,
    )


def leveln_backward(
    ctx,
    manifest,
    level: int,
    current_sizes,
    fwd: LevelNForwardResult,
    cumulative,
    deadlines,
    counter=None,
) -> LevelNBackwardResult:
    """Promote, latest chunk first, every chunk that still fits at ``level``.

    Chunks after the one being examined are held as late as possible at
    their final sizes; chunks before it keep their earliest placement from
    ``fwd``. A chunk currently at ``level - 1`` is promoted iff the bandwidth
    between its earliest start and the late frontier (rem1) covers its size
    at ``level``.

    Parameters
    ----------
    ctx : WindowContext
        Window context.
    manifest : VideoManifest
        Chunk sizes.
    level : int
        The level n >= 1 being decided.
    current_sizes : sequence
        Size of each window position through level n - 1.
    fwd : LevelNForwardResult
        Output of ``leveln_forward`` at ``current_sizes``.
    cumulative : sequence
        c(j) of the predicted timeline, with ``cumulative[0] = 0``.
    deadlines : sequence of int
        Final deadline of each window position.
    counter : ScanCounter, optional
        Iteration counter to add to.

    Returns
    -------
    LevelNBackwardResult
        New sizes, the promoted chunks and a skip record per chunk left behind.

    Raises
    ------
    InvariantViolation
        If the late placement runs below the current slot.
    """
    if level < 1:
        raise InvariantViolation(f"Backward promotion needs level >= 1, got {level}.")
    counter = _counter(counter)
    timeline = ctx.predicted_bandwidth
    top_index = len(cumulative) - 1

    def c(j):
        return cumulative[min(max(j, 0), top_index)]

    sizes = list(current_sizes)
    promoted = set()
    skipped = []
    pointer = None
    for q in reversed(range(ctx.size)):
        chunk = ctx.first_chunk + q
        deadline = deadlines[q]
        if pointer is None or deadline < pointer[0]:
            upper, upper_left = deadline, timeline.at(deadline)
        else:
            upper, upper_left = pointer

        if sizes[q] == manifest.size(chunk, level - 1):
            target = manifest.size(chunk, level)
            start = fwd.earliest_start[q]
            opening = fwd.opening[q]
            if start is None or start > upper:
                capacity = 0
            elif start < upper:
                capacity = c(upper - 1) - c(start) + upper_left + opening
            else:
                capacity = opening + upper_left - timeline.at(upper)
            counter.tick()
            if capacity >= target:
                sizes[q] = target
                promoted.add(chunk)
            else:
                reason = "buffer" if fwd.release_bound[q] else "bandwidth"
                skipped.append(SkipRecord(chunk, level, reason))
        else:
            skipped.append(SkipRecord(chunk, level, "not-a-candidate"))

        placed, pointer = _place_backward(
            timeline, sizes[q], upper, (upper, upper_left), ctx.current_slot, counter
        )
        if placed is None:
            raise InvariantViolation(
                f"Chunk {chunk} at size {sizes[q]} runs below slot "
                f"{ctx.current_slot} in the backward scan."
            )
    return LevelNBackwardResult(tuple(sizes), frozenset(promoted), tuple(skipped))


def fastscan_window(ctx, manifest, beta, lam, counter=None) -> DecisionSet:
    """Decide the quality level of every chunk in a window.

    Runs the level-0 forward and backward scans to fix stalls and deadlines,
    then a forward and a backward scan for each higher level.

    Parameters
    ----------
    ctx : WindowContext
        Window context with the predicted bandwidth.
    manifest : VideoManifest
        Chunk sizes.
    beta : float
        Level weight ratio; must satisfy ``validate_beta`` for the window.
    lam : float
        Stall weight, positive.
    counter : ScanCounter, optional
        Iteration counter to add to.

    Returns
    -------
    DecisionSet
        Levels, sizes, stalls, deadlines and skip records of the window.

    Raises
    ------
    BetaConditionError
        If beta does not make the levels lexicographic for this window.
    InsufficientTraceError
        If the predicted timeline cannot carry the window at level 0.
    """
    if lam <= 0:
        raise InvalidParameterError(f"lambda must be positive, got {lam}.")
    ctx.check_against(manifest)
    if not validate_beta(beta, ctx.size, manifest.top_level):
        raise BetaConditionError(
            f"beta={beta} does not satisfy the level condition for a window of "
            f"{ctx.size} chunks and {manifest.num_levels} levels."
        )
    counter = _counter(counter)

    forward = level0_forward(ctx, manifest, counter=counter)
    settled = level0_backward(ctx, manifest, forward, counter=counter)
    deadlines = settled.deadline
    sizes = tuple(manifest.size(chunk, 0) for chunk in ctx.chunks)
    levels = [0] * ctx.size
    skipped = []
    cumulative = ctx.predicted_bandwidth.cumulative
    for level in range(1, manifest.num_levels):
        fwd = leveln_forward(ctx, manifest, sizes, ctx.chunks, deadlines, counter)
        back = leveln_backward(
            ctx, manifest, level, sizes, fwd, cumulative, deadlines, counter
        )
        sizes = back.sizes
        for chunk in back.promoted:
            levels[chunk - ctx.first_chunk] = level
        skipped.extend(back.skipped)

    return DecisionSet.from_levels(
        manifest,
        ctx.first_chunk,
        levels,
        settled.final_stall,
        deadlines,
        prior_stall_s=ctx.prior_stall_s,
        skipped=tuple(skipped),
        iterations=counter.count,
    )
