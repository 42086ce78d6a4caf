"""Tools for checking decisions and fetch schedules against the constraints."""

import math
from dataclasses import dataclass

from fastscan.model import StructuralError

FAMILIES = (
    "coverage",
    "monotonicity",
    "stalls",
    "bandwidth",
    "buffer",
    "deadline",
    "completeness",
)

TOLERANCE = 1e-9


@dataclass(frozen=True)
class Violation:
    """First witness of a failed constraint family."""

    family: str
    chunk: int | None = None
    level: int | None = None
    slot: int | None = None
    detail: str = ""


@dataclass(frozen=True)
class FeasibilityReport:
    """Pass or fail per constraint family, with one witness per failure."""

    violations: tuple = ()

    @property
    def passed(self) -> bool:
        """Whether every family holds."""
        return not self.violations

    @property
    def families(self) -> dict:
        """Map of family name to pass (True) or fail (False)."""
        failed = {v.family for v in self.violations}
        return {family: family not in failed for family in FAMILIES}

    def witness(self, family: str) -> Violation | None:
        """The violation recorded for a family, if it failed."""
        for violation in self.violations:
            if violation.family == family:
                return violation
        return None

    def __bool__(self):
        """Truthiness follows ``passed``."""
        return self.passed


def _exceeds(value, bound) -> bool:
    return value > bound and not math.isclose(
        value, bound, rel_tol=TOLERANCE, abs_tol=TOLERANCE
    )


def _differs(value, target) -> bool:
    return not math.isclose(value, target, rel_tol=TOLERANCE, abs_tol=TOLERANCE)


def _check_structure(manifest, decisions, schedule):
    if len(decisions.indicators) != manifest.num_levels:
        raise StructuralError(
            f"Decisions carry {len(decisions.indicators)} levels, the manifest "
            f"has {manifest.num_levels}."
        )
    width = decisions.num_chunks
    for name in ("stall_before", "deadline"):
        if len(getattr(decisions, name)) != width:
            raise StructuralError(
                f"Decisions hold {len(getattr(decisions, name))} {name} entries "
                f"for {width} chunks."
            )
    for row in decisions.indicators:
        if len(row) != width:
            raise StructuralError(
                f"Indicator row of length {len(row)} for {width} chunks."
            )
    if decisions.first_chunk < 1 or decisions.last_chunk > manifest.num_chunks:
        raise StructuralError(
            f"Decisions cover chunks {decisions.first_chunk}..{decisions.last_chunk}"
            f" of a {manifest.num_chunks}-chunk manifest."
        )
    if schedule.chunk_duration_s != manifest.chunk_duration_s:
        raise StructuralError(
            f"Schedule chunk duration {schedule.chunk_duration_s}s does not match "
            f"the manifest's {manifest.chunk_duration_s}s."
        )
    for rec in schedule.records:
        if rec.chunk not in decisions.chunks:
            raise StructuralError(
                f"Schedule fetches chunk {rec.chunk} outside the decided window."
            )
        if not 0 <= rec.level < manifest.num_levels:
            raise StructuralError(
                f"Schedule fetches level {rec.level} of chunk {rec.chunk}, the "
                f"manifest has {manifest.num_levels} levels."
            )
        if rec.slot < 1:
            raise StructuralError(
                f"Schedule fetches chunk {rec.chunk} in slot {rec.slot}."
            )


def check_feasibility(manifest, timeline, decisions, schedule) -> FeasibilityReport:
    """Check decisions and their fetch schedule against every constraint family.

    Parameters
    ----------
    manifest : VideoManifest
        The video the decisions were made for.
    timeline : BandwidthTimeline
        Bandwidth the schedule must fit in.
    decisions : DecisionSet
        Levels, stalls and deadlines of the window.
    schedule : FetchSchedule
        Per-slot fetched amounts witnessing the decisions.

    Returns
    -------
    FeasibilityReport
        Pass or fail per family, with the first violating (chunk, level, slot).

    Raises
    ------
    StructuralError
        If the schedule, decisions and manifest disagree in shape.
    """
    _check_structure(manifest, decisions, schedule)
    found = {}

    def flag(family, **kwargs):
        found.setdefault(family, Violation(family, **kwargs))

    length = manifest.chunk_duration_s

    for k, chunk in enumerate(decisions.chunks):
        if not decisions.indicators[0][k]:
            flag("coverage", chunk=chunk, level=0, detail="chunk not fetched")
        for n in range(1, manifest.num_levels):
            if decisions.indicators[n][k] > decisions.indicators[n - 1][k]:
                flag(
                    "monotonicity",
                    chunk=chunk,
                    level=n,
                    detail=f"level {n} set without level {n - 1}",
                )

    previous = 0
    for k, chunk in enumerate(decisions.chunks):
        stall = decisions.stall_before[k]
        if stall < 0 or stall < previous:
            flag("stalls", chunk=chunk, detail=f"stall {stall} after {previous}")
        previous = max(previous, stall)
        expected = decisions.prior_stall_s + (chunk - 1) * length + stall
        if decisions.deadline[k] != expected:
            flag(
                "stalls",
                chunk=chunk,
                slot=decisions.deadline[k],
                detail=f"deadline {decisions.deadline[k]}, stalls imply {expected}",
            )

    for slot, total in sorted(schedule.per_slot().items()):
        if _exceeds(total, timeline.at(slot)):
            flag(
                "bandwidth",
                slot=slot,
                detail=f"{total} fetched, {timeline.at(slot)} available",
            )
    for rec in schedule.records:
        if rec.amount < 0:
            flag(
                "bandwidth",
                chunk=rec.chunk,
                level=rec.level,
                slot=rec.slot,
                detail=f"negative amount {rec.amount}",
            )

    deadlines = dict(zip(decisions.chunks, decisions.deadline, strict=True))
    for rec in sorted(schedule.records, key=lambda r: (r.slot, r.chunk, r.level)):
        if rec.amount > 0 and rec.slot > deadlines[rec.chunk]:
            flag(
                "deadline",
                chunk=rec.chunk,
                level=rec.level,
                slot=rec.slot,
                detail=f"fetched after deadline {deadlines[rec.chunk]}",
            )

    occupancy = schedule.buffer_occupancy(deadlines)
    starts = schedule.first_slots()
    for slot, seconds in occupancy.items():
        if _exceeds(seconds, schedule.buffer_cap_s):
            started = [c for c, s in starts.items() if s <= slot]
            flag(
                "buffer",
                chunk=max(started) if started else None,
                slot=int(slot),
                detail=f"{seconds}s buffered, cap {schedule.buffer_cap_s}s",
            )
            break

    fetched = {}
    for rec in schedule.records:
        key = (rec.chunk, rec.level)
        fetched[key] = fetched.get(key, 0) + rec.amount
    for k, chunk in enumerate(decisions.chunks):
        for n in range(manifest.num_levels):
            owed = decisions.indicators[n][k] * manifest.increment(chunk, n)
            got = fetched.get((chunk, n), 0)
            if _differs(got, owed):
                flag(
                    "completeness",
                    chunk=chunk,
                    level=n,
                    detail=f"{got} fetched of {owed}",
                )

    return FeasibilityReport(tuple(found[f] for f in FAMILIES if f in found))
