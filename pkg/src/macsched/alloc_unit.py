"""Optimal unit-delay power allocation for a distributed multiple-access link.

Each transmitter knows only its own rate demand and fading state, yet the
joint power vector must keep every realized rate tuple decodable.  The
allocator stacks each user's (rate, gain) pairs into a cumulative
"pseudo-CDF" weighted by probability over power gain, aligns the two
stacks, and walks the merged level set assigning received powers so that
the per-level received sum is tight.  The resulting average sum power
meets the information-theoretic lower bound exactly.

Received powers (gain * transmit power) are the natural currency here:
they are invariant under channel renormalization, so fixed fading, L-user
and dynamic-fading variants all share the same recursion.
"""

from __future__ import annotations

import bisect
import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .dist import DiscreteLaw, Numeric, RateFadingLaw, as_fraction

_F0 = Fraction(0)

# Re-derivations of an already-assigned pair must agree to this relative
# tolerance; larger deviations mean the level ordering is corrupt.
CONSISTENCY_TOL = 1e-9
NEGATIVE_TOL = 1e-9
OUTAGE_TOL = 1e-9


class AllocationError(RuntimeError):
    """Internal inconsistency while assigning powers (grid corruption)."""


def pw2(x) -> float:
    """Received sum power needed for total rate x: 2^(2x) - 1."""
    return 2.0 ** (2.0 * float(x)) - 1.0


@dataclass(frozen=True)
class StackEntry:
    """One (rate, gain) pair in a user's pseudo-CDF stack.

    mass = prob(rate) * prob(gain) / gain; the pair owns the cumulative
    interval (bottom, top].  prob is the plain probability of the pair.
    """

    rate: Fraction
    gain: Fraction
    mass: Fraction
    prob: Fraction
    bottom: Fraction
    top: Fraction


def _build_stack(law: RateFadingLaw) -> tuple[StackEntry, ...]:
    c = _F0
    entries = []
    for b, pb in law.rate_law.atoms:
        for h, ph in law.fading_law.atoms:
            m = pb * ph / h
            entries.append(StackEntry(b, h, m, pb * ph, c, c + m))
            c += m
    return tuple(entries)


@dataclass(frozen=True)
class GammaGrid:
    """Aligned pseudo-CDF pair and its merged ascending level set.

    Internally user 0 is the shorter stack (offset upward by d0 so both
    stacks share a top); ``swapped`` records whether the input users were
    exchanged to arrange that.  Levels always start at 0.
    """

    laws: tuple[RateFadingLaw, RateFadingLaw]
    stacks: tuple[tuple[StackEntry, ...], tuple[StackEntry, ...]]
    levels: tuple[Fraction, ...]
    d0: Fraction
    swapped: bool
    l_star: int | None
    _positive: tuple[tuple[StackEntry, ...], tuple[StackEntry, ...]] = field(
        init=False, repr=False, compare=False
    )
    _tops: tuple[list, list] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        pos = tuple(tuple(e for e in st if e.mass > 0) for st in self.stacks)
        object.__setattr__(self, "_positive", pos)
        object.__setattr__(self, "_tops", tuple([e.top for e in p] for p in pos))

    def offset(self, user: int) -> Fraction:
        return self.d0 if user == 0 else _F0

    @property
    def height(self) -> Fraction:
        return self.levels[-1]

    def gap(self, l: int) -> Fraction:
        return self.levels[l] - (self.levels[l - 1] if l else _F0)

    def pair_at_value(self, gamma: Fraction, user: int) -> StackEntry | None:
        """Positive-mass pair whose offset interval (bottom, top] holds gamma."""
        g = gamma - self.offset(user)
        if g <= 0:
            return None
        idx = bisect.bisect_left(self._tops[user], g)
        if idx >= len(self._tops[user]):
            raise AllocationError(f"level {gamma} above user {user} stack")
        return self._positive[user][idx]

    def pair_at(self, l: int, user: int) -> StackEntry | None:
        return self.pair_at_value(self.levels[l], user)

    def rate_at(self, l: int, user: int) -> Fraction:
        e = self.pair_at(l, user)
        return e.rate if e is not None else _F0

    def zero_mass_entries(self, user: int) -> tuple[StackEntry, ...]:
        return tuple(e for e in self.stacks[user] if e.mass == 0)

    @property
    def alpha_levels(self) -> tuple[Fraction, ...]:
        """Raw cumulative levels of the shorter stack, starting at 0."""
        return (_F0,) + tuple(e.top for e in self.stacks[0])

    @property
    def beta_levels(self) -> tuple[Fraction, ...]:
        return (_F0,) + tuple(e.top for e in self.stacks[1])


def build_pseudo_cdf(law1: RateFadingLaw, law2: RateFadingLaw) -> GammaGrid:
    """Stack both users' pairs and merge their cumulative levels.

    The shorter stack is lifted by d0 = height difference so both reach
    the common top; users are swapped internally when needed so the
    offset user is always index 0.
    """
    laws = (law1, law2)
    stacks = tuple(_build_stack(law) for law in laws)
    heights = tuple(st[-1].top if st else _F0 for st in stacks)
    swapped = heights[0] > heights[1]
    if swapped:
        laws = (law2, law1)
        stacks = (stacks[1], stacks[0])
        heights = (heights[1], heights[0])
    d0 = heights[1] - heights[0]

    level_set = {_F0, d0}
    level_set.update(d0 + e.top for e in stacks[0] if e.mass > 0)
    level_set.update(e.top for e in stacks[1] if e.mass > 0)
    levels = tuple(sorted(level_set))

    grid = GammaGrid(laws, stacks, levels, d0, swapped, None)
    l_star = None
    for l in range(len(levels)):
        if grid.rate_at(l, 0) > 0 or grid.rate_at(l, 1) > 0:
            l_star = l
            break
    return GammaGrid(laws, stacks, levels, d0, swapped, l_star)


@dataclass(frozen=True)
class PowerTable:
    """Per-user map (rate, fading power gain) -> transmit power.

    For fixed fading the gain key is the user's channel power gain, so
    gain * power is always the received power.
    """

    entries: tuple[dict, ...]
    fixed_gains: tuple[Fraction, ...] | None = None

    def power(self, user: int, rate: Fraction, gain: Fraction) -> float:
        return self.entries[user][(rate, gain)]

    def received(self, user: int, rate: Fraction, gain: Fraction) -> float:
        return float(gain) * self.entries[user][(rate, gain)]

    def has(self, user: int, rate: Fraction, gain: Fraction) -> bool:
        return (rate, gain) in self.entries[user]

    def user_points(self, user: int) -> tuple[tuple[Fraction, Fraction, float], ...]:
        """Sorted (rate, gain, power) triples for one user."""
        return tuple(
            (r, g, p) for (r, g), p in sorted(self.entries[user].items())
        )


@dataclass(frozen=True)
class LevelTraceRow:
    level: Fraction
    gap: Fraction
    rates: tuple[Fraction, ...]
    gains: tuple[Fraction, ...]
    received_sum: float


@dataclass(frozen=True)
class AllocationReport:
    """Allocation output: power tables plus optimality bookkeeping."""

    table: PowerTable
    laws: tuple[RateFadingLaw, ...]
    achieved: float
    lower_bound: float
    d0: Fraction
    swapped: bool
    trace: tuple[LevelTraceRow, ...]
    grid: GammaGrid | None = None

    def user_points(self, user: int):
        return self.table.user_points(user)

    def to_json(self) -> dict:
        return {
            "achieved_avg_sum_power": self.achieved,
            "lower_bound": self.lower_bound,
            "d0": float(self.d0),
            "d0_exact": str(self.d0),
            "swapped": self.swapped,
            "users": [
                {
                    "entries": [
                        {"rate": float(r), "gain": float(g), "power": p}
                        for r, g, p in self.user_points(u)
                    ]
                }
                for u in range(len(self.laws))
            ],
            "levels": [
                {
                    "level": float(row.level),
                    "level_exact": str(row.level),
                    "gap": float(row.gap),
                    "rates": [float(r) for r in row.rates],
                    "gains": [float(g) for g in row.gains],
                    "received_sum": row.received_sum,
                }
                for row in self.trace
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


class _Assignments:
    """Received-power assignments with first-wins consistency checking."""

    def __init__(self, n_users: int):
        self.received: list[dict] = [dict() for _ in range(n_users)]

    def assign(self, user: int, key, value: float, context: str) -> None:
        if value < 0.0:
            if value < -NEGATIVE_TOL * max(1.0, abs(value)):
                raise AllocationError(
                    f"negative received power {value} for user {user} {key} at {context}"
                )
            value = 0.0
        old = self.received[user].get(key)
        if old is None:
            self.received[user][key] = value
        elif abs(old - value) > CONSISTENCY_TOL * max(1.0, abs(old), abs(value)):
            raise AllocationError(
                f"inconsistent re-derivation for user {user} {key} at {context}: "
                f"{old} vs {value}"
            )

    def get(self, user: int, key) -> float:
        return self.received[user][key]


def _entry_key(e: StackEntry):
    return (e.rate, e.gain)


def allocate_dynamic(grid: GammaGrid) -> AllocationReport:
    """Iterative level-by-level allocation on a pseudo-CDF grid.

    Walking the levels in ascending order, user 2's pair is set from user
    1's previous level so the cross received sum is tight, then user 1's
    pair is set so the current level's received sum is tight.  The first
    level with a positive rate starts from the dominant-face corner that
    floors the weaker-received user.
    """
    acc = _Assignments(2)
    trace = []
    ls = grid.l_star
    n_levels = len(grid.levels)

    for l in range(n_levels):
        pair1 = grid.pair_at(l, 0)
        pair2 = grid.pair_at(l, 1)
        b1 = pair1.rate if pair1 is not None else _F0
        b2 = pair2.rate if pair2 is not None else _F0
        ctx = f"level {grid.levels[l]}"

        if ls is None or l < ls:
            r1 = r2 = 0.0
        elif l == ls:
            total = pw2(b1 + b2)
            if b1 == 0:
                r1, r2 = 0.0, total
            elif b2 == 0:
                r1, r2 = total, 0.0
            elif pair2.gain <= pair1.gain:
                r2 = pw2(b2)
                r1 = total - r2
            else:
                r1 = pw2(b1)
                r2 = total - r1
        else:
            prev1 = grid.pair_at(l - 1, 0)
            prev_b1 = prev1.rate if prev1 is not None else _F0
            prev_recv1 = acc.get(0, _entry_key(prev1)) if prev1 is not None else 0.0
            r2 = pw2(prev_b1 + b2) - prev_recv1
            r1 = pw2(b1 + b2) - r2

        for user, pair, r in ((0, pair1, r1), (1, pair2, r2)):
            if pair is not None:
                acc.assign(user, _entry_key(pair), r, ctx)
            elif abs(r) > NEGATIVE_TOL:
                raise AllocationError(f"nonzero power {r} for idle user {user} at {ctx}")
        trace.append(
            LevelTraceRow(
                grid.levels[l],
                grid.gap(l),
                (b1, b2),
                (pair1.gain if pair1 else _F0, pair2.gain if pair2 else _F0),
                r1 + r2,
            )
        )

    # Zero-probability atoms: continue the recursion at their (zero-gap)
    # level against the other user's block there, which extends each
    # power law past its true support.
    for user in (0, 1):
        other = 1 - user
        for entry in grid.zero_mass_entries(user):
            gamma = entry.bottom + grid.offset(user)
            oe = grid.pair_at_value(gamma, other) if gamma > 0 else None
            ob = oe.rate if oe is not None else _F0
            orecv = acc.get(other, _entry_key(oe)) if oe is not None else 0.0
            acc.assign(user, _entry_key(entry), pw2(entry.rate + ob) - orecv, "dummy")

    received = acc.received
    if grid.swapped:
        received = [received[1], received[0]]
    laws = (grid.laws[1], grid.laws[0]) if grid.swapped else grid.laws
    entries = tuple(
        {key: recv / float(key[1]) for key, recv in user_recv.items()}
        for user_recv in received
    )
    table = PowerTable(entries)
    achieved = average_sum_power(table, laws)
    return AllocationReport(
        table=table,
        laws=laws,
        achieved=achieved,
        lower_bound=lower_bound(grid),
        d0=grid.d0,
        swapped=grid.swapped,
        trace=tuple(trace),
        grid=grid,
    )


def lower_bound(grid: GammaGrid) -> float:
    """Converse value: sum over levels of [2^(2(b1+b2)) - 1] * gap."""
    total = 0.0
    for l in range(len(grid.levels)):
        gap = grid.gap(l)
        if gap == 0:
            continue
        total += pw2(grid.rate_at(l, 0) + grid.rate_at(l, 1)) * float(gap)
    return total


def _swap_report_users(report: AllocationReport) -> AllocationReport:
    table = PowerTable(
        (report.table.entries[1], report.table.entries[0]),
        None
        if report.table.fixed_gains is None
        else (report.table.fixed_gains[1], report.table.fixed_gains[0]),
    )
    trace = tuple(
        LevelTraceRow(r.level, r.gap, (r.rates[1], r.rates[0]), (r.gains[1], r.gains[0]), r.received_sum)
        for r in report.trace
    )
    return AllocationReport(
        table=table,
        laws=(report.laws[1], report.laws[0]),
        achieved=report.achieved,
        lower_bound=report.lower_bound,
        d0=report.d0,
        swapped=not report.swapped,
        trace=trace,
        grid=report.grid,
    )


def allocate_fixed(
    rate_law1: DiscreteLaw,
    rate_law2: DiscreteLaw,
    gain1: Numeric,
    gain2: Numeric,
) -> AllocationReport:
    """Fixed-fading two-user allocation with channel power gains (gain1, gain2).

    Reduces to the dynamic allocator on singleton fading laws with gains
    (gain1/gain2, 1), then rescales transmit powers by 1/gain2 back to the
    original channel.  Users are swapped internally when gain1 < gain2.
    """
    a1, a2 = as_fraction(gain1), as_fraction(gain2)
    if a1 <= 0 or a2 <= 0:
        raise AllocationError("channel power gains must be positive")
    if a1 < a2:
        return _swap_report_users(allocate_fixed(rate_law2, rate_law1, gain2, gain1))

    ratio = a1 / a2
    grid = build_pseudo_cdf(
        RateFadingLaw.fixed(rate_law1, ratio), RateFadingLaw.fixed(rate_law2, 1)
    )
    inner = allocate_dynamic(grid)

    scale = 1.0 / float(a2)
    gains = (a1, a2)
    inner_gains = (ratio, Fraction(1))
    entries = tuple(
        {(rate, gains[u]): p * scale for (rate, g), p in inner.table.entries[u].items()}
        for u in range(2)
    )
    for u in range(2):
        for (rate, g) in inner.table.entries[u]:
            if g != inner_gains[u]:
                raise AllocationError("unexpected gain key in fixed-fading reduction")
    laws = tuple(RateFadingLaw.fixed(law, gains[u]) for u, law in enumerate((rate_law1, rate_law2)))
    trace = tuple(
        LevelTraceRow(r.level, r.gap, r.rates, gains, r.received_sum) for r in inner.trace
    )
    return AllocationReport(
        table=PowerTable(entries, fixed_gains=gains),
        laws=laws,
        achieved=inner.achieved * scale,
        lower_bound=inner.lower_bound * scale,
        d0=grid.d0,
        swapped=False,
        trace=trace,
        grid=grid,
    )


@dataclass(frozen=True)
class _PsiEntry:
    rate: Fraction
    prob: Fraction  # original probability (zero for the synthetic base atom)
    bottom: Fraction
    top: Fraction


def allocate_l_user(
    rate_laws: Sequence[DiscreteLaw], gains: Sequence[Numeric]
) -> AllocationReport:
    """Fixed-fading allocation for L >= 2 users, gains sorted descending.

    Each user's rate CDF is scaled by gain_L/gain_i with the removed mass
    parked at rate zero, which aligns all L stacks to height one.  Powers
    are assigned per level in descending user order so that every prefix
    of previous-level users plus suffix of current-level users sees a
    tight received sum.
    """
    gs = [as_fraction(g) for g in gains]
    if len(rate_laws) != len(gs) or len(gs) < 2:
        raise AllocationError("need matching rate laws and gains for L >= 2 users")
    if any(g <= 0 for g in gs):
        raise AllocationError("channel power gains must be positive")
    if any(gs[i] < gs[i + 1] for i in range(len(gs) - 1)):
        raise AllocationError("gains must be sorted in descending order")
    L = len(gs)
    a_last = gs[-1]

    stacks: list[list[_PsiEntry]] = []
    for law, g in zip(rate_laws, gs):
        scale = a_last / g
        c = _F0
        entries = []
        if scale != 1:
            entries.append(_PsiEntry(_F0, _F0, c, 1 - scale))
            c = 1 - scale
        for b, pb in law.atoms:
            if pb == 0:
                continue
            m = pb * scale
            entries.append(_PsiEntry(b, pb, c, c + m))
            c += m
        stacks.append(entries)

    level_set = {_F0}
    for st in stacks:
        level_set.update(e.top for e in st)
    levels = sorted(level_set)
    tops = [[e.top for e in st] for st in stacks]

    def pair_at(gamma: Fraction, user: int) -> _PsiEntry | None:
        if gamma <= 0:
            return None
        idx = bisect.bisect_left(tops[user], gamma)
        if idx >= len(tops[user]):
            raise AllocationError(f"level {gamma} above user {user} stack")
        return stacks[user][idx]

    def rates_at(gamma: Fraction) -> list[Fraction]:
        return [
            (e.rate if (e := pair_at(gamma, u)) is not None else _F0) for u in range(L)
        ]

    l_star = None
    for l, gamma in enumerate(levels):
        if any(r > 0 for r in rates_at(gamma)):
            l_star = l
            break

    acc = _Assignments(L)
    trace = []
    lb_psi = 0.0
    prev_gamma = _F0
    for l, gamma in enumerate(levels):
        rates = rates_at(gamma)
        ctx = f"level {gamma}"
        if l_star is None or l < l_star:
            recvs = [0.0] * L
        elif l == l_star:
            # Corner of the dominant face: user L at its single-user
            # floor, then each stronger user picks up the increment.
            recvs = []
            for i in range(L):
                t_i = sum(rates[i:], _F0)
                t_next = sum(rates[i + 1 :], _F0)
                recvs.append(pw2(t_i) - pw2(t_next))
        else:
            prev_rates = rates_at(levels[l - 1])
            prev_recv = [
                acc.get(u, e.rate) if (e := pair_at(levels[l - 1], u)) is not None else 0.0
                for u in range(L)
            ]
            recvs = [0.0] * L
            for i in reversed(range(L)):
                target = pw2(sum(prev_rates[:i], _F0) + sum(rates[i:], _F0))
                recvs[i] = target - sum(prev_recv[:i]) - sum(recvs[i + 1 :])
        for u in range(L):
            e = pair_at(gamma, u)
            if e is not None:
                acc.assign(u, e.rate, recvs[u], ctx)
            elif abs(recvs[u]) > NEGATIVE_TOL:
                raise AllocationError(f"nonzero power for idle user {u} at {ctx}")
        lb_psi += pw2(sum(rates, _F0)) * float(gamma - prev_gamma)
        prev_gamma = gamma
        trace.append(
            LevelTraceRow(gamma, grid_gap := gamma - (levels[l - 1] if l else _F0),
                          tuple(rates), tuple(gs), sum(recvs))
        )

    entries = tuple(
        {(rate, gs[u]): recv / float(gs[u]) for rate, recv in acc.received[u].items()}
        for u in range(L)
    )
    laws = tuple(RateFadingLaw.fixed(law, g) for law, g in zip(rate_laws, gs))
    table = PowerTable(entries, fixed_gains=tuple(gs))
    achieved = average_sum_power(table, laws)
    return AllocationReport(
        table=table,
        laws=laws,
        achieved=achieved,
        lower_bound=lb_psi / float(a_last),
        d0=_F0,
        swapped=False,
        trace=tuple(trace),
        grid=None,
    )


@dataclass(frozen=True)
class OutageViolation:
    pairs: tuple[tuple[Fraction, Fraction], ...]
    subset: tuple[int, ...]
    received: float
    required: float


@dataclass(frozen=True)
class OutageAudit:
    ok: bool
    checked: int
    violation: OutageViolation | None = None
    missing: tuple[tuple[int, Fraction, Fraction], ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def verify_outage_free(
    table: PowerTable, laws: Sequence[RateFadingLaw], tol: float = OUTAGE_TOL
) -> OutageAudit:
    """Exhaustively check every cross product of support pairs.

    For each realized tuple, every nonempty user subset J must satisfy
    sum_J gain*power >= 2^(2 sum_J rates) - 1.  Missing table entries are
    reported separately from genuine violations.
    """
    L = len(laws)
    supports = [law.support_pairs() for law in laws]
    missing = tuple(
        (u, b, h)
        for u in range(L)
        for (b, h, _) in supports[u]
        if not table.has(u, b, h)
    )
    if missing:
        return OutageAudit(ok=False, checked=0, missing=missing)

    subsets = [
        tuple(u for u in range(L) if mask & (1 << u))
        for mask in range(1, 1 << L)
    ]
    checked = 0
    for combo in itertools.product(*supports):
        recv = [float(h) * table.power(u, b, h) for u, (b, h, _) in enumerate(combo)]
        for subset in subsets:
            lhs = sum(recv[u] for u in subset)
            rhs = pw2(sum(combo[u][0] for u in subset))
            checked += 1
            if lhs < rhs - tol * max(1.0, rhs):
                return OutageAudit(
                    ok=False,
                    checked=checked,
                    violation=OutageViolation(
                        pairs=tuple((b, h) for b, h, _ in combo),
                        subset=subset,
                        received=lhs,
                        required=rhs,
                    ),
                )
    return OutageAudit(ok=True, checked=checked)


def average_sum_power(table: PowerTable, laws: Sequence[RateFadingLaw]) -> float:
    """Expected total transmit power under the product laws."""
    total = 0.0
    for u, law in enumerate(laws):
        for b, h, prob in law.support_pairs():
            try:
                p = table.power(u, b, h)
            except KeyError:
                raise AllocationError(f"no power assigned for user {u} pair ({b}, {h})")
            total += float(prob) * p
    return total


def unit_delay_min_power(
    rate_law1: DiscreteLaw,
    rate_law2: DiscreteLaw,
    gain1: Numeric,
    gain2: Numeric,
) -> float:
    """Closed-form minimum average sum power for fixed fading, D_max = 1.

    Direct quantile-segment evaluation of the two-integral formula: the
    weak user alone below quantile 1 - a2/a1, both users' inverse CDFs
    paired above it.  Kept independent of the level-grid allocator so it
    can serve as an oracle for it.
    """
    a1, a2 = as_fraction(gain1), as_fraction(gain2)
    if a1 <= 0 or a2 <= 0:
        raise AllocationError("channel power gains must be positive")
    if a1 < a2:
        return unit_delay_min_power(rate_law2, rate_law1, gain2, gain1)
    alpha = a2 / a1
    abar = 1 - alpha
    inv_a2 = 1.0 / float(a2)

    total = 0.0
    # Weak-user band [0, 1 - alpha]: single-user power at its own quantiles.
    cuts = sorted({abar} | {c for c in rate_law2.cumulative if 0 < c < abar})
    x0 = _F0
    for x1 in cuts:
        if x1 > x0:
            total += pw2(rate_law2.inverse_cdf(x1)) * inv_a2 * float(x1 - x0)
        x0 = x1
    # Paired band: v in (0, alpha], rates b2(v + abar) and b1(v / alpha).
    cuts = {alpha}
    cuts.update(c - abar for c in rate_law2.cumulative if abar < c < 1)
    cuts.update(alpha * c for c in rate_law1.cumulative if 0 < c < 1)
    v0 = _F0
    for v1 in sorted(cuts):
        if v1 > v0:
            b2 = rate_law2.inverse_cdf(v1 + abar)
            b1 = rate_law1.inverse_cdf(v1 / alpha)
            total += pw2(b1 + b2) * inv_a2 * float(v1 - v0)
        v0 = v1
    return total
