"""Single-user delay-constrained scheduling.

The queue state is the backlog split by remaining slack: entry d (from 0)
must leave within d+1 more slots, and each new packet enters the last
position.  Service inside a slot is earliest-deadline-first; any other
order can strand bits whose deadline is up.

The optimal scheduler for a convex rate-power curve is found by
discounted value iteration on the Bellman recursion
V(s) = min_a { P(a) + gamma * E V(next(s, a, A)) } with the action range
[due-now, total backlog] quantized to multiples of the step size.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .dist import DiscreteLaw, QueueState

_F0 = Fraction(0)
_EPS = 1e-9


class SchedulingError(ValueError):
    """Infeasible action or malformed scheduler state."""


class VIAError(RuntimeError):
    """Value iteration failed to converge."""


class StationaryError(RuntimeError):
    """Policy chain has no unique recurrent class."""


def step_state(state, action, arrival):
    """Serve `action` rate earliest-deadline-first and shift one slot.

    The due-now entry must be covered by the action and the action cannot
    exceed the total backlog.  Returns the state at the next slot start,
    with `arrival` in the last position.
    """
    if isinstance(state, QueueState):
        entries = state.entries
        wrap = True
    else:
        entries = tuple(state)
        wrap = False
    total = sum(entries)
    slack = _EPS * max(1.0, float(total))
    if float(action) < float(entries[0]) - slack:
        raise SchedulingError(f"action {action} below due-now backlog {entries[0]}")
    if float(action) > float(total) + slack:
        raise SchedulingError(f"action {action} exceeds backlog {total}")
    rem = action
    served = []
    for e in entries:
        s = min(e, rem)
        if s < 0:
            s = 0
        rem = rem - s
        served.append(e - s)
    out = tuple(served[1:]) + (arrival,)
    return QueueState(out) if wrap else out


@dataclass(frozen=True)
class VIConfig:
    """Value-iteration knobs.

    gamma sits slightly below one so the discounted solution tracks the
    average-cost optimum; delta is the action quantum (arrival values
    must be multiples of it).  Ties within tie_tol pick the smallest
    action, which keeps golden-policy comparisons deterministic.
    """

    gamma: float = 0.99
    delta: Fraction = Fraction(1)
    tol: float = 1e-9
    max_iter: int = 200_000
    tie_tol: float = 1e-9

    def __post_init__(self) -> None:
        if not 0 < self.gamma < 1:
            raise SchedulingError(f"discount {self.gamma} outside (0, 1)")
        d = Fraction(self.delta)
        if d <= 0:
            raise SchedulingError("step size must be positive")
        object.__setattr__(self, "delta", d)


@dataclass(frozen=True)
class SchedulerPolicy:
    """Deterministic stationary map from queue state to scheduled rate."""

    dmax: int
    delta: Fraction
    arrival_support: tuple[Fraction, ...]
    actions: dict

    def rate(self, state) -> Fraction:
        key = state.entries if isinstance(state, QueueState) else tuple(state)
        try:
            return self.actions[key]
        except KeyError:
            raise SchedulingError(f"state {key} not on the policy grid")

    def states(self):
        return self.actions.keys()

    def as_matrix(self) -> list[list[Fraction]]:
        """Rates laid out with rows = due-now backlog, cols = new arrival."""
        if self.dmax != 2:
            raise SchedulingError("matrix layout is defined for dmax == 2")
        cap = max(self.arrival_support)
        rows = []
        s0 = _F0
        while s0 <= cap:
            rows.append([self.actions[(s0, a)] for a in self.arrival_support])
            s0 += self.delta
        return rows

    def render_matrix(self) -> str:
        rows = self.as_matrix()
        cols = " ".join(f"{float(a):>6g}" for a in self.arrival_support)
        lines = [f"{'':>6} {cols}"]
        s0 = _F0
        for row in rows:
            lines.append(
                f"{float(s0):>6g} " + " ".join(f"{float(r):>6g}" for r in row)
            )
            s0 += self.delta
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {
            "dmax": self.dmax,
            "delta": str(self.delta),
            "arrivals": [str(a) for a in self.arrival_support],
            "entries": sorted(
                ([[str(e) for e in s], str(r)] for s, r in self.actions.items()),
                key=lambda kv: kv[0],
            ),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def policy_from_matrix(rows, arrivals, delta=1) -> SchedulerPolicy:
    """Build a dmax=2 policy from the row/column matrix layout."""
    d = Fraction(delta)
    support = tuple(Fraction(a) for a in arrivals)
    actions = {}
    for i, row in enumerate(rows):
        for a, r in zip(support, row):
            actions[(i * d, a)] = Fraction(r)
    return SchedulerPolicy(2, d, support, actions)


def _arrival_units(arrival_law: DiscreteLaw, delta: Fraction) -> list[tuple[int, Fraction]]:
    units = []
    for a, p in arrival_law.support():
        q = a / delta
        if q.denominator != 1:
            raise SchedulingError(f"arrival {a} is not a multiple of step {delta}")
        units.append((int(q), p))
    return units


def _enumerate_states(dmax: int, cap_units: int, support_units: Sequence[int]):
    prefix_grid = itertools.product(range(cap_units + 1), repeat=dmax - 1)
    return [pre + (a,) for pre in prefix_grid for a in support_units]


def _serve(state_units: tuple[int, ...], action_units: int) -> tuple[int, ...]:
    rem = action_units
    out = []
    for e in state_units:
        s = min(e, rem)
        rem -= s
        out.append(e - s)
    return tuple(out[1:])


def value_iteration(
    power_curve: Callable[[Fraction], float],
    arrival_law: DiscreteLaw,
    dmax: int,
    cfg: VIConfig = VIConfig(),
    on_sweep: Callable[[np.ndarray], None] | None = None,
) -> SchedulerPolicy:
    """Optimal scheduler for a convex rate-power curve.

    Starts from a constant upper bound so the value function decreases
    pointwise every sweep; stops at sup-norm tolerance and extracts the
    greedy policy with smallest-action tie-breaking.
    """
    if dmax < 1:
        raise SchedulingError("dmax must be >= 1")
    delta = cfg.delta
    support = _arrival_units(arrival_law, delta)
    support_units = [u for u, _ in support]
    weights = np.array([float(p) for _, p in support])
    cap_units = max(support_units)
    max_total = cap_units * dmax

    power = np.array([float(power_curve(k * delta)) for k in range(max_total + 1)])
    if abs(power[0]) > _EPS:
        raise SchedulingError(f"power at rate 0 must be 0, got {power[0]}")
    if np.any(np.diff(power) < -_EPS * np.maximum(1.0, power[1:])):
        raise SchedulingError("power curve must be nondecreasing in rate")

    states = _enumerate_states(dmax, cap_units, support_units)
    index = {s: i for i, s in enumerate(states)}
    n_states = len(states)
    arr_pos = {a: j for j, a in enumerate(support_units)}

    starts = [0]
    costs = []
    acts = []
    nxt = []
    for s in states:
        lo, hi = s[0], sum(s)
        for a in range(lo, hi + 1):
            prefix = _serve(s, a)
            costs.append(power[a])
            acts.append(a)
            nxt.append([index[prefix + (au,)] for au in support_units])
        starts.append(len(costs))
    costs = np.array(costs)
    acts_arr = np.array(acts)
    nxt = np.array(nxt)
    starts_arr = np.array(starts[:-1])

    v0 = power[max_total] / (1.0 - cfg.gamma)
    V = np.full(n_states, v0)
    residual = np.inf
    for _ in range(cfg.max_iter):
        q = costs + cfg.gamma * (V[nxt] @ weights)
        V_new = np.minimum.reduceat(q, starts_arr)
        residual = float(np.abs(V_new - V).max())
        V = V_new
        if on_sweep is not None:
            on_sweep(V.copy())
        if residual < cfg.tol:
            break
    else:
        raise VIAError(f"no convergence after {cfg.max_iter} sweeps, residual {residual}")

    q = costs + cfg.gamma * (V[nxt] @ weights)
    actions = {}
    for i, s in enumerate(states):
        blk = slice(starts[i], starts[i + 1])
        qb = q[blk]
        m = qb.min()
        j = int(np.argmax(qb <= m + cfg.tie_tol * max(1.0, abs(m))))
        a_units = int(acts_arr[blk][j])
        key = tuple(k * delta for k in s)
        actions[key] = a_units * delta
    support_vals = tuple(u * delta for u in support_units)
    return SchedulerPolicy(dmax, delta, support_vals, actions)


def identity_policy(arrival_law: DiscreteLaw, dmax: int, delta=Fraction(1)) -> SchedulerPolicy:
    """Transmit the full backlog every slot."""
    d = Fraction(delta)
    support = _arrival_units(arrival_law, d)
    support_units = [u for u, _ in support]
    cap = max(support_units)
    actions = {}
    for s in _enumerate_states(dmax, cap, support_units):
        key = tuple(k * d for k in s)
        actions[key] = sum(key)
    return SchedulerPolicy(dmax, d, tuple(u * d for u in support_units), actions)


def _closed_classes(adj: dict) -> list[set]:
    """Strongly connected components with no outgoing edges (Kosaraju)."""
    order = []
    seen = set()
    for root in adj:
        if root in seen:
            continue
        stack = [(root, iter(adj[root]))]
        seen.add(root)
        while stack:
            node, it = stack[-1]
            advanced = False
            for nb in it:
                if nb not in seen:
                    seen.add(nb)
                    stack.append((nb, iter(adj[nb])))
                    advanced = True
                    break
            if not advanced:
                order.append(node)
                stack.pop()
    radj: dict = {s: [] for s in adj}
    for s, nbs in adj.items():
        for nb in nbs:
            radj[nb].append(s)
    comp = {}
    comps = []
    for root in reversed(order):
        if root in comp:
            continue
        cid = len(comps)
        members = set()
        stack = [root]
        comp[root] = cid
        while stack:
            node = stack.pop()
            members.add(node)
            for nb in radj[node]:
                if nb not in comp:
                    comp[nb] = cid
                    stack.append(nb)
        comps.append(members)
    closed = []
    for members in comps:
        if all(nb in members for s in members for nb in adj[s]):
            closed.append(members)
    return closed


def stationary_rate_law(policy: SchedulerPolicy, arrival_law: DiscreteLaw) -> DiscreteLaw:
    """Marginal law of the scheduled rate under the policy's state chain.

    The chain over slot-start states is solved exactly with rational
    arithmetic on its unique recurrent class; a second closed class is an
    error.
    """
    support = arrival_law.support()
    starts = [
        tuple([_F0] * (policy.dmax - 1)) + (a,) for a, _ in support
    ]
    adj: dict = {}
    frontier = list(starts)
    while frontier:
        s = frontier.pop()
        if s in adj:
            continue
        rate = policy.rate(s)
        succ = []
        for a, _ in support:
            nxt = step_state(s, rate, a)
            succ.append(nxt)
            if nxt not in adj:
                frontier.append(nxt)
        adj[s] = succ
    closed = _closed_classes(adj)
    if len(closed) != 1:
        raise StationaryError(f"{len(closed)} recurrent classes; expected exactly one")
    states = sorted(closed[0])
    idx = {s: i for i, s in enumerate(states)}
    n = len(states)

    # pi (P - I) = 0 with sum(pi) = 1, solved exactly.
    cols: list[list[Fraction]] = [[_F0] * n for _ in range(n)]
    for s in states:
        i = idx[s]
        rate = policy.rate(s)
        for a, p in support:
            j = idx[step_state(s, rate, a)]
            cols[j][i] += p
    A = [[cols[j][i] - (1 if i == j else 0) for i in range(n)] for j in range(n)]
    A[n - 1] = [Fraction(1)] * n
    b = [_F0] * (n - 1) + [Fraction(1)]
    pi = _solve_exact(A, b)
    if any(p < 0 for p in pi):
        raise StationaryError("negative stationary mass; chain is malformed")

    masses: dict = {}
    for s in states:
        r = policy.rate(s)
        masses[r] = masses.get(r, _F0) + pi[idx[s]]
    atoms = tuple(sorted((r, m) for r, m in masses.items()))
    return DiscreteLaw(atoms)


def _solve_exact(A: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    n = len(A)
    M = [row[:] + [b[i]] for i, row in enumerate(A)]
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col] != 0), None)
        if piv is None:
            raise StationaryError("singular stationary system")
        M[col], M[piv] = M[piv], M[col]
        inv = 1 / M[col][col]
        M[col] = [x * inv for x in M[col]]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [x - f * y for x, y in zip(M[r], M[col])]
    return [M[r][n] for r in range(n)]


def robust_rate(state):
    """Largest running average of the most urgent entries.

    Deadline-safe for any arrival law: the d = 1 term already covers the
    due-now backlog.
    """
    entries = state.entries if isinstance(state, QueueState) else tuple(state)
    best = None
    acc = 0
    for d, e in enumerate(entries, start=1):
        acc = acc + e
        avg = acc / d if isinstance(acc, (int, Fraction)) else acc / float(d)
        best = avg if best is None or avg > best else best
    return best


@dataclass(frozen=True)
class DDState:
    """Smoothed estimate of the power curve's slope at the operating point."""

    derivative: float
    beta: float = 0.9

    def __post_init__(self) -> None:
        if self.derivative < 0:
            raise SchedulingError("derivative estimate must be nonnegative")
        if not 0 < self.beta <= 1:
            raise SchedulingError("smoothing beta must lie in (0, 1]")


def dd_rate(state, gain, dd: DDState, power_curve) -> tuple[float, DDState]:
    """Derivative-directed rate choice with deadline and backlog clamps.

    Finds the rate where the curve slope meets the running derivative
    estimate (monotone bisection on the convex curve), clamps it between
    the robust floor and the total backlog, then updates the estimate
    with the slope actually used.
    """
    entries = state.entries if isinstance(state, QueueState) else tuple(state)
    backlog = float(sum(entries))
    floor = float(robust_rate(entries))

    if backlog <= 0:
        r = 0.0
    else:
        lo, hi = 0.0, backlog
        if power_curve.derivative(lo, gain) >= dd.derivative:
            r = lo
        elif power_curve.derivative(hi, gain) <= dd.derivative:
            r = hi
        else:
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if power_curve.derivative(mid, gain) < dd.derivative:
                    lo = mid
                else:
                    hi = mid
            r = 0.5 * (lo + hi)
    rate = min(max(r, floor), backlog)
    new_d = dd.beta * dd.derivative + (1.0 - dd.beta) * power_curve.derivative(rate, gain)
    return rate, replace(dd, derivative=new_d)
