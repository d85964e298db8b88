"""Event generation and execution: schedules, traces, delivery windows.

Schedules model asynchronous operation with unreliable links.  A lost
delivery never drops data: the undelivered share stays buffered in the
broadcast counters until the edge next succeeds.

Policies
--------
* ``round_robin``: per round, every node broadcasts and each of its
  out-edges delivers immediately with probability ``p_deliver``; then every
  node runs one local minimization.  Delivery draws come from per-edge
  substreams of the seed, so they are order-independent within a round.
* ``random_event``: one uniformly weighted event per call; deliveries
  succeed with probability ``p_deliver`` (a failed draw emits nothing).
* ``trace``: replays a recorded event sequence, one event per call.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels, metrics
from .graph import GraphTopology, InvalidEdgeError, InvalidNodeError
from .protocol import NumericalInstabilityError, SimState
from .objectives import OutsideConjugateDomainError

BROADCAST = "broadcast"
DELIVER = "deliver"
LOCAL_MIN = "local_min"

_TRACE_LETTER = {BROADCAST: "A", DELIVER: "B", LOCAL_MIN: "C"}
_LETTER_KIND = {v: k for k, v in _TRACE_LETTER.items()}

WEIGHT_TOL_PER_NODE = 1e-12
MASS_TOL = 1e-9
MONOTONE_RTOL = 1e-9
GAP_TOL = 1e-9


class ScheduleError(ValueError):
    pass


class TraceExhaustedError(ScheduleError):
    pass


class InvariantViolationError(RuntimeError):
    def __init__(self, message, event_count):
        super().__init__(f"{message} (event {event_count})")
        self.event_count = event_count


@dataclass(frozen=True)
class ScheduleEvent:
    """One protocol step: broadcast(i), deliver(i, j) or local_min(i)."""

    kind: str
    i: int
    j: int = 0

    def trace_line(self) -> str:
        if self.kind == DELIVER:
            return f"{_TRACE_LETTER[self.kind]} {self.i} {self.j}"
        return f"{_TRACE_LETTER[self.kind]} {self.i}"


def broadcast(i) -> ScheduleEvent:
    return ScheduleEvent(BROADCAST, int(i))


def deliver(i, j) -> ScheduleEvent:
    return ScheduleEvent(DELIVER, int(i), int(j))


def local_min(i) -> ScheduleEvent:
    return ScheduleEvent(LOCAL_MIN, int(i))


def parse_trace_line(line: str) -> ScheduleEvent:
    parts = line.split()
    if not parts or parts[0] not in _LETTER_KIND:
        raise ScheduleError(f"bad trace line: {line!r}")
    kind = _LETTER_KIND[parts[0]]
    if kind == DELIVER:
        if len(parts) != 3:
            raise ScheduleError(f"bad trace line: {line!r}")
        return deliver(int(parts[1]), int(parts[2]))
    if len(parts) != 2:
        raise ScheduleError(f"bad trace line: {line!r}")
    return ScheduleEvent(kind, int(parts[1]))


def load_trace(path):
    events = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                events.append(parse_trace_line(line))
    return tuple(events)


def save_trace(path, events):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for ev in events:
            fh.write(ev.trace_line() + "\n")


@dataclass(frozen=True)
class SchedulePolicy:
    kind: str = "round_robin"
    p_deliver: float = 1.0
    seed: int = 0
    weights: tuple = (1.0, 1.0, 1.0)
    trace: tuple = None

    def __post_init__(self):
        if self.kind not in ("round_robin", "random_event", "trace"):
            raise ScheduleError(f"unknown schedule policy {self.kind!r}")
        if not (0.0 < self.p_deliver <= 1.0):
            raise ScheduleError(f"p_deliver must be in (0, 1], got {self.p_deliver}")
        if any(w < 0 for w in self.weights) or sum(self.weights) <= 0:
            raise ScheduleError(f"bad event weights {self.weights}")
        if self.kind == "trace" and self.trace is None:
            raise ScheduleError("trace policy needs a trace")


class EventSource:
    """Stateful generator bound to one policy and one topology."""

    def __init__(self, policy: SchedulePolicy, topology: GraphTopology):
        self.policy = policy
        self.topology = topology
        root = np.random.SeedSequence(policy.seed)
        children = root.spawn(topology.edge_count + 1)
        # one stream per edge keeps delivery draws order-independent
        self._edge_rng = [np.random.default_rng(ss) for ss in children[:-1]]
        self._event_rng = np.random.default_rng(children[-1])
        self._trace_pos = 0

    def generate_round(self, state: SimState):
        """Next batch of events (one per call for random/trace policies)."""
        policy = self.policy
        if policy.kind == "round_robin":
            g = self.topology
            events = []
            for i in g.nodes():
                events.append(broadcast(i))
                for j in g.out_neighbors_list[i - 1]:
                    e = g.edge_index[(i, j)]
                    if policy.p_deliver >= 1.0 or \
                            self._edge_rng[e].random() < policy.p_deliver:
                        events.append(deliver(i, j))
            for i in g.nodes():
                events.append(local_min(i))
            return events
        if policy.kind == "random_event":
            w = np.asarray(policy.weights, dtype=np.float64)
            u = self._event_rng.random() * w.sum()
            g = self.topology
            if u < w[0]:
                i = 1 + int(self._event_rng.integers(g.node_count))
                return [broadcast(i)]
            if u < w[0] + w[1]:
                e = int(self._event_rng.integers(g.edge_count))
                if policy.p_deliver >= 1.0 or \
                        self._event_rng.random() < policy.p_deliver:
                    return [deliver(*g.edges[e])]
                return []
            i = 1 + int(self._event_rng.integers(g.node_count))
            return [local_min(i)]
        if self._trace_pos >= len(policy.trace):
            raise TraceExhaustedError(
                f"trace has only {len(policy.trace)} events")
        ev = policy.trace[self._trace_pos]
        self._trace_pos += 1
        return [ev]


def generate_round(policy: SchedulePolicy, topology: GraphTopology,
                   source: EventSource = None, state: SimState = None):
    """One-shot convenience wrapper around ``EventSource.generate_round``."""
    if source is None:
        source = EventSource(policy, topology)
    return source.generate_round(state)


def encode_events(events, topology: GraphTopology):
    tags = np.empty(len(events), dtype=np.int64)
    args = np.empty(len(events), dtype=np.int64)
    for t, ev in enumerate(events):
        if ev.kind == BROADCAST:
            if not (1 <= ev.i <= topology.node_count):
                raise InvalidNodeError(f"node {ev.i} not in 1..{topology.node_count}")
            tags[t] = kernels.EV_BROADCAST
            args[t] = ev.i - 1
        elif ev.kind == DELIVER:
            e = topology.edge_index.get((ev.i, ev.j))
            if e is None:
                raise InvalidEdgeError(f"edge ({ev.i}, {ev.j}) is not in the topology")
            tags[t] = kernels.EV_DELIVER
            args[t] = e
        else:
            if not (1 <= ev.i <= topology.node_count):
                raise InvalidNodeError(f"node {ev.i} not in 1..{topology.node_count}")
            tags[t] = kernels.EV_LOCAL_MIN
            args[t] = ev.i - 1
    return tags, args


@dataclass
class MetricsLog:
    records: list = field(default_factory=list)
    events: list = field(default_factory=list)
    reference: metrics.ReferenceSolution = None

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])


def _check_record(rec: metrics.MetricsRecord, prev_surrogate, node_count):
    if rec.weight_residual > WEIGHT_TOL_PER_NODE * node_count:
        raise InvariantViolationError(
            f"weight conservation residual {rec.weight_residual:.3e}", rec.event_count)
    if rec.mass_residual > MASS_TOL:
        raise InvariantViolationError(
            f"mass conservation residual {rec.mass_residual:.3e}", rec.event_count)
    if prev_surrogate is not None and \
            rec.dual_surrogate > prev_surrogate + MONOTONE_RTOL * (1.0 + abs(prev_surrogate)):
        raise InvariantViolationError(
            f"dual surrogate increased {prev_surrogate!r} -> {rec.dual_surrogate!r}",
            rec.event_count)
    if rec.duality_gap < -GAP_TOL:
        raise InvariantViolationError(
            f"negative duality gap {rec.duality_gap:.3e}", rec.event_count)
    if rec.duality_gap < rec.s_weighted_error - GAP_TOL * (1.0 + abs(rec.duality_gap)):
        raise InvariantViolationError(
            f"gap {rec.duality_gap:.3e} below s-weighted error {rec.s_weighted_error:.3e}",
            rec.event_count)


def run(state: SimState, policy: SchedulePolicy, rounds: int, *,
        cadence: str = "round", reference: metrics.ReferenceSolution = None,
        check_invariants: bool = True, collect_events: bool = True) -> MetricsLog:
    """Drive the state through ``rounds`` schedule batches.

    Emits one metrics record per event (``cadence="event"``) or per round
    (``cadence="round"``) and raises ``InvariantViolationError`` with the
    offending event index the moment a checked record goes out of
    tolerance.
    """
    if rounds < 1:
        raise ScheduleError(f"rounds must be >= 1, got {rounds}")
    if cadence not in ("round", "event"):
        raise ScheduleError(f"unknown cadence {cadence!r}")
    if reference is None:
        reference = metrics.solve_centralized(state.objectives, state.xbar)
    x_star = np.ascontiguousarray(reference.x_star, dtype=np.float64)
    sum_f_star = metrics.sum_objectives_at(state.objectives, x_star)
    g = state.topology
    source = EventSource(policy, g)
    log = MetricsLog(reference=reference)
    record_each = cadence == "event"
    prev_surrogate = None
    for round_index in range(1, rounds + 1):
        events = source.generate_round(state)
        tags, args = encode_events(events, g)
        out = np.zeros((len(events) if record_each else 1, 6))
        status, pos = kernels.run_chunk(
            tags, args, *state.state_arrays(), *state.problem_arrays(),
            g.deg_out_array, g.edge_src, g.edge_dst,
            state.mbar, x_star, sum_f_star, out, record_each)
        if status == kernels.UNSTABLE_WEIGHT:
            state.event_count += pos + 1
            raise NumericalInstabilityError(
                f"node weight below floor at event {state.event_count}")
        if status == kernels.CONJUGATE_DOMAIN:
            state.event_count += pos + 1
            raise OutsideConjugateDomainError(
                f"conjugate domain violated at event {state.event_count}")
        base = state.event_count
        state.event_count += len(events)
        if collect_events:
            log.events.extend(events)
        if record_each:
            rows = [(base + t + 1, events[t].trace_line(), out[t])
                    for t in range(len(events))]
        else:
            tag = events[-1].trace_line() if events else ""
            rows = [(state.event_count, tag, out[0])]
        for event_count, tag, row in rows:
            rec = metrics.MetricsRecord(
                round_index=round_index, event_count=event_count, event=tag,
                dual_surrogate=float(row[0]), duality_gap=float(row[1]),
                s_weighted_error=float(row[2]), consensus_residual=float(row[3]),
                weight_residual=float(row[4]), mass_residual=float(row[5]))
            if check_invariants:
                _check_record(rec, prev_surrogate, state.node_count)
            prev_surrogate = rec.dual_surrogate
            log.records.append(rec)
    return log


@dataclass(frozen=True)
class DeliveryWindowReport:
    """Empirical delivery window per edge; ``None`` marks an edge that never
    saw a broadcast immediately followed by its delivery."""

    per_edge: dict
    window: object  # int, or None when some edge is unbounded

    @property
    def bounded(self) -> bool:
        return self.window is not None


def check_delivery_window(events, topology: GraphTopology) -> DeliveryWindowReport:
    """Largest spacing between broadcast-then-deliver patterns per edge.

    The pattern for edge (i, j) is a broadcast on i followed by a delivery
    on (i, j) with only deliveries out of i in between.  The reported
    window counts lead-in and tail spacing, so with a bounded window every
    window-sized slice of the run contains the pattern for every edge.
    """
    occurrences = {edge: [] for edge in topology.edges}
    open_broadcast = {}
    for t, ev in enumerate(events):
        if ev.kind == BROADCAST:
            open_broadcast = {ev.i: t}
        elif ev.kind == DELIVER:
            if ev.i in open_broadcast:
                occurrences[(ev.i, ev.j)].append(t)
            open_broadcast = {k: v for k, v in open_broadcast.items() if k == ev.i}
        else:
            open_broadcast = {}
    per_edge = {}
    worst = 0
    unbounded = False
    total = len(events)
    for edge, occ in occurrences.items():
        if not occ:
            per_edge[edge] = None
            unbounded = True
            continue
        gaps = [occ[0] + 1]
        gaps.extend(occ[k + 1] - occ[k] for k in range(len(occ) - 1))
        gaps.append(total - occ[-1])
        per_edge[edge] = max(gaps)
        worst = max(worst, per_edge[edge])
    return DeliveryWindowReport(per_edge=per_edge,
                                window=None if unbounded else worst)
