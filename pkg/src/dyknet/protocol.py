"""Node/edge state machine: broadcast, delivery and dual block minimization.

Each node carries a mass vector ``y``, a positive weight ``s``, running
broadcast counters ``sigma_y``/``sigma_s``, its dual variable ``z``, the
tracked primal estimate ``x = y/s`` and (for subdifferentiable nodes) the
current affine minorant.  Each directed edge carries last-received counters
``rho_y``/``rho_s``; the difference ``sigma - rho`` is the in-flight mass
that has been sent but not yet absorbed, so a lost delivery is only a delay.

Invariants maintained by the three operations:

* weights: sum of node weights plus in-flight weight stays exactly |V|;
* mass: sum of y + z over nodes plus in-flight mass stays |V| * mbar;
* ``y = s*x`` after every local minimization on that node.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .graph import GraphTopology, InvalidEdgeError, InvalidNodeError
from .objectives import (
    DimensionMismatchError,
    ObjectiveSpec,
    SUBDIFFERENTIABLE,
    tangent_minorant,
)


class NumericalInstabilityError(RuntimeError):
    """A node weight dropped below the safe floor (pathological schedule)."""


@dataclass
class SimState:
    """Mutable simulation state, advanced by one event at a time.

    Not thread-safe; run independent copies for parallel sweeps.
    """

    topology: GraphTopology
    objectives: list
    m: int
    xbar: np.ndarray          # (n, m) per-node anchors
    mbar: np.ndarray          # (m,) mean anchor
    y: np.ndarray             # (n, m)
    s: np.ndarray             # (n,)
    sigma_y: np.ndarray       # (n, m)
    sigma_s: np.ndarray       # (n,)
    rho_y: np.ndarray         # (E, m)
    rho_s: np.ndarray         # (E,)
    z: np.ndarray             # (n, m)
    x: np.ndarray             # (n, m)
    mino_a: np.ndarray        # (n, m) minorant gradients (subdiff nodes)
    mino_b: np.ndarray        # (n,) minorant offsets
    treat: np.ndarray         # (n,) int64 treatment codes
    fn_kind: np.ndarray       # (n,) int64 variant codes
    fn_v: np.ndarray          # (n, m)
    fn_r: np.ndarray          # (n,)
    fn_b: np.ndarray          # (n, m)
    fn_c: np.ndarray          # (n,)
    event_count: int = 0

    @property
    def node_count(self) -> int:
        return self.topology.node_count

    def copy(self) -> "SimState":
        return SimState(
            topology=self.topology,
            objectives=list(self.objectives),
            m=self.m,
            xbar=self.xbar.copy(),
            mbar=self.mbar.copy(),
            y=self.y.copy(),
            s=self.s.copy(),
            sigma_y=self.sigma_y.copy(),
            sigma_s=self.sigma_s.copy(),
            rho_y=self.rho_y.copy(),
            rho_s=self.rho_s.copy(),
            z=self.z.copy(),
            x=self.x.copy(),
            mino_a=self.mino_a.copy(),
            mino_b=self.mino_b.copy(),
            treat=self.treat,
            fn_kind=self.fn_kind,
            fn_v=self.fn_v,
            fn_r=self.fn_r,
            fn_b=self.fn_b,
            fn_c=self.fn_c,
            event_count=self.event_count,
        )

    def state_arrays(self):
        return (self.y, self.s, self.sigma_y, self.sigma_s, self.rho_y,
                self.rho_s, self.z, self.x, self.mino_a, self.mino_b)

    def problem_arrays(self):
        return (self.treat, self.fn_kind, self.fn_v, self.fn_r, self.fn_b,
                self.fn_c)


def initialize(topology: GraphTopology, objectives, xbar) -> SimState:
    """Set up the initial state.

    Every node starts with mass equal to its anchor (so the node average is
    the consensus target), unit weight and zeroed counters.  Proximable
    nodes start with a zero dual; subdifferentiable nodes start from the
    tangent minorant at their anchor, with the tangent gradient moved out
    of the mass so that ``y + z`` still equals the anchor.
    """
    n = topology.node_count
    if len(objectives) != n:
        raise DimensionMismatchError(
            f"{len(objectives)} objectives for {n} nodes")
    xbar = np.ascontiguousarray(np.asarray(xbar, dtype=np.float64))
    if xbar.ndim != 2 or xbar.shape[0] != n:
        raise DimensionMismatchError(f"xbar must be ({n}, m), got {xbar.shape}")
    m = xbar.shape[1]
    for idx, obj in enumerate(objectives):
        if obj.dim != m:
            raise DimensionMismatchError(
                f"objective for node {idx + 1} has dim {obj.dim}, expected {m}")

    ecount = topology.edge_count
    state = SimState(
        topology=topology,
        objectives=list(objectives),
        m=m,
        xbar=xbar,
        mbar=xbar.mean(axis=0),
        y=xbar.copy(),
        s=np.ones(n),
        sigma_y=np.zeros((n, m)),
        sigma_s=np.zeros(n),
        rho_y=np.zeros((ecount, m)),
        rho_s=np.zeros(ecount),
        z=np.zeros((n, m)),
        x=xbar.copy(),
        mino_a=np.zeros((n, m)),
        mino_b=np.zeros(n),
        treat=np.array(
            [kernels.TREAT_SUBDIFF if o.treatment == SUBDIFFERENTIABLE
             else kernels.TREAT_PROX for o in objectives], dtype=np.int64),
        fn_kind=np.zeros(n, dtype=np.int64),
        fn_v=np.zeros((n, m)),
        fn_r=np.zeros(n),
        fn_b=np.zeros((n, m)),
        fn_c=np.zeros(n),
    )
    for idx, obj in enumerate(objectives):
        kind, v, r, b, c = obj.lowered()
        state.fn_kind[idx] = kind
        state.fn_v[idx] = v
        state.fn_r[idx] = r
        state.fn_b[idx] = b
        state.fn_c[idx] = c
        if obj.treatment == SUBDIFFERENTIABLE:
            f0 = tangent_minorant(obj, xbar[idx])
            state.mino_a[idx] = f0.a
            state.mino_b[idx] = f0.b
            state.z[idx] = f0.a
            state.y[idx] = state.y[idx] - f0.a
            state.x[idx] = state.y[idx] / state.s[idx]
    return state


def _check_node(state: SimState, i: int):
    if not (1 <= i <= state.node_count):
        raise InvalidNodeError(f"node {i} not in 1..{state.node_count}")


def op_broadcast(state: SimState, i: int) -> SimState:
    """Node i splits its mass/weight over itself and its out-edges.

    Mass and weight divide by deg_out(i)+1; one share stays, one share per
    out-edge is appended to the broadcast counters (shared by all
    out-edges through sigma - rho).  The tracked estimate is unchanged.
    """
    _check_node(state, i)
    kernels.apply_broadcast(i - 1, state.y, state.s, state.sigma_y,
                            state.sigma_s, state.x, state.topology.deg_out_array)
    state.event_count += 1
    return state


def op_deliver(state: SimState, edge) -> SimState:
    """Node j absorbs everything i has broadcast since the last delivery.

    Idempotent until the next broadcast on i: a repeated delivery finds
    ``sigma - rho == 0`` and changes nothing.
    """
    pair = (int(edge[0]), int(edge[1]))
    e = state.topology.edge_index.get(pair)
    if e is None:
        raise InvalidEdgeError(f"edge {pair} is not in the topology")
    kernels.apply_deliver(e, state.y, state.s, state.sigma_y, state.sigma_s,
                          state.rho_y, state.rho_s, state.x,
                          state.topology.edge_src, state.topology.edge_dst)
    state.event_count += 1
    return state


def op_local_min(state: SimState, j: int) -> SimState:
    """Dual block minimization at node j.

    Proximable nodes take an exact proximal step of their objective at the
    center ``(y + z)/s``; subdifferentiable nodes take the two-piece
    minorant step and keep the refreshed minorant.  Afterwards
    ``y = s*x`` and ``y + z`` is unchanged, so the dual surrogate cannot
    increase.
    """
    _check_node(state, j)
    status = kernels.apply_local_min(j - 1, state.y, state.s, state.z, state.x,
                                     state.mino_a, state.mino_b, state.treat,
                                     state.fn_kind, state.fn_v, state.fn_r,
                                     state.fn_b, state.fn_c)
    if status == kernels.UNSTABLE_WEIGHT:
        raise NumericalInstabilityError(
            f"weight of node {j} fell below {kernels.S_FLOOR:g}; "
            "the schedule starves this node of deliveries")
    state.event_count += 1
    return state


def primal_estimate(state: SimState, alpha) -> np.ndarray:
    """Tracked primal estimate of a node id or an (i, j) edge.

    Nodes report ``y/s``.  Edges report in-flight mass over in-flight
    weight; a drained edge (zero weight) reports the source node's
    estimate.
    """
    if isinstance(alpha, (tuple, list)):
        pair = (int(alpha[0]), int(alpha[1]))
        e = state.topology.edge_index.get(pair)
        if e is None:
            raise InvalidEdgeError(f"edge {pair} is not in the topology")
        i = pair[0] - 1
        fs = state.sigma_s[i] - state.rho_s[e]
        if fs > 0.0:
            return (state.sigma_y[i] - state.rho_y[e]) / fs
        return state.x[i].copy()
    _check_node(state, int(alpha))
    return state.x[int(alpha) - 1].copy()


def edge_weight(state: SimState, edge) -> float:
    pair = (int(edge[0]), int(edge[1]))
    e = state.topology.edge_index.get(pair)
    if e is None:
        raise InvalidEdgeError(f"edge {pair} is not in the topology")
    return float(state.sigma_s[pair[0] - 1] - state.rho_s[e])


def states_allclose(a: SimState, b: SimState, tol=0.0) -> bool:
    """Exact (tol=0) or tolerance comparison of the evolving arrays."""
    pairs = [
        (a.y, b.y), (a.s, b.s), (a.sigma_y, b.sigma_y), (a.sigma_s, b.sigma_s),
        (a.rho_y, b.rho_y), (a.rho_s, b.rho_s), (a.z, b.z), (a.x, b.x),
        (a.mino_a, b.mino_a), (a.mino_b, b.mino_b),
    ]
    for u, w in pairs:
        if tol == 0.0:
            if not np.array_equal(u, w):
                return False
        elif not np.allclose(u, w, rtol=0.0, atol=tol):
            return False
    return True
