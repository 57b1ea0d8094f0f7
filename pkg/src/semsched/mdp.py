"""Average-cost MDP construction and solution.

State (metric, battery, query), actions Idle/Transmit, slot mechanics:
a transmitted packet occupies one slot and consumes one battery unit
regardless of channel outcome; energy, version, and next-query draws are
independent Bernoulli events folded into the transition product.

Cost accounting. The query-agnostic kinds charge the metric value itself
every slot. The query-aware kinds charge, at query slots only, the metric
value the receiver holds once the slot's delivery and version events have
resolved (the value the reply to that query actually exhibits), which is
the expected next-state metric; and the solved query-aware policies are
restricted to transmit only at query slots, which is what makes them
distinct from their query-agnostic counterparts. Query-agnostic policies
such as greedy remain free to transmit at any slot and can be evaluated
under any cost.

Solved with Relative Value Iteration over the damped operator
P~ = (1-tau) I + tau P, which leaves stationary distributions, gains, and
argmins untouched while guaranteeing span convergence on periodic chains;
the reported bias is rescaled back to the undamped fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components
from scipy.sparse.linalg import spsolve

from .core import Action, AgentState, MetricKind, SystemParams, params_stamp
from .metrics import stage_cost, step_aoi, step_vaoi
from .policies import PolicyTable, state_count, state_index

_DAMPING = 0.5
_TIE_EPS = 1e-12


class InfeasibleAction(ValueError):
    pass


class NotConverged(RuntimeError):
    """RVIA hit max_iter with span >= tol; diagnostics attached."""

    def __init__(self, result: "SolveResult"):
        self.result = result
        super().__init__(
            f"no convergence after {result.iterations} iterations, "
            f"residual span {result.residual_span:.3e}"
        )


class MultichainPolicy(ValueError):
    """The policy-induced chain has several recurrent classes reachable
    from the start states; a single long-run average does not exist."""


class SingularSolve(RuntimeError):
    pass


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class TransitionEntry:
    next: AgentState
    prob: float


@dataclass(frozen=True, eq=False)
class SolveResult:
    gain: float
    bias: np.ndarray = field(repr=False)
    policy: PolicyTable
    iterations: int
    residual_span: float
    converged: bool = True


def build_state_space(params: SystemParams) -> list[AgentState]:
    """All (metric, battery, query) triples in canonical order."""
    return [
        AgentState(m, b, q)
        for m in range(params.delta_max + 1)
        for b in range(params.B + 1)
        for q in (0, 1)
    ]


def _step_metric(kind: MetricKind, metric: int, delivered: bool,
                 new_version: bool, delta_max: int) -> int:
    if kind.age_family:
        return step_aoi(metric, delivered, delta_max)
    return step_vaoi(metric, delivered, new_version, delta_max)


def transition(
    params: SystemParams, kind: MetricKind, s: AgentState, a: Action
) -> list[TransitionEntry]:
    """Enumerate the outcome product for one (state, action), merged.

    Outcomes: channel success (Transmit only) x energy arrival x version
    generation x next-slot query. Duplicate next states are merged;
    probabilities sum to 1.
    """
    if a == Action.TRANSMIT and s.battery < 1:
        raise InfeasibleAction(f"Transmit at battery 0 in state {s}")
    merged: dict[AgentState, float] = {}
    success_branches = (
        [(True, params.p_s), (False, 1.0 - params.p_s)]
        if a == Action.TRANSMIT
        else [(False, 1.0)]
    )
    for (success, p_u), (energy, p_en), (version, p_ver), (q2, p_q2) in product(
        success_branches,
        [(1, params.p_e), (0, 1.0 - params.p_e)],
        [(1, params.p_v), (0, 1.0 - params.p_v)],
        [(1, params.p_q), (0, 1.0 - params.p_q)],
    ):
        p = p_u * p_en * p_ver * p_q2
        if p == 0.0:
            continue
        delivered = a == Action.TRANSMIT and success
        nxt = AgentState(
            metric=_step_metric(kind, s.metric, delivered, bool(version), params.delta_max),
            battery=min(s.battery - int(a) + energy, params.B),
            query=q2,
        )
        merged[nxt] = merged.get(nxt, 0.0) + p
    return [TransitionEntry(nxt, p) for nxt, p in sorted(merged.items())]


def expected_stage_cost(
    params: SystemParams, kind: MetricKind, s: AgentState, a: Action
) -> float:
    """Expected one-slot cost of (s, a) under `kind`'s accounting."""
    if not kind.query_gated:
        return float(stage_cost(kind, s.metric, s.query))
    if s.query == 0:
        return 0.0
    return sum(e.prob * e.next.metric for e in transition(params, kind, s, a))


# --- vectorized model ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class _Model:
    """Dense transition/cost arrays for one (params, kind).

    nxt0/nxt1 hold next-state indices per outcome column, pr0/pr1 the
    state-independent outcome probabilities; feas1 marks states where the
    solver may choose Transmit (battery for all kinds, plus the query
    restriction for the query-aware policy class).
    """

    params: SystemParams
    kind: MetricKind
    n_states: int
    metric: np.ndarray
    battery: np.ndarray
    query: np.ndarray
    nxt0: np.ndarray
    pr0: np.ndarray
    nxt1: np.ndarray
    pr1: np.ndarray
    feas1: np.ndarray
    c0: np.ndarray
    c1: np.ndarray


@lru_cache(maxsize=32)
def _build_model(params: SystemParams, kind: MetricKind) -> _Model:
    p = params
    n = state_count(p.delta_max, p.B)
    idx = np.arange(n)
    metric = idx // ((p.B + 1) * 2)
    battery = (idx // 2) % (p.B + 1)
    query = idx % 2

    def next_index(m, b, q):
        return (m * (p.B + 1) + b) * 2 + q

    # idle: outcomes (energy, version, q2); transmit adds the channel draw
    idle_cols, idle_pr = [], []
    for e, pe in ((1, p.p_e), (0, 1 - p.p_e)):
        for v, pv in ((1, p.p_v), (0, 1 - p.p_v)):
            for q2, pq2 in ((1, p.p_q), (0, 1 - p.p_q)):
                if kind.age_family:
                    m2 = np.minimum(metric + 1, p.delta_max)
                else:
                    m2 = np.minimum(metric + v, p.delta_max)
                b2 = np.minimum(battery + e, p.B)
                idle_cols.append(next_index(m2, b2, q2))
                idle_pr.append(pe * pv * pq2)
    tx_cols, tx_pr = [], []
    for u, pu in ((1, p.p_s), (0, 1 - p.p_s)):
        for e, pe in ((1, p.p_e), (0, 1 - p.p_e)):
            for v, pv in ((1, p.p_v), (0, 1 - p.p_v)):
                for q2, pq2 in ((1, p.p_q), (0, 1 - p.p_q)):
                    if u:
                        m2 = np.full(n, (1 if kind.age_family else v))
                    else:
                        if kind.age_family:
                            m2 = np.minimum(metric + 1, p.delta_max)
                        else:
                            m2 = np.minimum(metric + v, p.delta_max)
                    b2 = np.minimum(battery - 1 + e, p.B)
                    tx_cols.append(next_index(m2, b2, q2))
                    tx_pr.append(pu * pe * pv * pq2)

    nxt0 = np.stack(idle_cols, axis=1)
    nxt1 = np.stack(tx_cols, axis=1)
    pr0 = np.array(idle_pr)
    pr1 = np.array(tx_pr)

    feas1 = battery >= 1
    if kind.query_gated:
        feas1 = feas1 & (query == 1)
        # cost: query times expected end-of-slot metric
        m_next0 = (nxt0 // ((p.B + 1) * 2)).astype(float) @ pr0
        m_next1 = (nxt1 // ((p.B + 1) * 2)).astype(float) @ pr1
        c0 = query * m_next0
        c1 = query * m_next1
    else:
        c0 = metric.astype(float)
        c1 = c0.copy()

    return _Model(
        params=p, kind=kind, n_states=n,
        metric=metric, battery=battery, query=query,
        nxt0=nxt0, pr0=pr0, nxt1=nxt1, pr1=pr1,
        feas1=feas1, c0=c0, c1=c1,
    )


def rvia_solve(
    params: SystemParams,
    kind: MetricKind,
    tol: float = 1e-9,
    max_iter: int = 10**6,
    h0: np.ndarray | None = None,
) -> SolveResult:
    """Relative Value Iteration to within `tol` on the span seminorm.

    The reference state is the canonical first state (0, 0, 0); ties
    between actions break toward Idle within 1e-12. `h0` warm-starts the
    iteration from a previous solve's `bias` at nearby parameters, which
    cuts sweep and bisection runtimes considerably.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    m = _build_model(params, kind)
    tau = _DAMPING
    h = np.zeros(m.n_states) if h0 is None else h0.astype(float) / tau
    big = np.where(m.feas1, 0.0, np.inf)
    span = np.inf
    gain = np.nan
    it = 0
    for it in range(1, max_iter + 1):
        e0 = h[m.nxt0] @ m.pr0
        e1 = h[m.nxt1] @ m.pr1
        w0 = m.c0 + (1 - tau) * h + tau * e0
        w1 = m.c1 + (1 - tau) * h + tau * e1 + big
        w = np.minimum(w0, w1)
        diff = w - h
        span = float(diff.max() - diff.min())
        gain = float(w[0])
        h = w - gain
        if span < tol:
            break
    transmit = (m.c1 + tau * (h[m.nxt1] @ m.pr1) + big) < (
        m.c0 + tau * (h[m.nxt0] @ m.pr0) - _TIE_EPS
    )
    actions = transmit.astype(np.int8)
    policy = PolicyTable(
        kind=kind,
        params_stamp=params_stamp(params),
        delta_max=params.delta_max,
        B=params.B,
        actions=actions,
    )
    result = SolveResult(
        gain=gain,
        bias=h * tau,
        policy=policy,
        iterations=it,
        residual_span=span,
        converged=span < tol,
    )
    if not result.converged:
        raise NotConverged(result)
    return result


# --- exact policy evaluation --------------------------------------------

def _policy_matrix(m: _Model, actions: np.ndarray) -> sp.csr_matrix:
    """Sparse chain transition matrix under the given action vector."""
    n = m.n_states
    a = actions.astype(bool)
    k0, k1 = m.pr0.size, m.pr1.size
    idle_idx = np.flatnonzero(~a)
    tx_idx = np.flatnonzero(a)
    rows = np.concatenate([np.repeat(idle_idx, k0), np.repeat(tx_idx, k1)])
    cols = np.concatenate([m.nxt0[idle_idx].ravel(), m.nxt1[tx_idx].ravel()])
    vals = np.concatenate([np.tile(m.pr0, idle_idx.size), np.tile(m.pr1, tx_idx.size)])
    P = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    P.sum_duplicates()
    P.eliminate_zeros()  # zero-prob outcomes must not become graph edges
    return P


def _start_indices(params: SystemParams, kind: MetricKind) -> list[int]:
    """Simulator initial states: full battery, fresh metric convention,
    query flag per its Bernoulli support."""
    m0 = params.delta_max if kind.age_family else 0
    qs = [0, 1]
    if params.p_q == 0:
        qs = [0]
    elif params.p_q == 1:
        qs = [1]
    return [
        state_index(params.delta_max, params.B, AgentState(m0, params.B, q))
        for q in qs
    ]


def _stationary_distribution(P: sp.csr_matrix, members: np.ndarray) -> np.ndarray:
    """Stationary vector of the closed class `members` of P."""
    sub = P[np.ix_(members, members)].tocsc()
    nC = members.size
    A = (sp.eye(nC, format="csc") - sub.T).tolil()
    A[0, :] = 1.0
    rhs = np.zeros(nC)
    rhs[0] = 1.0
    with np.errstate(all="ignore"):
        try:
            pi = spsolve(A.tocsc(), rhs)
        except Exception as exc:
            raise SingularSolve(str(exc)) from exc
    if not np.all(np.isfinite(pi)):
        raise SingularSolve("non-finite stationary solution")
    s = pi.sum()
    if abs(s - 1.0) > 1e-6 or np.any(pi < -1e-9):
        raise SingularSolve(f"stationary solve failed (sum {s})")
    return np.clip(pi, 0.0, None) / s


def _single_recurrent_class(
    P: sp.csr_matrix, starts: list[int]
) -> tuple[np.ndarray, np.ndarray]:
    """Reachable set and the unique closed class within it, or raise."""
    n = P.shape[0]
    reach = np.zeros(n, dtype=bool)
    for s0 in starts:
        if not reach[s0]:
            order = breadth_first_order(P, s0, return_predecessors=False)
            reach[order] = True
    ridx = np.flatnonzero(reach)
    Pr = P[np.ix_(ridx, ridx)].tocsr()
    ncomp, labels = connected_components(Pr, directed=True, connection="strong")
    closed = []
    for comp in range(ncomp):
        members = np.flatnonzero(labels == comp)
        rows = Pr[members]
        if np.all(np.isin(rows.indices, members)):
            closed.append(members)
    if len(closed) != 1:
        raise MultichainPolicy(
            f"{len(closed)} recurrent classes reachable from the start states"
        )
    return ridx, ridx[closed[0]]


def evaluate_policy_exact(
    params: SystemParams, kind: MetricKind, policy: PolicyTable
) -> float:
    """Long-run average cost of a fixed policy from its stationary
    distribution (sparse linear solve on the unique recurrent class).

    `kind` selects the cost being averaged and may differ from
    `policy.kind`: a query-agnostic policy is metered on a query-aware
    cost (or vice versa) by running the appropriate chain. Policies whose
    metric family differs from the meter's are evaluated on the product
    chain carrying both metric coordinates.
    """
    if policy.params_stamp != params_stamp(params):
        raise ValueError("policy stamped under different params")
    if (policy.kind.age_family == kind.age_family) or _is_metric_blind(policy):
        m = _build_model(params, kind)
        P = _policy_matrix(m, policy.actions)
        ridx, members = _single_recurrent_class(P, _start_indices(params, kind))
        pi = _stationary_distribution(P, members)
        cost = np.where(policy.actions.astype(bool), m.c1, m.c0)
        return float(pi @ cost[members])
    return _evaluate_cross_family(params, kind, policy)


def evaluation_chain_size(
    params: SystemParams, kind: MetricKind, policy: PolicyTable
) -> int:
    """Number of chain states evaluate_policy_exact would solve over."""
    n_m = params.delta_max + 1
    n_b = params.B + 1
    if (policy.kind.age_family == kind.age_family) or _is_metric_blind(policy):
        return n_m * n_b * 2
    grid = policy.actions.reshape(n_m, n_b, 2)
    nq = 1 if bool(np.all(grid[:, :, 0] == grid[:, :, 1])) else 2
    return n_m * n_m * n_b * nq


def _is_metric_blind(policy: PolicyTable) -> bool:
    """True when actions depend on (battery, query) only, so the policy
    can drive either metric family's chain directly."""
    grid = policy.actions.reshape(policy.delta_max + 1, policy.B + 1, 2)
    return bool(np.all(grid == grid[0]))


def _evaluate_cross_family(
    params: SystemParams, kind: MetricKind, policy: PolicyTable
) -> float:
    """Meter `kind` under a policy driven by the other metric family.

    Product chain over (policy metric, meter metric, battery) and, when
    the policy reads the query flag, the query coordinate; when it does
    not, the query factor is integrated out analytically (the flag is
    i.i.d. and independent of the rest of the chain).
    """
    p = params
    dm, B = p.delta_max, p.B
    pol_grid = policy.actions.reshape(dm + 1, B + 1, 2)
    query_blind = bool(
        np.all(pol_grid[:, :, 0] == pol_grid[:, :, 1])
    )

    n_m = dm + 1
    n_b = B + 1
    nq = 1 if query_blind else 2
    n = n_m * n_m * n_b * nq

    mp_, mm_, bb_, qq_ = np.unravel_index(
        np.arange(n), (n_m, n_m, n_b, nq)
    )
    if query_blind:
        act = pol_grid[mp_, bb_, 0].astype(bool)
    else:
        act = pol_grid[mp_, bb_, qq_].astype(bool)
    act &= bb_ >= 1  # safety; PolicyTable already guarantees this

    pol_age = policy.kind.age_family
    met_age = kind.age_family

    def step_m(m_arr, age, delivered, v):
        if delivered:
            return np.full_like(m_arr, 1 if age else v)
        return np.minimum(m_arr + (1 if age else v), dm)

    cols, rows, vals = [], [], []
    if kind.query_gated:
        cost = np.zeros(n)
        q_weight = np.full(n, p.p_q) if query_blind else qq_.astype(float)
    else:
        cost = mm_.astype(float)
    for u, pu in ((1, p.p_s), (0, 1.0 - p.p_s)):
        for e, pe in ((1, p.p_e), (0, 1.0 - p.p_e)):
            for v, pv in ((1, p.p_v), (0, 1.0 - p.p_v)):
                for q2 in range(nq):
                    pq2 = 1.0 if query_blind else (p.p_q if q2 else 1.0 - p.p_q)
                    prob = pu * pe * pv * pq2
                    if prob == 0.0:
                        continue
                    delivered = act & (u == 1)
                    mp2 = np.where(
                        delivered,
                        step_m(mp_, pol_age, True, v),
                        step_m(mp_, pol_age, False, v),
                    )
                    mm2 = np.where(
                        delivered,
                        step_m(mm_, met_age, True, v),
                        step_m(mm_, met_age, False, v),
                    )
                    b2 = np.minimum(bb_ - act.astype(int) + e, B)
                    nxt = ((mp2 * n_m + mm2) * n_b + b2) * nq + q2
                    rows.append(np.arange(n))
                    cols.append(nxt)
                    vals.append(np.full(n, prob))
                    if kind.query_gated:
                        cost += prob * q_weight * mm2
    P = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    P.sum_duplicates()
    P.eliminate_zeros()

    mp0 = dm if pol_age else 0
    mm0 = dm if met_age else 0
    if query_blind:
        starts = [((mp0 * n_m + mm0) * n_b + B) * nq]
    else:
        qs = [0, 1]
        if p.p_q == 0:
            qs = [0]
        elif p.p_q == 1:
            qs = [1]
        starts = [((mp0 * n_m + mm0) * n_b + B) * nq + q for q in qs]
    ridx, members = _single_recurrent_class(P, starts)
    pi = _stationary_distribution(P, members)
    return float(pi @ cost[members])


# --- brute-force oracle --------------------------------------------------

def _dense_average_cost(
    m: _Model, actions: np.ndarray, starts: list[int]
) -> float | None:
    """Average cost of one policy on a dense chain, or None if several
    recurrent classes are reachable. Only sane for small state spaces."""
    n = m.n_states
    a = actions.astype(bool)
    k0, k1 = m.pr0.size, m.pr1.size
    i0 = np.flatnonzero(~a)
    i1 = np.flatnonzero(a)
    P = np.zeros((n, n))
    np.add.at(P, (np.repeat(i0, k0), m.nxt0[i0].ravel()), np.tile(m.pr0, i0.size))
    np.add.at(P, (np.repeat(i1, k1), m.nxt1[i1].ravel()), np.tile(m.pr1, i1.size))
    # boolean transitive closure by repeated squaring
    A = (P > 0.0) | np.eye(n, dtype=bool)
    while True:
        A2 = A @ A
        if (A2 == A).all():
            break
        A = A2
    reach = A[starts].any(axis=0)
    # recurrent iff every successor leads back
    rec = reach & np.all(~A | A.T, axis=1)
    ridx = np.flatnonzero(rec)
    classes: list[np.ndarray] = []
    seen = np.zeros(n, dtype=bool)
    for j in ridx:
        if not seen[j]:
            cls = ridx[A[j, ridx] & A[ridx, j]]
            seen[cls] = True
            classes.append(cls)
    if len(classes) != 1:
        return None
    mem = classes[0]
    M = np.eye(mem.size) - P[np.ix_(mem, mem)].T
    M[0, :] = 1.0
    rhs = np.zeros(mem.size)
    rhs[0] = 1.0
    try:
        pi = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSolve(str(exc)) from exc
    cost = np.where(a, m.c1, m.c0)
    return float(pi @ cost[mem])


def _bruteforce_chunk(
    m: _Model, choice: np.ndarray, masks: np.ndarray, starts: list[int]
) -> tuple[np.ndarray, np.ndarray]:
    """Average costs for a chunk of policy bitmasks (nan = multichain).

    Stationary vectors come from the identity pi (I - P + 1 1^T) = 1^T,
    nonsingular exactly when the chain is unichain; rows of states
    unreachable from the starts are first redirected to a start state so
    that closed classes outside the reachable set cannot make the system
    singular without changing the reachable dynamics.
    """
    n = m.n_states
    nc = choice.size
    nm = masks.size
    k0 = m.pr0.size
    P0 = np.zeros((n, n))
    np.add.at(
        P0,
        (np.repeat(np.arange(n), k0), m.nxt0.ravel()),
        np.tile(m.pr0, n),
    )
    bits = ((masks[:, None] >> np.arange(nc)) & 1).astype(bool) if nc else np.zeros((nm, 0), bool)
    P = np.broadcast_to(P0, (nm, n, n)).copy()
    for j in range(nc):
        row1 = np.zeros(n)
        np.add.at(row1, m.nxt1[choice[j]], m.pr1)
        P[bits[:, j], choice[j], :] = row1
    A = (P > 0.0) | np.eye(n, dtype=bool)
    Af = A.astype(np.float32)
    for _ in range(max(1, int(np.ceil(np.log2(n))) + 1)):
        Af = (Af @ Af > 0.0).astype(np.float32)
    A = Af > 0.0
    reach = A[:, starts, :].any(axis=1)
    rec = reach & np.all(~A | A.transpose(0, 2, 1), axis=2)
    multi = (rec[:, :, None] & rec[:, None, :] & ~A).any(axis=(1, 2))

    s0 = starts[0]
    unreach = ~reach
    Pm = np.where(unreach[:, :, None], 0.0, P)
    Pm[:, :, s0] += unreach.astype(float)
    good = np.flatnonzero(~multi)
    costs = np.full(nm, np.nan)
    if good.size:
        M = np.transpose(np.eye(n) - Pm[good], (0, 2, 1)) + 1.0
        try:
            pi = np.linalg.solve(M, np.ones((good.size, n, 1)))[..., 0]
        except np.linalg.LinAlgError as exc:
            raise SingularSolve(str(exc)) from exc
        act = np.zeros((good.size, n), dtype=bool)
        if nc:
            act[:, choice] = bits[good]
        c = np.where(act, m.c1, m.c0)
        costs[good] = (pi * c).sum(axis=1)
    return costs, bits


def enumerate_optimal_bruteforce(
    params: SystemParams, kind: MetricKind, max_states: int = 64
) -> tuple[PolicyTable, float]:
    """Evaluate every stationary deterministic policy in the solved class.

    Only states where Transmit is actually choosable vary (battery >= 1,
    plus query = 1 for the query-aware kinds); everything else is Idle.
    Policies inducing several reachable recurrent classes are skipped: in
    a weakly communicating MDP the optimum is attained by a policy that is
    unichain from the start states, so skipping cannot hide the optimum.
    """
    m = _build_model(params, kind)
    n = m.n_states
    if n > max_states:
        raise TooLarge(f"{n} states > max_states {max_states}")
    choice = np.flatnonzero(m.feas1)
    if choice.size > 24:
        raise TooLarge(f"2^{choice.size} policies exceed the 2^24 guard")
    starts = _start_indices(params, kind)
    best_cost = np.inf
    best_mask = 0
    chunk = 4096
    total = 1 << choice.size
    for lo in range(0, total, chunk):
        masks = np.arange(lo, min(lo + chunk, total), dtype=np.int64)
        costs, _ = _bruteforce_chunk(m, choice, masks, starts)
        finite = np.isfinite(costs)
        if not finite.any():
            continue
        i = int(np.nanargmin(costs))
        if costs[i] < best_cost - 1e-15:
            best_cost = float(costs[i])
            best_mask = int(masks[i])
    if not np.isfinite(best_cost):
        raise MultichainPolicy("every enumerated policy was multichain")
    actions = np.zeros(n, dtype=np.int8)
    picked = choice[[i for i in range(choice.size) if best_mask >> i & 1]]
    actions[picked] = 1
    policy = PolicyTable(
        kind=kind,
        params_stamp=params_stamp(params),
        delta_max=params.delta_max,
        B=params.B,
        actions=actions,
    )
    return policy, best_cost


# --- SolveResult serialization ------------------------------------------

def format_solve_result(params: SystemParams, result: SolveResult) -> str:
    """Tabular text with bit-exact float round-trip (repr shortest form)."""
    lines = [
        "# solve result",
        f"kind = {result.policy.kind.value}",
        f"params_stamp = {result.policy.params_stamp}",
        f"delta_max = {params.delta_max}",
        f"B = {params.B}",
        f"gain = {result.gain!r}",
        f"iterations = {result.iterations}",
        f"residual_span = {result.residual_span!r}",
        f"converged = {int(result.converged)}",
        "metric battery query action bias",
    ]
    dm, B = params.delta_max, params.B
    for mtr in range(dm + 1):
        for b in range(B + 1):
            for q in (0, 1):
                i = state_index(dm, B, AgentState(mtr, b, q))
                lines.append(
                    f"{mtr} {b} {q} {int(result.policy.actions[i])} "
                    f"{float(result.bias[i])!r}"
                )
    return "\n".join(lines) + "\n"


def parse_solve_result(text: str) -> tuple[SolveResult, dict[str, str]]:
    """Inverse of format_solve_result; returns the result and raw header."""
    header: dict[str, str] = {}
    rows: list[tuple[int, int, int, int, float]] = []
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" in stripped:
            key, _, value = stripped.partition("=")
            header[key.strip()] = value.strip()
            continue
        parts = stripped.split()
        if parts[0] == "metric":
            continue
        mtr, b, q, a = map(int, parts[:4])
        rows.append((mtr, b, q, a, float(parts[4])))
    dm = int(header["delta_max"])
    B = int(header["B"])
    n = state_count(dm, B)
    actions = np.zeros(n, dtype=np.int8)
    bias = np.zeros(n)
    for mtr, b, q, a, h in rows:
        i = state_index(dm, B, AgentState(mtr, b, q))
        actions[i] = a
        bias[i] = h
    policy = PolicyTable(
        kind=MetricKind(header["kind"]),
        params_stamp=header["params_stamp"],
        delta_max=dm,
        B=B,
        actions=actions,
    )
    result = SolveResult(
        gain=float(header["gain"]),
        bias=bias,
        policy=policy,
        iterations=int(header["iterations"]),
        residual_span=float(header["residual_span"]),
        converged=header.get("converged", "1") == "1",
    )
    return result, header


def save_solve_result(params: SystemParams, result: SolveResult, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_solve_result(params, result))


def load_solve_result(path: str) -> tuple[SolveResult, dict[str, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_solve_result(fh.read())
