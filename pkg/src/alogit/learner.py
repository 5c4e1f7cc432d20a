"""Active learning loop: fit, shrink, stop-check, select, label, append.

The loop is a sequential state machine over a Pool.  Each stage refits
the logistic MLE on the labeled set, applies shrinkage (unless running
the plain-MLE baseline), evaluates the stopping rule, and only then
selects the next subject, so the recorded stopping time counts labeled
subjects at the first moment the inequality holds.

Hidden labels are never read directly; every label flows through an
oracle's ``label(subject_id)`` call, which lets the same machinery run
against pre-recorded labels or a human annotator.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .errors import (
    CannotBalance,
    IllConditioned,
    NoSelectedVariables,
    NotPositiveDefinite,
    OneClassOnly,
    PoolExhausted,
    SingularInformation,
)
from .glm import FitResult, fisher_info, fit_mle, mu
from .selection import (
    SelectionConfig,
    cluster_representatives,
    d_scores,
    kmeans,
    select_next,
    uncertainty_set,
)
from .shrinkage import ShrinkageConfig, ase, compute_L, indicators
from .stopping import (
    StoppingConfig,
    StoppingState,
    kappa as kappa_stat,
    max_semi_axis,
    nu_n,
    selected_block_information,
    should_stop,
)

INIT_REDRAWS = 50


class Oracle(Protocol):
    """Label source; must be idempotent per subject and may block."""

    def label(self, subject_id: int) -> int: ...


class ReplayOracle:
    """Reveals pre-recorded labels on demand."""

    replay = True

    def __init__(self, labels: np.ndarray):
        self._labels = np.asarray(labels)

    def label(self, subject_id: int) -> int:
        return int(self._labels[subject_id])


@dataclass
class Pool:
    """Feature matrix plus labeling bookkeeping.

    ``labels`` holds hidden ground truth when known (replay mode) and is
    only touched by evaluation code, never by the selection loop.
    ``revealed`` accumulates what the oracle returned.
    """

    features: np.ndarray
    labels: np.ndarray | None = None
    labeled_mask: np.ndarray = None
    active_order: list[int] = field(default_factory=list)
    revealed: np.ndarray = None
    discarded: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        n = self.features.shape[0]
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int8)
            if self.labels.shape != (n,):
                raise ValueError("labels length must match features")
        if self.labeled_mask is None:
            self.labeled_mask = np.zeros(n, dtype=bool)
        if self.revealed is None:
            self.revealed = np.full(n, -1, dtype=np.int8)

    @property
    def n_total(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_labeled(self) -> int:
        return len(self.active_order)

    def candidate_indices(self) -> np.ndarray:
        """Unlabeled pool B: never labeled, never spent by a redraw."""
        mask = ~self.labeled_mask
        if self.discarded:
            mask = mask.copy()
            mask[self.discarded] = False
        return np.flatnonzero(mask)

    def add_label(self, index: int, y: int) -> None:
        if self.labeled_mask[index]:
            raise ValueError(f"subject {index} already labeled")
        if y not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {y!r}")
        self.labeled_mask[index] = True
        self.revealed[index] = y
        self.active_order.append(int(index))

    def active_xy(self) -> tuple[np.ndarray, np.ndarray]:
        order = np.asarray(self.active_order, dtype=int)
        return self.features[order], self.revealed[order].astype(float)


@dataclass(frozen=True)
class LearnerConfig:
    shrinkage: ShrinkageConfig = field(default_factory=ShrinkageConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    stopping: StoppingConfig = field(default_factory=StoppingConfig)
    estimator_mode: str = "ase"
    max_steps: int = 10**9
    seed: int = 0

    def __post_init__(self):
        if self.estimator_mode not in ("ase", "mle"):
            raise ValueError("estimator_mode must be 'ase' or 'mle'")
        if self.max_steps < self.stopping.n0:
            raise ValueError("max_steps must be >= n0")


def default_n0(p: int) -> int:
    """Initial sample size: twice the dimension, at least 20."""
    return max(2 * p, 20)


@dataclass(frozen=True)
class TraceRow:
    n: int
    nu: float | None
    threshold: float | None
    p0_hat: int
    selected: int | None


@dataclass(frozen=True)
class StepEval:
    """Everything one stage computes before the next label arrives."""

    n: int
    fit: FitResult
    beta_hat: np.ndarray
    indicators: np.ndarray
    p0_hat: int
    df: int
    L: float | None
    fisher_hat: np.ndarray
    nu: float | None
    stop: StoppingState | None
    stopped: bool
    selected: int | None
    d_score: float | None
    u_score: float | None
    d_rank: int | None
    degenerate: bool

    @property
    def beta_tilde(self) -> np.ndarray:
        return self.fit.beta_tilde


@dataclass
class RunReport:
    """Outcome of a full run plus its per-stage trace."""

    N: int
    wall_time: float
    beta_tilde: np.ndarray
    beta_hat: np.ndarray
    indicators: np.ndarray
    p0_hat: int | None
    kappa: float | None
    acc: float | None
    auc: float | None
    acc_train: float | None
    auc_train: float | None
    trace: list[TraceRow]
    stopped_by: str
    nu: float | None
    threshold: float | None
    a_n_sq: float | None
    semi_axis: float | None
    separation_flag: bool
    fisher_hat: np.ndarray


class _ClusterState:
    """Bookkeeping for the optional k-means candidate prefilter."""

    def __init__(self):
        self.indices = None
        self.assignment = None
        self.centers = None
        self.age = 0

    def refresh(self, pool: Pool, k: int, seed: int) -> None:
        cand = pool.candidate_indices()
        assignment, centers = kmeans(pool.features[cand], k, seed)
        self.indices = cand
        self.assignment = assignment
        self.centers = centers
        self.age = 0


def init_sample(pool: Pool, n0: int, seed: int, oracle: Oracle) -> Pool:
    """Label n0 uniformly drawn subjects through the oracle.

    With a replay oracle the draw is repeated (disjointly, up to 50
    redraws) until both classes appear; subjects burned by a failed
    draw are kept out of the candidate pool so no label is requested
    twice.  Interactive oracles accept whatever arrives.
    """
    if len(pool.candidate_indices()) < n0:
        raise ValueError(f"pool has fewer than n0={n0} unlabeled subjects")
    rng = np.random.default_rng(seed)
    replay = bool(getattr(oracle, "replay", False))
    burned: list[tuple[int, int]] = []
    for _ in range(INIT_REDRAWS + 1):
        available = pool.candidate_indices()
        if burned:
            spent = {i for i, _ in burned}
            available = np.array([i for i in available if i not in spent], dtype=int)
        if len(available) < n0:
            raise CannotBalance("ran out of unlabeled subjects while balancing")
        draw = rng.choice(available, size=n0, replace=False)
        ys = [int(oracle.label(int(i))) for i in draw]
        if any(y not in (0, 1) for y in ys):
            raise ValueError("oracle returned a non-binary label")
        if not replay or len(set(ys)) == 2:
            for i, y in zip(draw, ys):
                pool.add_label(int(i), y)
            for i, y in burned:
                pool.revealed[i] = y
                pool.discarded.append(i)
            return pool
        burned.extend(zip((int(i) for i in draw), ys))
    raise CannotBalance(f"no balanced initial sample after {INIT_REDRAWS} redraws")


def _all_ones_eval(pool, config, fit, reason_degenerate=False):
    """Shared tail for MLE mode and shrinkage fallbacks."""
    p = pool.dim
    ind = np.ones(p, dtype=np.int8)
    return ind, fit.beta_tilde.copy(), p


def evaluate_state(
    pool: Pool,
    config: LearnerConfig,
    warm: StepEval | None = None,
    cluster_state: _ClusterState | None = None,
) -> StepEval:
    """Fit, shrink and stop-check the current labeled set, then pick the
    next subject (selection is skipped once stopped).

    Degenerate stages never abort the loop: if the information matrix
    cannot be factorized, the stage skips the stop check and falls back
    to pure uncertainty sampling until new labels restore rank.
    """
    x_active, y_active = pool.active_xy()
    n = len(pool.active_order)
    p = pool.dim

    init = None
    if warm is not None and not warm.fit.separation_flag:
        init = warm.beta_tilde
    try:
        fit = fit_mle(x_active, y_active, init=init)
    except SingularInformation:
        # keep the previous coefficients; gather more data
        beta = warm.beta_tilde if warm is not None else np.zeros(p)
        fit = FitResult(
            beta_tilde=np.array(beta, dtype=float),
            fisher=fisher_info(beta, x_active),
            loglik=float("nan"),
            iterations=0,
            converged=False,
            separation_flag=True,
        )

    L = None
    if config.estimator_mode == "mle":
        ind, beta_hat, p0_for_df = _all_ones_eval(pool, config, fit)
        p0_hat = p
    else:
        try:
            L = compute_L(fit.fisher)
            ind = indicators(fit.beta_tilde, L, n, config.shrinkage)
        except (IllConditioned, NotPositiveDefinite):
            ind = np.ones(p, dtype=np.int8)
        beta_hat, p0_hat = ase(fit.beta_tilde, ind)
        p0_for_df = p0_hat

    if np.all(ind == 1):
        fisher_hat = fit.fisher
    else:
        fisher_hat = fisher_info(beta_hat, x_active)

    nu = None
    stop = None
    stopped = False
    degenerate = False
    if p0_hat >= 1:
        try:
            nu = nu_n(fisher_hat, ind, n, config.stopping.rho_fn)
            stop = should_stop(nu, n, p0_for_df, config.stopping)
            stopped = stop.stopped
        except (NotPositiveDefinite, NoSelectedVariables):
            degenerate = True

    selected = d_score = u_score = d_rank = None
    if not stopped:
        selected, d_score, u_score, d_rank = _select_subject(
            pool, config, fisher_hat, beta_hat, degenerate, cluster_state
        )

    return StepEval(
        n=n,
        fit=fit,
        beta_hat=beta_hat,
        indicators=ind,
        p0_hat=p0_hat,
        df=p0_for_df,
        L=L,
        fisher_hat=fisher_hat,
        nu=nu,
        stop=stop,
        stopped=stopped,
        selected=selected,
        d_score=d_score,
        u_score=u_score,
        d_rank=d_rank,
        degenerate=degenerate,
    )


def _two_stage(pool, config, fisher_hat, beta_hat, scan: np.ndarray):
    """d-ranking then uncertainty argmin over pool indices ``scan``."""
    rows = pool.features[scan]
    scores = d_scores(rows, fisher_hat, beta_hat)
    top = uncertainty_set(scores, config.selection.rho)
    # positions within scan -> stable pool-index tie-break
    top = top[np.lexsort((scan[top], -scores[top]))]
    local = select_next(top, rows, beta_hat, config.selection.p_target)
    winner = int(scan[local])
    rank = int(np.flatnonzero(top == local)[0]) + 1
    u = float(abs(mu(float(rows[local] @ beta_hat)) - config.selection.p_target))
    return winner, float(scores[local]), u, rank


def _select_subject(pool, config, fisher_hat, beta_hat, degenerate, cluster_state):
    cand = pool.candidate_indices()
    if cand.size == 0:
        return None, None, None, None
    if degenerate:
        # no usable information matrix: fall back to uncertainty only
        probs = mu(pool.features[cand] @ beta_hat)
        u = np.abs(np.atleast_1d(probs) - config.selection.p_target)
        pos = int(np.lexsort((cand, u))[0])
        return int(cand[pos]), None, float(u[pos]), None

    prefilter = config.selection.cluster_prefilter
    if prefilter is not None and cand.size > prefilter.k:
        if cluster_state is None:
            cluster_state = _ClusterState()
        if cluster_state.indices is None or cluster_state.age >= prefilter.refresh_every:
            cluster_state.refresh(pool, prefilter.k, config.seed)
        cluster_state.age += 1
        live = np.isin(cluster_state.indices, cand)
        live_idx = cluster_state.indices[live]
        live_asg = cluster_state.assignment[live]
        reps_local = cluster_representatives(
            pool.features[live_idx], live_asg, cluster_state.centers
        )
        reps = live_idx[reps_local]
        rep_winner, _, _, _ = _two_stage(pool, config, fisher_hat, beta_hat, reps)
        rep_cluster = live_asg[np.flatnonzero(live_idx == rep_winner)[0]]
        members = live_idx[live_asg == rep_cluster]
        return _two_stage(pool, config, fisher_hat, beta_hat, members)

    return _two_stage(pool, config, fisher_hat, beta_hat, cand)


def step(
    pool: Pool,
    state: StepEval | None,
    config: LearnerConfig,
    oracle: Oracle,
    cluster_state: _ClusterState | None = None,
) -> tuple[Pool, StepEval, bool]:
    """One full iteration; the pool is unchanged when the rule fires."""
    ev = evaluate_state(pool, config, warm=state, cluster_state=cluster_state)
    if ev.stopped:
        return pool, ev, True
    if ev.selected is None:
        raise PoolExhausted(f"pool exhausted at n={ev.n} before stopping")
    y = oracle.label(ev.selected)
    pool.add_label(ev.selected, int(y))
    return pool, ev, False


def run(
    pool: Pool,
    config: LearnerConfig,
    oracle: Oracle,
    eval_features: np.ndarray | None = None,
    eval_labels: np.ndarray | None = None,
) -> RunReport:
    """Drive the loop from the initial sample to the stopping decision.

    Metrics use the explicit held-out set when given; otherwise, for
    replay pools, the still-unlabeled remainder serves as the test set.
    In-sample metrics over the labeled subjects are always reported
    alongside.
    """
    t0 = time.perf_counter()
    init_sample(pool, config.stopping.n0, config.seed, oracle)
    cluster_state = _ClusterState()
    state: StepEval | None = None
    trace: list[TraceRow] = []
    stopped_by = None
    while True:
        ev = evaluate_state(pool, config, warm=state, cluster_state=cluster_state)
        trace.append(
            TraceRow(
                n=ev.n,
                nu=ev.nu,
                threshold=ev.stop.threshold if ev.stop else None,
                p0_hat=ev.p0_hat,
                selected=ev.selected if not ev.stopped else None,
            )
        )
        if ev.stopped:
            stopped_by = "rule"
            break
        if ev.n >= config.max_steps:
            stopped_by = "max_steps"
            break
        if ev.selected is None:
            stopped_by = "pool_exhausted"
            break
        y = oracle.label(ev.selected)
        pool.add_label(ev.selected, int(y))
        state = ev

    n_stop = pool.n_labeled
    kappa_val = None
    semi_axis = None
    if ev.stop is not None and ev.nu is not None:
        kappa_val = kappa_stat(n_stop, config.stopping.d, ev.stop.a_n_sq, ev.nu)
        if stopped_by == "rule":
            sigma11 = selected_block_information(ev.fisher_hat, ev.indicators)
            semi_axis = max_semi_axis(
                sigma11, ev.nu, n_stop, config.stopping.d, config.stopping.rho_fn
            )

    acc_val = auc_val = None
    if eval_features is not None and eval_labels is not None:
        scores = mu(np.asarray(eval_features, dtype=float) @ ev.beta_hat)
        acc_val = accuracy(scores, eval_labels)
        auc_val = _safe_auc(scores, eval_labels)
    elif pool.labels is not None:
        rest = pool.candidate_indices()
        if rest.size:
            scores = mu(pool.features[rest] @ ev.beta_hat)
            acc_val = accuracy(scores, pool.labels[rest])
            auc_val = _safe_auc(scores, pool.labels[rest])

    x_active, y_active = pool.active_xy()
    train_scores = mu(x_active @ ev.beta_hat)
    acc_train = accuracy(train_scores, y_active)
    auc_train = _safe_auc(train_scores, y_active)

    return RunReport(
        N=n_stop,
        wall_time=time.perf_counter() - t0,
        beta_tilde=ev.beta_tilde,
        beta_hat=ev.beta_hat,
        indicators=ev.indicators,
        p0_hat=None if config.estimator_mode == "mle" else ev.p0_hat,
        kappa=kappa_val,
        acc=acc_val,
        auc=auc_val,
        acc_train=acc_train,
        auc_train=auc_train,
        trace=trace,
        stopped_by=stopped_by,
        nu=ev.nu,
        threshold=ev.stop.threshold if ev.stop else None,
        a_n_sq=ev.stop.a_n_sq if ev.stop else None,
        semi_axis=semi_axis,
        separation_flag=ev.fit.separation_flag,
        fisher_hat=ev.fisher_hat,
    )


def _tied_ranks(values: np.ndarray) -> np.ndarray:
    """Average ranks (1-based) with ties sharing their mean rank."""
    values = np.asarray(values)
    uniq, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    mean_rank = upper - (counts - 1) / 2.0
    return mean_rank[inverse]


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC with ties counted half, via tied ranks."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    n1 = int(np.sum(labels == 1))
    n0 = int(np.sum(labels == 0))
    if n1 == 0 or n0 == 0:
        raise OneClassOnly("AUC needs both classes")
    ranks = _tied_ranks(scores)
    rank_sum = float(np.sum(ranks[labels == 1]))
    return (rank_sum - n1 * (n1 + 1) / 2.0) / (n1 * n0)


def _safe_auc(scores, labels):
    try:
        return auc(scores, labels)
    except OneClassOnly:
        return None


def accuracy(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> float:
    """Fraction correct when scores at or above the threshold predict 1."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    pred = (scores >= threshold).astype(int)
    return float(np.mean(pred == labels))
