"""Nash equilibrium seeking with tau-step-delayed information exchange.

Every agent ``i`` keeps an estimate ``est[i, j]`` of every agent's current
strategy. At stage ``t`` it only sees its neighbours' estimates and the true
strategies from stage ``t - tau``::

    est_ij(t) = est_ij(t-1) + xi * [ sum_{k in N_i} (est_kj(t-tau) - est_ij(t-tau))
                                     + alpha_ij * (s_j(t-tau) - est_ij(t-tau)) ]

and then plays the best response to its own estimate,
``s_i(t+1) = -(sum_{j != i} a^i_ij est_ij(t) + b^i_i) / a^i_ii``.

Histories are known for strategies ``s(-tau..0)`` and estimates
``est(-tau..-1)``; the first update yields ``est(0)`` and ``s(1)``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .game import QuadraticGame, build_matrices, nash_equilibrium
from .topology import Graph, is_connected

log = logging.getLogger(__name__)

CONVERGED = "converged"
DIVERGED = "diverged"
MAX_STAGES = "max-stages-reached"


class SeekingError(ValueError):
    pass


class BracketError(SeekingError):
    """No diverging learning rate was found below the scan cap."""


@dataclass(frozen=True)
class SeekingConfig:
    xi: float
    tau: int = 1
    max_stages: int = 5000
    termination_delta: float = 1e-4
    record_estimations: bool = False
    blowup: float = 1e6

    def __post_init__(self):
        # xi = 0 is accepted so that frozen-estimate runs can be reproduced
        if self.xi < 0:
            raise SeekingError(f"learning rate must be non-negative, got {self.xi}")
        if self.tau < 1:
            raise SeekingError(f"delay step must be >= 1, got {self.tau}")
        if self.max_stages < 1:
            raise SeekingError(f"max_stages must be >= 1, got {self.max_stages}")
        if self.termination_delta < 0:
            raise SeekingError("termination_delta must be non-negative")


@dataclass(frozen=True)
class SeekingState:
    """Rolling history windows, oldest first.

    ``strategies`` holds ``s(t-tau), ..., s(t)`` and ``estimations`` holds
    ``est(t-tau), ..., est(t-1)`` as ``(n, n)`` arrays with ``est[i, j]`` the
    estimate of agent i about agent j. ``t`` is the next stage to update.
    """

    strategies: tuple
    estimations: tuple
    t: int = 0

    @property
    def tau(self) -> int:
        return len(self.estimations)

    @property
    def current(self) -> np.ndarray:
        return self.strategies[-1]

    @property
    def latest_estimation(self) -> np.ndarray:
        return self.estimations[-1]

    def stacked_estimation(self) -> np.ndarray:
        """Latest estimates as the agent-major ``n**2`` stack."""
        return self.estimations[-1].reshape(-1)


@dataclass
class Trajectory:
    """Per-stage record of a seeking run.

    Row ``k`` describes stage ``stages[k]``: the profile ``s(t)``, and when
    recorded, the estimate stack ``est(t-1)`` that produced it.
    """

    stages: np.ndarray
    strategies: np.ndarray
    equilibrium: np.ndarray
    agent_errors: np.ndarray
    profile_errors: np.ndarray
    utility_errors: np.ndarray
    status: str
    terminal_stage: int | None = None
    estimations: np.ndarray | None = None
    config: SeekingConfig | None = field(default=None, repr=False)

    @property
    def final(self) -> np.ndarray:
        return self.strategies[-1]

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def log_error_slope(self, start: int = 0, stop: int | None = None) -> float:
        """Least-squares slope of ``log ||s(t) - s*||`` over rows ``start:stop``."""
        err = self.profile_errors[start:stop]
        t = self.stages[start:stop]
        keep = err > 0
        if keep.sum() < 2:
            raise SeekingError("need at least two positive errors to fit a slope")
        return float(np.polyfit(t[keep], np.log(err[keep]), 1)[0])

    def to_csv(self, path):
        write_trajectory_csv(self, path)


@dataclass(frozen=True)
class _Dynamics:
    M: np.ndarray
    c: np.ndarray
    adj: np.ndarray
    deg: np.ndarray


def _dynamics(game: QuadraticGame, graph: Graph) -> _Dynamics:
    if game.n != graph.n:
        raise SeekingError(f"game has {game.n} agents but graph has {graph.n} nodes")
    mats = build_matrices(game)
    return _Dynamics(mats.M, mats.c, graph.adj, graph.degrees)


def _as_estimation(est, n: int) -> np.ndarray:
    arr = np.array(est, dtype=float)
    if arr.shape == (n * n,):
        arr = arr.reshape(n, n)
    if arr.shape != (n, n):
        raise SeekingError(f"estimations must have n^2 = {n * n} entries, got shape {arr.shape}")
    return arr


def init_state(game: QuadraticGame, graph: Graph, config: SeekingConfig, s_init, est_init) -> SeekingState:
    """Constant-history initial state.

    ``est_init`` is an ``n**2`` stack, an ``(n, n)`` array, or a list of the n
    per-agent estimate vectors.
    """
    n = game.n
    s0 = np.array(s_init, dtype=float)
    if s0.shape != (n,):
        raise SeekingError(f"initial profile must have length {n}")
    e0 = _as_estimation(est_init, n)
    tau = config.tau
    return init_state_from_history(game, graph, [s0] * (tau + 1), [e0] * tau)


def init_state_from_history(game: QuadraticGame, graph: Graph, strategies, estimations) -> SeekingState:
    """State from explicit histories ``s(-tau..0)`` and ``est(-tau..-1)``."""
    n = game.n
    if game.n != graph.n:
        raise SeekingError(f"game has {game.n} agents but graph has {graph.n} nodes")
    if not is_connected(graph):
        raise SeekingError("communication graph must be connected")
    strategies = [np.array(s, dtype=float) for s in strategies]
    estimations = [_as_estimation(e, n) for e in estimations]
    if len(estimations) < 1 or len(strategies) != len(estimations) + 1:
        raise SeekingError("need tau + 1 strategy profiles and tau estimation stacks")
    for s in strategies:
        if s.shape != (n,):
            raise SeekingError(f"strategy profiles must have length {n}")
    return SeekingState(tuple(strategies), tuple(estimations), 0)


def _step(dyn: _Dynamics, xi: float, state: SeekingState) -> SeekingState:
    s_old = state.strategies[0]
    e_old = state.estimations[0]
    e_prev = state.estimations[-1]
    consensus = dyn.adj @ e_old - dyn.deg[:, None] * e_old
    bias = dyn.adj * (s_old[None, :] - e_old)
    e_new = e_prev + xi * (consensus + bias)
    s_next = (dyn.M * e_new).sum(axis=1) + dyn.c
    return SeekingState(
        state.strategies[1:] + (s_next,),
        state.estimations[1:] + (e_new,),
        state.t + 1,
    )


def step(game: QuadraticGame, graph: Graph, config: SeekingConfig, state: SeekingState) -> SeekingState:
    """One estimation update followed by one strategy update."""
    if state.tau != config.tau:
        raise SeekingError(f"state window is for tau={state.tau}, config has tau={config.tau}")
    return _step(_dynamics(game, graph), config.xi, state)


def run(game: QuadraticGame, graph: Graph, config: SeekingConfig, state: SeekingState) -> Trajectory:
    """Iterate until ``||s(T) - s*|| <= delta``, blow-up, or ``max_stages``.

    ``s*`` is used for the error metrics only.
    """
    if state.tau != config.tau:
        raise SeekingError(f"state window is for tau={state.tau}, config has tau={config.tau}")
    dyn = _dynamics(game, graph)
    s_star = nash_equilibrium(game)
    J_star = _payoffs(game, s_star).sum()

    profiles = [state.current]
    ests = [state.latest_estimation] if config.record_estimations else None
    status = MAX_STAGES
    err = np.linalg.norm(state.current - s_star)
    if err <= config.termination_delta:
        status = CONVERGED
    else:
        for _ in range(config.max_stages):
            state = _step(dyn, config.xi, state)
            profiles.append(state.current)
            if ests is not None:
                ests.append(state.latest_estimation)
            err = np.linalg.norm(state.current - s_star)
            if err <= config.termination_delta:
                status = CONVERGED
                break
            if not np.isfinite(err) or err > config.blowup:
                status = DIVERGED
                break

    S = np.array(profiles)
    stages = np.arange(S.shape[0])
    agent_err = np.abs(S - s_star)
    prof_err = np.linalg.norm(S - s_star, axis=1)
    with np.errstate(over="ignore", invalid="ignore"):
        util_err = np.abs(np.einsum("ijk,tj,tk->t", game.A, S, S) * 0.5 + (S @ game.b.T).sum(axis=1)
                          + game.g.sum() - J_star)
    hit = np.flatnonzero(prof_err <= config.termination_delta)
    terminal = int(hit[0]) if hit.size else None
    log.debug("run finished: %s after %d stages", status, stages[-1])
    return Trajectory(
        stages=stages,
        strategies=S,
        equilibrium=s_star,
        agent_errors=agent_err,
        profile_errors=prof_err,
        utility_errors=util_err,
        status=status,
        terminal_stage=terminal,
        estimations=np.array(ests) if ests is not None else None,
        config=config,
    )


def simulate(game: QuadraticGame, graph: Graph, config: SeekingConfig, s_init, est_init) -> Trajectory:
    return run(game, graph, config, init_state(game, graph, config, s_init, est_init))


def _payoffs(game: QuadraticGame, s: np.ndarray) -> np.ndarray:
    return 0.5 * np.einsum("ijk,j,k->i", game.A, s, s) + game.b @ s + game.g


def split_initial(n: int) -> tuple[np.ndarray, np.ndarray]:
    """First ``ceil(n/2)`` agents start at -1, the rest at +1; each agent's
    estimate vector is constant at its own starting sign."""
    signs = np.where(np.arange(n) < (n + 1) // 2, -1.0, 1.0)
    return signs.copy(), np.repeat(signs[:, None], n, axis=1)


def default_initial(n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Generic seeded initial profile and estimate stack."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-1, 1, n), rng.uniform(-1, 1, (n, n))


def xi_max_by_simulation(game: QuadraticGame, graph: Graph, tau: int, width: float = 1e-3,
                         grid_step: float = 0.02, cap: float = 2.0, max_stages: int = 5000,
                         delta: float = 1e-4, s_init=None, est_init=None) -> float:
    """Largest learning rate for which simulated runs still converge.

    A grid scan finds the lowest non-converging ``xi``; bisection then narrows
    the bracket to ``width``.
    """
    if s_init is None or est_init is None:
        s_init, est_init = default_initial(game.n)
    base = SeekingConfig(xi=grid_step, tau=tau, max_stages=max_stages, termination_delta=delta)

    def converges(xi: float) -> bool:
        cfg = replace(base, xi=xi)
        return simulate(game, graph, cfg, s_init, est_init).converged

    lo, hi = 0.0, None
    for xi in np.arange(grid_step, cap + grid_step / 2, grid_step):
        if converges(float(xi)):
            lo = float(xi)
        else:
            hi = float(xi)
            break
    if hi is None:
        raise BracketError(f"every learning rate up to {cap} converged; no divergence onset found")
    if lo == 0.0:
        log.warning("smallest grid point %.3g already fails to converge", grid_step)
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if converges(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def trajectory_columns(n: int, with_estimations: bool) -> list[str]:
    cols = ["stage"]
    cols += [f"s_{i}" for i in range(1, n + 1)]
    cols += [f"err_{i}" for i in range(1, n + 1)]
    cols += ["profile_err", "utility_err"]
    if with_estimations:
        cols += [f"est_{i}_{j}" for i in range(1, n + 1) for j in range(1, n + 1)]
    return cols


def write_trajectory_csv(traj: Trajectory, path):
    """CSV with agents numbered from 1 and floats at 17 significant digits."""
    n = traj.strategies.shape[1]
    with_est = traj.estimations is not None
    fmt = "{:.17g}".format
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(trajectory_columns(n, with_est))
        for k, t in enumerate(traj.stages):
            row = [str(int(t))]
            row += [fmt(v) for v in traj.strategies[k]]
            row += [fmt(v) for v in traj.agent_errors[k]]
            row += [fmt(traj.profile_errors[k]), fmt(traj.utility_errors[k])]
            if with_est:
                row += [fmt(v) for v in traj.estimations[k].reshape(-1)]
            writer.writerow(row)
