"""Quadratic games: payoffs, best responses and the Nash equilibrium.

Agent ``i`` maximizes ``J_i(s) = 0.5 * s @ A_i @ s + b_i @ s + g_i`` over its own
scalar strategy ``s_i``. Agents are indexed from 0 in the Python API.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml


class GameError(ValueError):
    """Invalid game definition."""


class SingularGameError(GameError):
    """``I - M`` could not be solved for the equilibrium."""


@dataclass(frozen=True)
class QuadraticGame:
    """An n-agent quadratic game.

    Parameters
    ----------
    A : array, shape (n, n, n)
        ``A[i]`` is agent i's symmetric payoff curvature matrix.
    b : array, shape (n, n)
        ``b[i]`` is agent i's linear payoff vector.
    g : array, shape (n,), optional
        Payoff offsets; they never affect best responses.
    """

    A: np.ndarray
    b: np.ndarray
    g: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float)
        if A.ndim != 3 or A.shape[1] != A.shape[0] or A.shape[2] != A.shape[0]:
            raise GameError(f"A must have shape (n, n, n), got {A.shape}")
        n = A.shape[0]
        if n < 1:
            raise GameError("game needs at least one agent")
        if b.shape != (n, n):
            raise GameError(f"b must have shape ({n}, {n}), got {b.shape}")
        g = np.zeros(n) if self.g is None else np.array(self.g, dtype=float)
        if g.shape != (n,):
            raise GameError(f"g must have shape ({n},), got {g.shape}")
        for i in range(n):
            if not np.array_equal(A[i], A[i].T):
                raise GameError(f"A[{i}] is not symmetric")
            if not A[i, i, i] < 0:
                raise GameError(f"agent {i}: own curvature A[{i}][{i},{i}] must be negative")
        for arr in (A, b, g):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "g", g)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def own_curvature(self) -> np.ndarray:
        """``a^i_{ii}`` for every agent."""
        idx = np.arange(self.n)
        return self.A[idx, idx, idx]

    def dominance_margins(self) -> np.ndarray:
        """``|a^i_ii| - sum_{j != i} |a^i_ij|`` per agent."""
        idx = np.arange(self.n)
        rows = np.abs(self.A[idx, idx, :])
        return 2 * rows[idx, idx] - rows.sum(axis=1)

    @property
    def certified(self) -> bool:
        """True when every agent's payoff row is strictly diagonally dominant."""
        return bool(np.all(self.dominance_margins() > 0))

    @classmethod
    def from_rows(cls, diag, offdiag, b_common, g=None) -> "QuadraticGame":
        """Build a game from the compact generator form.

        ``A_i`` holds ``diag[i]`` at ``(i, i)`` and ``offdiag[i]`` in the rest of
        row and column ``i``; all other entries are zero. Every agent uses the
        linear term ``b_common``.
        """
        diag = np.asarray(diag, dtype=float)
        n = diag.shape[0]
        off = np.broadcast_to(np.asarray(offdiag, dtype=float), (n,))
        bc = np.asarray(b_common, dtype=float)
        if bc.shape != (n,):
            raise GameError(f"b_common must have length {n}")
        A = np.zeros((n, n, n))
        for i in range(n):
            A[i, i, :] = off[i]
            A[i, :, i] = off[i]
            A[i, i, i] = diag[i]
        return cls(A, np.tile(bc, (n, 1)), g)


@dataclass(frozen=True)
class GameMatrices:
    """Best-response dynamics data: ``s(t+1) = M s(t) + c`` and the block row map ``N``."""

    M: np.ndarray
    c: np.ndarray
    N: np.ndarray


def payoff(game: QuadraticGame, s, i: int) -> float:
    s = _profile(game, s)
    _check_agent(game, i)
    return float(0.5 * s @ game.A[i] @ s + game.b[i] @ s + game.g[i])


def total_payoff(game: QuadraticGame, s) -> float:
    return sum(payoff(game, s, i) for i in range(game.n))


def best_response(game: QuadraticGame, i: int, s) -> float:
    """Maximizer of ``J_i`` over agent i's coordinate.

    ``s`` is either the full profile (slot i is ignored) or the n-1 strategies
    of the other agents in index order.
    """
    _check_agent(game, i)
    s = np.asarray(s, dtype=float)
    if s.shape == (game.n - 1,):
        s = np.insert(s, i, 0.0)
    s = _profile(game, s)
    row = game.A[i, i]
    cross = row @ s - row[i] * s[i]
    return float(-(cross + game.b[i, i]) / row[i])


def build_matrices(game: QuadraticGame) -> GameMatrices:
    n = game.n
    aii = game.own_curvature
    rows = game.A[np.arange(n), np.arange(n), :]
    M = -rows / aii[:, None]
    np.fill_diagonal(M, 0.0)
    c = -np.diag(game.b) / aii
    N = np.zeros((n, n * n))
    for i in range(n):
        N[i, i * n:(i + 1) * n] = M[i]
    return GameMatrices(M, c, N)


def nash_equilibrium(game: QuadraticGame) -> np.ndarray:
    """Solve ``(I - M) s = c`` with a dense LU factorization."""
    if not game.certified:
        raise GameError("game is not strictly diagonally dominant; the equilibrium is not guaranteed")
    mats = build_matrices(game)
    K = np.eye(game.n) - mats.M
    try:
        s = np.linalg.solve(K, mats.c)
    except np.linalg.LinAlgError as exc:
        raise SingularGameError(f"I - M is singular (condition number {np.linalg.cond(K):.3e})") from exc
    if not np.all(np.isfinite(s)):
        raise SingularGameError(f"I - M is ill-conditioned (condition number {np.linalg.cond(K):.3e})")
    return s


def verify_nash(game: QuadraticGame, s, tol: float = 1e-9) -> tuple[bool, np.ndarray]:
    """Return ``(ok, residuals)`` with ``residuals[i] = |BR_i(s_-i) - s_i|``."""
    s = _profile(game, s)
    res = np.array([abs(best_response(game, i, s) - s[i]) for i in range(game.n)])
    return bool(np.all(res <= tol)), res


def run_full_info(game: QuadraticGame, s0, stages: int) -> np.ndarray:
    """Iterate ``s(t+1) = M s(t) + c``; returns the ``(stages + 1, n)`` trajectory."""
    mats = build_matrices(game)
    out = np.empty((stages + 1, game.n))
    out[0] = _profile(game, s0)
    for t in range(stages):
        out[t + 1] = mats.M @ out[t] + mats.c
    return out


def _profile(game: QuadraticGame, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape != (game.n,):
        raise GameError(f"strategy profile must have length {game.n}, got shape {s.shape}")
    return s


def _check_agent(game: QuadraticGame, i: int):
    if not 0 <= i < game.n:
        raise IndexError(f"agent index {i} out of range for {game.n} agents")


# --- presets -----------------------------------------------------------------

EXAMPLE1_DIAG = (-5.0, -4.0, -8.0, -2.0, -3.0)
EXAMPLE1_OFFDIAG = (-1.0, -0.8, -1.5, -0.4, -0.5)
EXAMPLE3_DIAG = tuple(-float(v) for v in (
    43, 27, 35, 41, 47, 49, 36, 24, 24, 27, 46, 27, 45, 27, 48, 30, 26, 27, 39, 34))


def example1() -> QuadraticGame:
    """The five-agent game played over a wheel graph."""
    return QuadraticGame.from_rows(EXAMPLE1_DIAG, EXAMPLE1_OFFDIAG, np.arange(1.0, 6.0))


def example3(n: int = 20) -> QuadraticGame:
    """The 20-agent game; ``n < 20`` keeps the first n agents (same pattern)."""
    if not 1 <= n <= len(EXAMPLE3_DIAG):
        raise GameError(f"example3 supports 1..{len(EXAMPLE3_DIAG)} agents")
    return QuadraticGame.from_rows(EXAMPLE3_DIAG[:n], 1.0, np.arange(1.0, n + 1.0))


def random_game(n: int, seed: int = 0, margin: float = 0.2) -> QuadraticGame:
    """Random game whose rows are strictly diagonally dominant.

    Every ``A_i`` is a dense random symmetric matrix; row ``i`` is rescaled so
    that the cross terms sum to at most ``1 - margin`` times ``|a^i_ii|``.
    """
    rng = np.random.default_rng(seed)
    A = np.empty((n, n, n))
    for i in range(n):
        X = rng.normal(size=(n, n))
        Ai = (X + X.T) / 2
        aii = -rng.uniform(1.0, 5.0)
        cross = rng.normal(size=n)
        cross[i] = 0.0
        weight = np.abs(cross).sum()
        if weight > 0:
            cross *= rng.uniform(0.0, 1.0 - margin) * abs(aii) / weight
        Ai[i, :] = cross
        Ai[:, i] = cross
        Ai[i, i] = aii
        A[i] = Ai
    b = rng.normal(size=(n, n))
    g = rng.normal(size=n)
    return QuadraticGame(A, b, g)


def preset(name: str) -> QuadraticGame:
    """Resolve ``example1``, ``example3``, ``example3:N`` or ``random:N[:SEED]``."""
    head, _, rest = name.partition(":")
    if head == "example1" and not rest:
        return example1()
    if head == "example3":
        return example3(int(rest) if rest else 20)
    if head == "random" and rest:
        parts = rest.split(":")
        return random_game(int(parts[0]), int(parts[1]) if len(parts) > 1 else 0)
    raise GameError(f"unknown game preset {name!r}")


# --- files -------------------------------------------------------------------

def game_from_dict(doc: dict) -> QuadraticGame:
    if not isinstance(doc, dict):
        raise GameError("game document must be a mapping")
    if "diag" in doc:
        missing = {"offdiag", "b_common"} - doc.keys()
        if missing:
            raise GameError(f"compact game form is missing {sorted(missing)}")
        game = QuadraticGame.from_rows(doc["diag"], doc["offdiag"], doc["b_common"], doc.get("g"))
    else:
        missing = {"A", "b"} - doc.keys()
        if missing:
            raise GameError(f"game document is missing {sorted(missing)}")
        game = QuadraticGame(doc["A"], doc["b"], doc.get("g"))
    if "n" in doc and int(doc["n"]) != game.n:
        raise GameError(f"n = {doc['n']} does not match the {game.n} agents defined")
    return game


def load_game(path) -> QuadraticGame:
    """Read a YAML (or JSON) game file."""
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise GameError(f"{path}: {exc}") from exc
    try:
        return game_from_dict(doc)
    except GameError as exc:
        raise GameError(f"{path}: {exc}") from exc


def save_game(game: QuadraticGame, path):
    doc = {
        "n": game.n,
        "A": game.A.tolist(),
        "b": game.b.tolist(),
        "g": game.g.tolist(),
    }
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False))


def resolve_game(source: str) -> QuadraticGame:
    """A preset name or a path to a game file."""
    if Path(source).is_file():
        return load_game(source)
    return preset(source)

