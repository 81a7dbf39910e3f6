"""Stability analysis of the delayed seeking dynamics.

The stacked state ``x(t) = (1 kron s(t), est(t))`` of dimension ``2 n**2``
obeys ``x(t) = H1 x(t-1) + H2 x(t-tau) + c_bar``. Its exact convergence test
is the spectral radius of the delay-unrolled companion matrix; the bounds
``delta1``/``delta2`` and the Lyapunov-Krasovskii LMI are sufficient tests.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .game import QuadraticGame, build_matrices
from .topology import Graph, build_estimation_matrices, is_connected, laplacian

log = logging.getLogger(__name__)

EIG_CAP_ENV = "NASHDELAY_EIG_CAP"
DEFAULT_EIG_CAP = 8000

CONVERGES = "converges"
DIVERGES = "diverges"
MARGINAL = "marginal"


class StabilityError(ValueError):
    pass


class DimensionCapError(StabilityError):
    pass


class EigenSolverError(StabilityError):
    pass


def eig_cap() -> int:
    return int(os.environ.get(EIG_CAP_ENV, DEFAULT_EIG_CAP))


@dataclass(frozen=True)
class AugmentedSystem:
    H1: np.ndarray
    H2: np.ndarray
    c_bar: np.ndarray
    tau: int
    xi: float

    @property
    def dim(self) -> int:
        return self.H1.shape[0]


def _check_pair(game: QuadraticGame, graph: Graph):
    if game.n != graph.n:
        raise StabilityError(f"game has {game.n} agents but graph has {graph.n} nodes")


def build_augmented(game: QuadraticGame, graph: Graph, xi: float, tau: int = 1) -> AugmentedSystem:
    _check_pair(game, graph)
    n = game.n
    m = n * n
    mats = build_matrices(game)
    est = build_estimation_matrices(graph)
    Z = np.zeros((m, m))
    top = np.kron(np.ones((n, 1)), mats.N)
    H1 = np.block([[Z, top], [Z, np.eye(m)]])
    H2 = xi * np.block([[Z, Z], [est.B, est.P]])
    c_bar = np.concatenate([np.tile(mats.c, n), np.zeros(m)])
    return AugmentedSystem(H1, H2, c_bar, tau, xi)


def build_H(game: QuadraticGame, graph: Graph, xi: float) -> np.ndarray:
    """One-step-delay system matrix ``[[0, 1 kron N], [xi B, I + xi P]]``."""
    _check_pair(game, graph)
    n = game.n
    m = n * n
    mats = build_matrices(game)
    est = build_estimation_matrices(graph)
    H = np.zeros((2 * m, 2 * m))
    H[:m, m:] = np.kron(np.ones((n, 1)), mats.N)
    H[m:, :m] = xi * est.B
    H[m:, m:] = np.eye(m) + xi * est.P
    return H


def spectral_radius(A) -> float:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise StabilityError(f"spectral radius needs a square matrix, got shape {A.shape}")
    cap = eig_cap()
    if A.shape[0] > cap:
        raise DimensionCapError(f"matrix of size {A.shape[0]} exceeds the eigensolver cap {cap} (set {EIG_CAP_ENV})")
    if not np.all(np.isfinite(A)):
        raise EigenSolverError("matrix has non-finite entries")
    try:
        lam = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(f"eigenvalue computation failed: {exc}") from exc
    return float(np.max(np.abs(lam))) if lam.size else 0.0


def companion_system(H1, H2, tau: int) -> np.ndarray:
    """Delay-free form of ``x(t) = H1 x(t-1) + H2 x(t-tau)``.

    State ``(x(t-1), ..., x(t-tau))``; for ``tau = 1`` this is ``H1 + H2``.
    """
    if tau < 1:
        raise StabilityError(f"delay step must be >= 1, got {tau}")
    H1 = np.asarray(H1, dtype=float)
    H2 = np.asarray(H2, dtype=float)
    d = H1.shape[0]
    size = d * tau
    if size > eig_cap():
        raise DimensionCapError(f"companion matrix of size {size} exceeds the eigensolver cap {eig_cap()} (set {EIG_CAP_ENV})")
    if tau == 1:
        return H1 + H2
    C = np.zeros((size, size))
    C[:d, :d] = H1
    C[:d, -d:] = H2
    C[d:, :-d] = np.eye(d * (tau - 1))
    return C


def companion_radius(game: QuadraticGame, graph: Graph, xi: float, tau: int) -> float:
    sys_ = build_augmented(game, graph, xi, tau)
    return spectral_radius(companion_system(sys_.H1, sys_.H2, tau))


def verdict(rho: float, tol: float = 1e-9) -> str:
    if rho < 1 - tol:
        return CONVERGES
    if rho > 1 + tol:
        return DIVERGES
    return MARGINAL


# --- learning-rate bounds -------------------------------------------------------

def _int_laplacian(graph: Graph) -> np.ndarray:
    return laplacian(graph).astype(int)


def delta1_exact(graph: Graph) -> Fraction:
    """``min_{i,j} 1 / (alpha_ij + L_ii)`` as an exact fraction."""
    L = _int_laplacian(graph)
    adj = graph.adj.astype(int)
    return min(Fraction(1, int(adj[i, j] + L[i, i]))
               for i in range(graph.n) for j in range(graph.n) if adj[i, j] + L[i, i] > 0)


def delta2_exact(graph: Graph) -> Fraction:
    """``3 n**2 / ((n + 1) tr(L))`` as an exact fraction."""
    n = graph.n
    trace = int(np.trace(_int_laplacian(graph)))
    if trace == 0:
        raise StabilityError("graph has no edges")
    return Fraction(3 * n * n, (n + 1) * trace)


def delta1(graph: Graph) -> float:
    """Learning-rate bound below which one-step-delay seeking converges."""
    if not is_connected(graph):
        raise StabilityError("delta1 needs a connected graph")
    return float(delta1_exact(graph))


def delta2(graph: Graph) -> float:
    """Learning-rate bound above which one-step-delay seeking is unstable."""
    if not is_connected(graph):
        raise StabilityError("delta2 needs a connected graph")
    return float(delta2_exact(graph))


# closed forms for the named topologies, n nodes
CLOSED_FORMS = {
    "ring": (lambda n: Fraction(1, 3), lambda n: Fraction(3 * n, 2 * (n + 1))),
    "complete": (lambda n: Fraction(1, n), lambda n: Fraction(3 * n, n * n - 1)),
    "star": (lambda n: Fraction(1, n), lambda n: Fraction(3 * n * n, 2 * (n * n - 1))),
    "wheel": (lambda n: Fraction(1, n), lambda n: Fraction(3 * n * n, 4 * (n * n - 1))),
}


def xi_max_by_spectrum(game: QuadraticGame, graph: Graph, tau: int, width: float = 1e-3,
                       grid_step: float = 0.01, cap: float = 2.0) -> float:
    """Smallest learning rate where the companion spectral radius reaches 1."""
    if not is_connected(graph):
        raise StabilityError("xi_max needs a connected graph")

    def excess(xi: float) -> float:
        return companion_radius(game, graph, xi, tau) - 1.0

    lo, hi = 0.0, None
    for xi in np.arange(grid_step, cap + grid_step / 2, grid_step):
        if excess(float(xi)) < 0:
            lo = float(xi)
        else:
            hi = float(xi)
            break
    if hi is None:
        raise StabilityError(f"spectral radius stays below 1 for every learning rate up to {cap}")
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --- Lyapunov-Krasovskii LMI ------------------------------------------------------

@dataclass(frozen=True)
class DelayLMIBlocks:
    """Constant matrices of the delay LMI ``F(tau, xi) < 0``.

    ``F = E2' Q1 E2 - E1' Q1 E1 + diag(Q2, -Q2, 0) + D' W(Q3) D`` with
    ``W = diag((tau-1) Q3, Q3 / (1-tau), -3 tau / (tau^2 - 3 tau + 2) Q3)``.
    """

    E1: np.ndarray
    E2: np.ndarray
    D: np.ndarray
    tau: int
    xi: float

    @property
    def d(self) -> int:
        """Size of ``Q2`` and ``Q3`` (the stacked state dimension)."""
        return self.D.shape[0] // 3

    @property
    def weights(self) -> tuple[float, float, float]:
        t = self.tau
        return (t - 1.0, 1.0 / (1.0 - t), -3.0 * t / (t * t - 3 * t + 2))

    def F(self, Q1, Q2, Q3) -> np.ndarray:
        d = self.d
        F = self.E2.T @ Q1 @ self.E2 - self.E1.T @ Q1 @ self.E1
        F[:d, :d] += Q2
        F[d:2 * d, d:2 * d] -= Q2
        w = self.weights
        DQ = np.vstack([w[k] * (Q3 @ self.D[k * d:(k + 1) * d]) for k in range(3)])
        F += self.D.T @ DQ
        return 0.5 * (F + F.T)

    def gradients(self, V) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Adjoint of ``(Q1, Q2, Q3) -> F`` applied to ``V``: gradients of ``<F, V>``."""
        d = self.d
        g1 = self.E2 @ V @ self.E2.T - self.E1 @ V @ self.E1.T
        g2 = V[:d, :d] - V[d:2 * d, d:2 * d]
        DV = self.D @ V @ self.D.T
        w = self.weights
        g3 = sum(w[k] * DV[k * d:(k + 1) * d, k * d:(k + 1) * d] for k in range(3))
        return _sym(g1), _sym(g2), _sym(g3)


def _sym(X):
    return 0.5 * (X + X.T)


def delay_lmi_blocks(game: QuadraticGame, graph: Graph, tau: int, xi: float) -> DelayLMIBlocks:
    if tau < 2:
        raise StabilityError(
            "the delay LMI needs tau >= 2: for tau = 1 the lower limits of the functional's sums "
            "exceed their upper limits; use the one-step-delay bounds instead")
    if tau == 2:
        raise StabilityError("the delay LMI weight -3 tau / (tau^2 - 3 tau + 2) is singular at tau = 2")
    if xi <= 0:
        raise StabilityError("learning rate must be positive")
    sys_ = build_augmented(game, graph, xi, tau)
    d = sys_.dim
    if 6 * d > eig_cap():
        raise DimensionCapError(f"LMI of size {6 * d} exceeds the eigensolver cap {eig_cap()}")
    I = np.eye(d)
    Z = np.zeros((d, d))
    E1 = np.block([[I, Z, Z], [-I, Z, I]])
    E2 = np.block([[sys_.H1, sys_.H2, Z], [Z, -I, I]])
    D = np.block([[sys_.H1 - I, sys_.H2, Z], [I, -I, Z], [I, I, -(2.0 / tau) * I]])
    return DelayLMIBlocks(E1, E2, D, tau, xi)


@dataclass(frozen=True)
class LMIResult:
    ok: bool
    f_margin: float
    q_margin: float

    def __bool__(self):
        return self.ok


def lmi_verify(blocks: DelayLMIBlocks, Q1, Q2, Q3, tol: float = 1e-9) -> LMIResult:
    """Check ``Q1, Q2, Q3 > 0`` and ``F < 0``.

    ``f_margin`` is the largest eigenvalue of ``F`` and ``q_margin`` the
    smallest eigenvalue over the three ``Q`` matrices.
    """
    d = blocks.d
    Q1, Q2, Q3 = (np.asarray(Q, dtype=float) for Q in (Q1, Q2, Q3))
    for name, Q, size in (("Q1", Q1, 2 * d), ("Q2", Q2, d), ("Q3", Q3, d)):
        if Q.shape != (size, size):
            raise StabilityError(f"{name} must be {size}x{size}, got {Q.shape}")
    q_margin = min(float(np.linalg.eigvalsh(_sym(Q))[0]) for Q in (Q1, Q2, Q3))
    f_margin = float(np.linalg.eigvalsh(blocks.F(Q1, Q2, Q3))[-1])
    return LMIResult(q_margin > tol and f_margin < -tol, f_margin, q_margin)


@dataclass
class SearchResult:
    found: bool
    iterations: int
    f_margin: float
    Q: tuple | None = field(default=None, repr=False)


def _floor(Q, floor):
    lam, U = np.linalg.eigh(_sym(Q))
    return (U * np.maximum(lam, floor)) @ U.T


def feasibility_search(blocks: DelayLMIBlocks, budget: int = 5000, seed: int = 0, lr: float = 0.05,
                       sharpness: float = 20.0, target: float = 1e-3, floor: float = 1.0) -> SearchResult:
    """Best-effort search for ``Q1, Q2, Q3`` making ``F`` negative definite.

    First-order descent (Adam steps) on a soft maximum of the eigenvalues of
    ``F``, with every ``Q`` projected back to eigenvalues ``>= floor``. Since
    ``F`` is linear in the ``Q``s, a feasible point scaled up keeps the floor,
    so the objective is unbounded below exactly when the LMI is strictly
    feasible. A failure says nothing about infeasibility.
    """
    rng = np.random.default_rng(seed)
    d = blocks.d
    Q = []
    for size in (2 * d, d, d):
        X = rng.normal(scale=1e-3, size=(size, size))
        Q.append(_floor(np.eye(size) + _sym(X), floor))
    m = [np.zeros_like(q) for q in Q]
    v = [np.zeros_like(q) for q in Q]
    b1, b2 = 0.9, 0.999
    best = np.inf
    for it in range(1, budget + 1):
        lam, U = np.linalg.eigh(blocks.F(*Q))
        top = lam[-1]
        best = min(best, top)
        if top < -target:
            res = lmi_verify(blocks, *Q)
            if res.ok:
                log.info("LMI certificate found after %d iterations (max eig %.3e)", it, top)
                return SearchResult(True, it, res.f_margin, tuple(Q))
        p = np.exp(sharpness * (lam - top))
        p /= p.sum()
        G = blocks.gradients((U * p) @ U.T)
        for k in range(3):
            m[k] = b1 * m[k] + (1 - b1) * G[k]
            v[k] = b2 * v[k] + (1 - b2) * G[k] ** 2
            mhat = m[k] / (1 - b1 ** it)
            vhat = v[k] / (1 - b2 ** it)
            Q[k] = _floor(Q[k] - lr * mhat / (np.sqrt(vhat) + 1e-12), floor)
    log.info("LMI search exhausted its budget of %d iterations (best max eig %.3e)", budget, best)
    return SearchResult(False, budget, float(best))


# --- report -------------------------------------------------------------------

@dataclass
class StabilityReport:
    n: int
    tau: int
    xi: float
    delta1: float
    delta2: float
    rho_companion: float
    verdict: str
    rho_H: float | None = None
    lmi: str = "not-run"
    lmi_margin: float | None = None
    certificate: tuple | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        doc = {
            "n": self.n,
            "tau": self.tau,
            "xi": self.xi,
            "delta1": self.delta1,
            "delta2": self.delta2,
            "rho_H": self.rho_H,
            "rho_companion": self.rho_companion,
            "verdict": self.verdict,
            "lmi": self.lmi,
            "lmi_margin": self.lmi_margin,
        }
        if self.certificate is not None:
            doc["certificate"] = {name: Q.tolist() for name, Q in zip(("Q1", "Q2", "Q3"), self.certificate)}
        return doc


def analyze(game: QuadraticGame, graph: Graph, xi: float, tau: int, lmi: bool = False,
            budget: int = 5000, seed: int = 0, tol: float = 1e-9) -> StabilityReport:
    """Bounds, spectral radii, verdict and (optionally) the LMI search."""
    sys_ = build_augmented(game, graph, xi, tau)
    rho_c = spectral_radius(companion_system(sys_.H1, sys_.H2, tau))
    report = StabilityReport(
        n=game.n, tau=tau, xi=xi,
        delta1=delta1(graph), delta2=delta2(graph),
        rho_companion=rho_c, verdict=verdict(rho_c, tol),
        rho_H=spectral_radius(sys_.H1 + sys_.H2) if tau == 1 else None,
    )
    if tau < 3:
        report.lmi = f"not-applicable(tau={tau})"
    elif lmi:
        blocks = delay_lmi_blocks(game, graph, tau, xi)
        res = feasibility_search(blocks, budget=budget, seed=seed)
        report.lmi_margin = res.f_margin
        if res.found:
            report.lmi = "feasible"
            report.certificate = res.Q
        else:
            report.lmi = "search-failed"
    return report
