import numpy as np
import pytest

from homf.sparse import from_dense, row_normalize

ACCEPTANCE_LOG: list[tuple[str, bool, str]] = []


def record(name: str, ok: bool, detail: str = "") -> None:
    ACCEPTANCE_LOG.append((name, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LOG:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_LOG:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


def dense_walk_poly(A: np.ndarray, T: int) -> np.ndarray:
    """(A + A^2 + ... + A^T) / T by explicit matrix powers."""
    acc = np.zeros_like(A)
    P = np.eye(A.shape[0])
    for _ in range(T):
        P = P @ A
        acc += P
    return acc / T


def random_stochastic(rng, n: int, density: float):
    """Sparse non-negative matrix, row-normalized (zero rows get self-loops)."""
    G = rng.uniform(0.1, 1.0, (n, n)) * (rng.random((n, n)) < density)
    return row_normalize(from_dense(G))


def random_symmetric_tpm(rng, n: int, density: float, connect: bool = True):
    """Transition matrix of a random undirected weighted graph (real spectrum)."""
    G = rng.uniform(0.1, 1.0, (n, n)) * (rng.random((n, n)) < density)
    G = np.triu(G, 1)
    if connect:
        ring = np.arange(n)
        G[ring, (ring + 1) % n] += rng.uniform(0.1, 1.0, n)
    G = G + G.T
    return row_normalize(from_dense(G))


def dense_objective(F: np.ndarray, U: np.ndarray, V: np.ndarray, lam: float) -> float:
    """1/2 ||P_Omega(F - U V^T)||_F^2 + lam (||U||^2 + ||V||^2), Omega = nonzeros of F."""
    R = (F - U @ V.T) * (F != 0)
    return 0.5 * float(np.sum(R * R)) + lam * (float(np.sum(U * U)) + float(np.sum(V * V)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
