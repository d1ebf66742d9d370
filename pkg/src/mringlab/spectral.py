"""Second eigenvalues, tensor spectra, mixing and interlacing checks."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainError, NormalityRequiredError, ResourceLimitError
from .graphs import RegularGraph, common_neighbors_batch

DENSE_LIMIT = 7_000
ITERATIVE_LIMIT = 10**6
JACOBI_LIMIT = 1_000


@dataclass
class SpectralReport:
    family: str
    q: int
    n: int
    d: int
    lambda2: float
    method: str
    tolerance: float
    claimed_bound: float | None = None
    ratio: float | None = None
    runtime_ms: float | None = None
    normality: str = "n/a"
    spectrum: np.ndarray | None = field(default=None, repr=False)

    def with_bound(self, bound: float | None) -> SpectralReport:
        self.claimed_bound = bound
        self.ratio = None if not bound else self.lambda2 / bound
        return self

    def to_dict(self, timing: bool = True) -> dict:
        out = asdict(self)
        out.pop("spectrum")
        out.pop("normality")
        if not timing:
            out["runtime_ms"] = None
        return out

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True)


# -- dense symmetric solvers ------------------------------------------------------
def jacobi_eigenvalues(a, tol: float = 1e-10, max_sweeps: int = 100) -> np.ndarray:
    """Cyclic Jacobi with round-robin ordering; stops once off(A) < tol * ||A||_F.

    Each round applies n/2 disjoint rotations at once, so a sweep is n - 1
    vectorised rounds.  Returns eigenvalues sorted descending.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if n > JACOBI_LIMIT:
        raise ResourceLimitError(f"jacobi solver limited to n <= {JACOBI_LIMIT}")
    if not np.allclose(a, a.T):
        raise DomainError("jacobi_eigenvalues needs a symmetric matrix")
    if n < 2:
        return np.sort(np.diag(a))[::-1]
    fro = np.linalg.norm(a)
    m = n + (n % 2)
    players = list(range(m))
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off <= tol * fro:
            break
        for _ in range(m - 1):
            pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
            pairs = [(min(p, r), max(p, r)) for p, r in pairs if p < n and r < n]
            p = np.array([x for x, _ in pairs])
            r = np.array([y for _, y in pairs])
            apq = a[p, r]
            active = np.abs(apq) > 1e-18 * fro
            p, r, apq = p[active], r[active], apq[active]
            if len(p):
                theta = (a[r, r] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta**2 + 1.0))
                t[theta == 0] = 1.0
                c = 1.0 / np.sqrt(t**2 + 1.0)
                s = t * c
                # A <- P^t A P with P_pp = P_rr = c, P_pr = s, P_rp = -s
                c_, s_ = c[:, None], s[:, None]
                rp, rr = a[p, :].copy(), a[r, :].copy()
                a[p, :] = c_ * rp - s_ * rr
                a[r, :] = s_ * rp + c_ * rr
                cp, cr = a[:, p].copy(), a[:, r].copy()
                a[:, p] = cp * c - cr * s
                a[:, r] = cp * s + cr * c
            players = [players[0]] + [players[-1]] + players[1:-1]
        a = (a + a.T) / 2
    else:
        raise ConvergenceError("jacobi did not converge", off / fro)
    return np.sort(np.diag(a))[::-1]


def dense_spectrum(matrix) -> np.ndarray:
    """Full symmetric spectrum, descending (LAPACK)."""
    return np.linalg.eigvalsh(np.asarray(matrix, dtype=np.float64))[::-1]


# -- iterative --------------------------------------------------------------------------
def orthogonal_iteration(matvec, n: int, block: int = 8, tol: float = 1e-8, max_iter: int = 10_000, seed: int = 0) -> float:
    """Largest eigenvalue of a PSD operator restricted to the complement of the all-ones vector."""
    rng = np.random.default_rng(seed)
    ones = np.ones(n) / math.sqrt(n)
    block = min(block, n - 1)

    def project(x):
        return x - np.outer(ones, ones @ x)

    x, _ = np.linalg.qr(project(rng.standard_normal((n, block))))
    residual = math.inf
    for _ in range(max_iter):
        y = project(matvec(x))
        h = x.T @ y
        w, v = np.linalg.eigh((h + h.T) / 2)
        top = w[-1]
        ritz = x @ v[:, -1]
        residual = np.linalg.norm(project(matvec(ritz[:, None]))[:, 0] - top * ritz) / max(abs(top), 1e-300)
        if residual < tol:
            return float(top)
        x, _ = np.linalg.qr(y)
    raise ConvergenceError(f"orthogonal iteration hit the {max_iter}-iteration cap", residual)


def _normality_state(g: RegularGraph) -> str:
    if g.n <= 2_000:
        m = g.matrix(np.float32)
        return "normal" if np.array_equal(m @ m.T, m.T @ m) else "not-normal"
    rng = np.random.default_rng(0)
    us = rng.integers(0, g.n, 4_000)
    vs = (us + rng.integers(1, g.n, 4_000)) % g.n
    same = common_neighbors_batch(g, us, vs, "out") == common_neighbors_batch(g, us, vs, "in")
    return "normal-sampled" if same.all() else "not-normal"


def second_eigenvalue(
    g: RegularGraph,
    method: str = "auto",
    assume_normal: bool = False,
    claimed_bound: float | None = None,
    keep_spectrum: bool = False,
) -> SpectralReport:
    """lambda(G): largest non-principal |eigenvalue| for graphs, via MM^t for digraphs.

    For a digraph, normality is checked first; a non-normal digraph raises
    unless ``assume_normal`` is set, in which case the reported value is the
    second singular value and ``normality`` records the violation.
    """
    start = time.perf_counter()
    d = g.degree
    n = g.n
    normality = "n/a"
    if g.directed:
        normality = _normality_state(g)
        if normality == "not-normal" and not assume_normal:
            raise NormalityRequiredError(f"{g.spec.name} is not normal; pass assume_normal to use MM^t anyway")
    if method == "auto":
        method = ("via-mmt" if g.directed else "dense-full") if n <= DENSE_LIMIT else "iterative-extreme"
    spectrum = None
    tol = 1e-9 * max(d, 1)
    if method in ("dense-full", "jacobi"):
        if g.directed:
            raise DomainError("dense-full needs an undirected graph; use via-mmt")
        if n > (DENSE_LIMIT if method == "dense-full" else JACOBI_LIMIT):
            raise ResourceLimitError(f"{method} limited to n <= {DENSE_LIMIT}")
        a = g.matrix()
        spectrum = dense_spectrum(a) if method == "dense-full" else jacobi_eigenvalues(a)
        deflated = (dense_spectrum if method == "dense-full" else jacobi_eigenvalues)(a - d / n)
        lam = float(np.max(np.abs(deflated)))
    elif method == "via-mmt":
        if n > DENSE_LIMIT:
            raise ResourceLimitError(f"via-mmt limited to n <= {DENSE_LIMIT}")
        m = g.matrix(np.float32)
        mmt = (m @ m.T).astype(np.float64)
        ev = dense_spectrum(mmt - (d * d) / n)
        lam = math.sqrt(max(float(ev[0]), 0.0))
        tol = 1e-6
        if keep_spectrum:
            spectrum = np.sqrt(np.clip(dense_spectrum(mmt), 0, None))
    elif method == "iterative-extreme":
        if n > ITERATIVE_LIMIT:
            raise ResourceLimitError(f"iterative-extreme limited to n <= {ITERATIVE_LIMIT}")
        s = g.sparse()
        st = s.T.tocsr()
        if g.directed:
            op = lambda x: s @ (st @ x)  # noqa: E731
        else:
            op = lambda x: s @ (s @ x)  # noqa: E731
        lam = math.sqrt(max(orthogonal_iteration(op, n), 0.0))
        tol = 1e-8 * max(d, 1)
    else:
        raise DomainError(f"unknown method {method!r}")
    report = SpectralReport(
        family=g.spec.name,
        q=g.spec.q,
        n=n,
        d=d,
        lambda2=lam,
        method=method,
        tolerance=tol,
        runtime_ms=(time.perf_counter() - start) * 1e3,
        normality=normality,
        spectrum=spectrum if keep_spectrum or spectrum is not None else None,
    )
    return report.with_bound(claimed_bound)


def full_spectrum(g: RegularGraph) -> np.ndarray:
    if g.directed:
        raise DomainError("full_spectrum needs an undirected graph")
    if g.n > DENSE_LIMIT:
        raise ResourceLimitError(f"full spectra limited to n <= {DENSE_LIMIT}")
    return dense_spectrum(g.matrix())


def nonprincipal_lambda(spectrum, d: float) -> float:
    """max |eigenvalue| after removing one copy of the principal value d."""
    s = np.asarray(spectrum, dtype=np.float64)
    k = int(np.argmin(np.abs(s - d)))
    rest = np.delete(s, k)
    return float(np.max(np.abs(rest))) if rest.size else 0.0


def tensor_spectrum(spec_a, spec_b) -> np.ndarray:
    """Multiset of pairwise products, sorted descending."""
    if spec_a is None or spec_b is None:
        raise DomainError("tensor_spectrum needs two full spectra")
    a = np.asarray(getattr(spec_a, "spectrum", spec_a), dtype=np.float64)
    b = np.asarray(getattr(spec_b, "spectrum", spec_b), dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise DomainError("tensor_spectrum needs two full spectra")
    return np.sort(np.outer(a, b).ravel())[::-1]


def spectra_match(x, y, tol: float) -> bool:
    x, y = np.sort(np.asarray(x)), np.sort(np.asarray(y))
    return x.shape == y.shape and bool(np.max(np.abs(x - y), initial=0.0) <= tol)


@dataclass
class MixingResult:
    e: int
    expected: float
    deviation: float
    bound: float
    holds: bool


def edge_count(g: RegularGraph, B, C) -> int:
    """Ordered pairs (b, c) with b in B, c in C and an edge b -> c."""
    B = np.unique(np.asarray(B, dtype=np.int64))
    C = np.unique(np.asarray(C, dtype=np.int64))
    if g._dense is not None:
        return int(g._dense[np.ix_(B, C)].sum())
    inC = np.zeros(g.n, dtype=bool)
    inC[C] = True
    total = 0
    for s in range(0, len(B), 2048):
        total += int(inC[g.out_batch(B[s : s + 2048])].sum())
    return total


def mixing_check(g: RegularGraph, B, C, lam: float | SpectralReport) -> MixingResult:
    lam = lam.lambda2 if isinstance(lam, SpectralReport) else float(lam)
    nb, nc = len(np.unique(B)), len(np.unique(C))
    e = edge_count(g, B, C)
    expected = g.degree * nb * nc / g.n
    deviation = abs(e - expected)
    bound = lam * math.sqrt(nb * nc)
    # lam is a floating point eigenvalue; allow its rounding error only
    holds = deviation <= bound + 1e-9 * max(bound, 1.0)
    return MixingResult(e, expected, deviation, bound, holds)


def interlacing_check(host, minor, tol: float = 1e-9) -> bool:
    """True iff lambda_i <= mu_i <= lambda_{i+n-m} for ascending host/minor spectra."""
    lam = np.sort(np.asarray(host, dtype=np.float64))
    mu = np.sort(np.asarray(minor, dtype=np.float64))
    n, m = len(lam), len(mu)
    if m > n:
        raise DomainError("minor larger than host")
    scale = tol * max(1.0, float(np.max(np.abs(lam), initial=1.0)))
    return bool(np.all(lam[:m] <= mu + scale) and np.all(mu <= lam[n - m :] + scale))
