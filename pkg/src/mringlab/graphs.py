"""Graph families over M_2(F_q) and SL_2(F_q).

Vertex labels
-------------
* ``M2`` families: the matrix index in ``[0, q**4)``.
* ``SL2`` families: the position of the matrix in the sorted SL_2 list.
* product families (``(A, C)`` pairs): ``left * q**4 + idx(C)`` where ``left``
  is the label of ``A`` in its own family (M_2 index or SL_2 position).

Every family is described by a vectorised edge predicate; neighbour lists,
dense adjacency and audits are derived from it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DomainError, ResourceLimitError, UnsupportedError
from .field import gf
from .matrix import GroupTable, MatrixRing, enumerate_tables, ring

DENSE_UNDIRECTED_LIMIT = 10_000
DENSE_DIRECTED_LIMIT = 7_000
AUDIT_SAMPLE = 512

SINGLE_FAMILIES = {
    # family: (vertex domain, predicate on the difference index)
    "unit-cayley": "M2",
    "det-alpha": "M2",
    "gl-diff-m2": "M2",
    "singular-diff-m2": "M2",
    "sl2-invertible-diff": "SL2",
    "sl2-singular-diff": "SL2",
    "sl2-sl2-diff": "SL2",
}
PAIR_FAMILIES = {"aux-e": "M2", "aux-m": "SL2"}
DIGRAPH_FAMILIES = {"sp-digraph-m2": "M2", "sp-digraph-sl2": "SL2"}
AUX_E = (11, 12, 13, 14, 15)
AUX_M = (1, 2, 3, 4, 5, 6, 7, 8)
FAMILIES = sorted({*SINGLE_FAMILIES, *PAIR_FAMILIES, *DIGRAPH_FAMILIES, "tensor", "custom"})


@dataclass(frozen=True)
class GraphSpec:
    family: str
    q: int = 0
    param: int | None = None
    factors: tuple[GraphSpec, ...] = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown graph family {self.family!r}")
        if self.family == "det-alpha" and (self.param is None or not 0 < self.param < self.q):
            raise DomainError("det-alpha needs a nonzero alpha in F_q")
        if self.family == "aux-e" and self.param not in AUX_E:
            raise DomainError(f"aux-e index must be one of {AUX_E}")
        if self.family == "aux-m" and self.param not in AUX_M:
            raise DomainError(f"aux-m index must be one of {AUX_M}")
        if self.family == "tensor" and len(self.factors) != 2:
            raise DomainError("tensor needs two factor specs")

    @property
    def name(self) -> str:
        if self.family == "tensor":
            return f"tensor({self.factors[0].name},{self.factors[1].name})"
        if self.param is not None:
            return f"{self.family}({self.param})"
        return self.family

    def to_dict(self) -> dict:
        out = {"family": self.family, "q": self.q}
        if self.param is not None:
            out["param"] = self.param
        if self.factors:
            out["factors"] = [f.to_dict() for f in self.factors]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> GraphSpec:
        factors = tuple(cls.from_dict(f) for f in data.get("factors", ()))
        return cls(data["family"], data.get("q", 0), data.get("param"), factors)


@dataclass(eq=False)
class RegularGraph:
    """A realised graph: vertex count, edge oracle, neighbour accessors.

    ``edge(u, v)`` broadcasts over integer arrays.  ``out_batch(us)`` returns
    a ``(len(us), degree)`` array of out-neighbours and is only available for
    exactly regular graphs.
    """

    spec: GraphSpec
    n: int
    directed: bool
    claimed_degree: int | tuple[int, int] | None
    edge: Callable
    out_batch: Callable
    in_batch: Callable
    storage: str = "implicit-oracle"
    notes: list[str] = dc_field(default_factory=list)
    audit: dict | None = None
    _dense: np.ndarray | None = None

    def adjacent(self, u: int, v: int) -> bool:
        return bool(self.edge(np.int64(u), np.int64(v)))

    def neighbors(self, u: int, direction: str = "out") -> np.ndarray:
        if self._dense is not None:
            row = self._dense[u] if direction == "out" else self._dense[:, u]
            return np.nonzero(row)[0]
        batch = self.out_batch if direction == "out" else self.in_batch
        return np.sort(batch(np.array([u], dtype=np.int64))[0])

    @property
    def degree(self) -> int:
        d = self.claimed_degree
        if isinstance(d, tuple):
            raise DomainError(f"{self.spec.name} has no single degree")
        if d is None:
            raise DomainError(f"{self.spec.name} is not regular")
        return int(d)

    def dense(self) -> np.ndarray:
        """Boolean adjacency matrix (row u, column v set iff u -> v)."""
        if self._dense is None:
            self._dense = _materialise(self)
        return self._dense

    def matrix(self, dtype=np.float64) -> np.ndarray:
        return self.dense().astype(dtype)

    def sparse(self):
        import scipy.sparse as sp

        if self._dense is not None:
            return sp.csr_matrix(self._dense.astype(np.float64))
        rows, cols = [], []
        for start in range(0, self.n, 4096):
            us = np.arange(start, min(start + 4096, self.n), dtype=np.int64)
            nb = self.out_batch(us)
            rows.append(np.repeat(us, nb.shape[1]))
            cols.append(nb.ravel())
        r, c = np.concatenate(rows), np.concatenate(cols)
        return sp.csr_matrix((np.ones(len(r)), (r, c)), shape=(self.n, self.n))


def _materialise(g: RegularGraph) -> np.ndarray:
    out = np.zeros((g.n, g.n), dtype=bool)
    step = max(1, 2_000_000 // max(g.n, 1))
    allv = np.arange(g.n, dtype=np.int64)
    for start in range(0, g.n, step):
        us = np.arange(start, min(start + step, g.n), dtype=np.int64)
        try:
            nb = g.out_batch(us)
            out[np.repeat(us, nb.shape[1]), nb.ravel()] = True
        except NotImplementedError:
            out[start : start + len(us)] = g.edge(us[:, None], allv[None, :])
    return out


def _check_budget(n: int, directed: bool, budget_mb: float | None) -> bool:
    limit = DENSE_DIRECTED_LIMIT if directed else DENSE_UNDIRECTED_LIMIT
    fits = n <= limit
    if budget_mb is not None:
        fits = fits and n * n <= budget_mb * 2**20
    return fits


# -- single-matrix families ----------------------------------------------------
def _difference_mask(R: MatrixRing, family: str, param: int | None) -> np.ndarray:
    det, idx = R.det_of, np.arange(R.size)
    if family in ("unit-cayley", "sl2-sl2-diff"):
        return det == 1
    if family == "det-alpha":
        return det == param
    if family in ("gl-diff-m2", "sl2-invertible-diff"):
        return det != 0
    if family in ("singular-diff-m2", "sl2-singular-diff"):
        return (det == 0) & (idx != 0)
    raise DomainError(family)


def _single(spec: GraphSpec, R: MatrixRing, T: GroupTable) -> RegularGraph:
    mask = _difference_mask(R, spec.family, spec.param)
    if SINGLE_FAMILIES[spec.family] == "M2":
        conn = np.nonzero(mask)[0]

        def edge(u, v):
            return mask[R.sub(u, v)]

        def batch(us):
            return R.add(np.asarray(us)[:, None], conn[None, :])

        return RegularGraph(spec, R.size, False, len(conn), edge, batch, batch)

    verts = T.sl2
    n = len(verts)

    def edge(u, v):
        return mask[R.sub(verts[u], verts[v])]

    full = mask[R.sub(verts[:, None], verts[None, :])]
    degrees = full.sum(axis=1)
    regular = degrees.min() == degrees.max()

    def batch(us):
        rows = full[np.asarray(us)]
        if not regular:
            raise NotImplementedError("irregular graph")
        return np.nonzero(rows)[1].reshape(len(rows), -1)

    g = RegularGraph(spec, n, False, int(degrees[0]) if regular else None, edge, batch, batch)
    g._dense = full
    g.storage = "dense-bitset"
    return g


# -- product families on pairs (A, C) -------------------------------------------
def pair_predicate(R: MatrixRing, kind: str, j: int, param: int | None = None) -> Callable:
    """Edge rule on (A1 - A2, C1 - C2) for the aux-e / aux-m component graphs."""
    det, rank, prof = R.det_of, R.rank_of, R.profile_of

    def rule(da, dc):
        rA, rC = rank[da], rank[dc]
        dA, dC = det[da], det[dc]
        both_rank1 = (rA == 1) & (rC == 1)
        if kind == "aux-e":
            if j == 11:
                return (dA == 0) & (dC != 0)
            if j == 12:
                return (rA == 0) & (rC == 1)
            if j == 13:
                return (rA == 1) & (rC == 0)
            if j == 14:
                return both_rank1 & (prof[da] == prof[dc])
            if j == 15:
                return both_rank1 & (prof[da] != prof[dc])
        else:
            if j == 1:
                return (dA != 0) & (dC != 0)
            if j == 2:
                if param is not None:
                    return (dA == param) & (dC == param)
                return (dA != 0) & (dA == dC)
            if j == 3:
                return (dA == 0) & (dC != 0)
            if j == 4:
                return (dA != 0) & (dC == 0)
            if j == 5:
                return (rA == 0) & (rC == 1)
            if j == 6:
                return (rA == 1) & (rC == 0)
            if j == 7:
                return both_rank1 & (prof[da] == prof[dc])
            if j == 8:
                return both_rank1 & (prof[da] != prof[dc])
        raise DomainError(f"{kind}({j})")

    return rule


def _pair(spec: GraphSpec, R: MatrixRing, T: GroupTable) -> RegularGraph:
    N = R.size
    left = T.all if PAIR_FAMILIES[spec.family] == "M2" else T.sl2
    n = len(left) * N
    rule = pair_predicate(R, spec.family, spec.param)

    def split(u):
        u = np.asarray(u)
        return left[u // N], u % N

    def edge(u, v):
        a1, c1 = split(u)
        a2, c2 = split(v)
        return rule(R.sub(a1, a2), R.sub(c1, c2)) & (np.asarray(u) != v)

    # connection structure: for each A-difference, which C-differences qualify
    allc = np.arange(N)

    def batch(us):
        us = np.asarray(us)
        rows = []
        for u in us:
            a, c = split(u)
            da = R.sub(a, left)[:, None]
            dc = R.sub(c, allc)[None, :]
            hit = rule(da, dc)
            bl, cc = np.nonzero(hit)
            rows.append(bl * N + cc)
        lens = {len(r) for r in rows}
        if len(lens) != 1:
            raise NotImplementedError("irregular graph")
        return np.stack(rows) if rows else np.zeros((0, 0), dtype=np.int64)

    degree = len(batch(np.array([0]))[0])
    return RegularGraph(spec, n, False, degree, edge, batch, batch)


# -- sum-product digraphs --------------------------------------------------------
def _digraph(spec: GraphSpec, R: MatrixRing, T: GroupTable) -> RegularGraph:
    N = R.size
    left = T.all if DIGRAPH_FAMILIES[spec.family] == "M2" else T.sl2
    label = np.full(N, -1, dtype=np.int64)
    label[left] = np.arange(len(left))
    n = len(left) * N

    def edge(u, v):
        u, v = np.asarray(u), np.asarray(v)
        a, c = left[u // N], u % N
        b, d = left[v // N], v % N
        return R.mul(a, b) == R.add(c, d)

    def out_batch(us):
        # (A, C) -> (B, A B - C) for every B on the left side
        us = np.asarray(us)
        a, c = left[us // N][:, None], (us % N)[:, None]
        b = left[None, :]
        return label[b] * N + R.sub(R.mul(a, b), c)

    def in_batch(vs):
        # (A, A B - D) -> (B, D) for every A on the left side
        vs = np.asarray(vs)
        b, d = left[vs // N][:, None], (vs % N)[:, None]
        a = left[None, :]
        return label[a] * N + R.sub(R.mul(a, b), d)

    return RegularGraph(spec, n, True, len(left), edge, out_batch, in_batch)


# -- tensor products -----------------------------------------------------------------
def tensor_product(g: RegularGraph, h: RegularGraph) -> RegularGraph:
    """Vertex (u, v) is labelled u * h.n + v; edges are componentwise."""
    if g.directed or h.directed:
        raise UnsupportedError("tensor_product supports undirected graphs only")
    if g.spec.q and h.spec.q and g.spec.q != h.spec.q:
        raise DomainError("tensor factors live over different fields")
    m = h.n

    def edge(u, v):
        u, v = np.asarray(u), np.asarray(v)
        return g.edge(u // m, v // m) & h.edge(u % m, v % m)

    def batch(us):
        us = np.asarray(us)
        ng = g.out_batch(us // m)
        nh = h.out_batch(us % m)
        return (ng[:, :, None] * m + nh[:, None, :]).reshape(len(us), -1)

    degree = None
    if g.claimed_degree is not None and h.claimed_degree is not None:
        degree = g.degree * h.degree
    spec = GraphSpec("tensor", g.spec.q or h.spec.q, factors=(g.spec, h.spec))
    out = RegularGraph(spec, g.n * m, False, degree, edge, batch, batch)
    if g._dense is not None and h._dense is not None and _check_budget(out.n, False, None):
        out._dense = np.kron(g._dense, h._dense).astype(bool)
        out.storage = "dense-bitset"
    return out


def from_dense(matrix, directed: bool | None = None, name: str = "custom") -> RegularGraph:
    """Wrap an explicit 0/1 adjacency matrix (used for controls and small examples)."""
    adj = np.asarray(matrix).astype(bool)
    n = adj.shape[0]
    if directed is None:
        directed = not np.array_equal(adj, adj.T)
    outdeg, indeg = adj.sum(axis=1), adj.sum(axis=0)
    regular = outdeg.min() == outdeg.max() == indeg.min() == indeg.max()

    def edge(u, v):
        return adj[u, v]

    def out_batch(us):
        if not regular:
            raise NotImplementedError("irregular graph")
        return np.nonzero(adj[np.asarray(us)])[1].reshape(len(us), -1)

    def in_batch(vs):
        if not regular:
            raise NotImplementedError("irregular graph")
        return np.nonzero(adj[:, np.asarray(vs)].T)[1].reshape(len(vs), -1)

    g = RegularGraph(GraphSpec("custom"), n, directed, int(outdeg[0]) if regular else None, edge, out_batch, in_batch)
    g._dense = adj
    g.storage = "dense-bitset"
    g.notes.append(name)
    return g


def complete_graph(n: int) -> RegularGraph:
    return from_dense(~np.eye(n, dtype=bool), directed=False, name=f"K{n}")


# -- public constructor ----------------------------------------------------------------
def build_graph(
    spec: GraphSpec, budget_mb: float | None = None, audit: bool = True, dense: bool | None = None
) -> RegularGraph:
    """Realise ``spec``; dense storage when the size budget allows, else the oracle only.

    ``dense=False`` keeps the implicit oracle even when the graph would fit.
    """
    if spec.family == "custom":
        raise DomainError("custom graphs are built with from_dense()")
    if spec.family == "tensor":
        g = tensor_product(
            build_graph(spec.factors[0], budget_mb, audit, dense), build_graph(spec.factors[1], budget_mb, audit, dense)
        )
    else:
        R = ring(gf(spec.q)) if spec.q <= 27 else None
        if R is None:
            raise ResourceLimitError(f"q={spec.q} exceeds the enumeration limit")
        T = enumerate_tables(R.field)
        if spec.family in SINGLE_FAMILIES:
            g = _single(spec, R, T)
        elif spec.family in PAIR_FAMILIES:
            g = _pair(spec, R, T)
        else:
            g = _digraph(spec, R, T)
    if g._dense is None:
        if dense is not False and _check_budget(g.n, g.directed, budget_mb):
            g.dense()
            g.storage = "dense-bitset"
        elif dense is False:
            g.storage = "implicit-oracle"
        else:
            if dense:
                raise ResourceLimitError(f"n={g.n} exceeds the dense storage budget")
            g.storage = "implicit-oracle"
            g.notes.append(f"n={g.n} above dense budget; implicit oracle only")
    if audit:
        g.audit = degree_audit(g)
    return g


def degree_audit(g: RegularGraph, sample: int = AUDIT_SAMPLE, seed: int = 0) -> dict:
    """Measured in/out degrees on all vertices (n <= sample) or a seeded sample."""
    if g.n <= sample or (g.spec.q and g.spec.q <= 3):
        verts = np.arange(g.n)
    else:
        verts = np.sort(np.random.default_rng(seed).choice(g.n, size=sample, replace=False))
    if g._dense is not None:
        outd = g._dense[verts].sum(axis=1)
        ind = g._dense[:, verts].sum(axis=0)
    else:
        allv = np.arange(g.n, dtype=np.int64)
        outd = np.array([g.edge(np.int64(u), allv).sum() for u in verts]) if g.n <= 10**6 else None
        ind = np.array([g.edge(allv, np.int64(u)).sum() for u in verts]) if g.n <= 10**6 else None
        if outd is None:
            raise ResourceLimitError("degree audit above 10^6 vertices")
    return {
        "vertices_checked": int(len(verts)),
        "out_min": int(outd.min()),
        "out_max": int(outd.max()),
        "in_min": int(ind.min()),
        "in_max": int(ind.max()),
        "regular": bool(outd.min() == outd.max() == ind.min() == ind.max()),
    }


def common_neighbors(g: RegularGraph, u: int, v: int, direction: str = "out") -> int:
    """Exact |N+(u, v)| (common out-neighbours) or |N-(u, v)| by oracle scan."""
    if u == v:
        raise DomainError("common_neighbors needs two distinct vertices")
    return int(common_neighbors_batch(g, np.array([u]), np.array([v]), direction)[0])


def common_neighbors_batch(g: RegularGraph, us, vs, direction: str = "out", chunk: int = 4096) -> np.ndarray:
    us, vs = np.asarray(us, dtype=np.int64), np.asarray(vs, dtype=np.int64)
    if direction not in ("out", "in"):
        raise DomainError(f"direction must be 'out' or 'in', not {direction!r}")
    out = np.empty(len(us), dtype=np.int64)
    for s in range(0, len(us), chunk):
        u, v = us[s : s + chunk], vs[s : s + chunk]
        if g._dense is not None:
            m = g._dense if direction == "out" else g._dense.T
            out[s : s + chunk] = (m[u] & m[v]).sum(axis=1)
        elif direction == "out":
            out[s : s + chunk] = g.edge(v[:, None], g.out_batch(u)).sum(axis=1)
        else:
            out[s : s + chunk] = g.edge(g.in_batch(u), v[:, None]).sum(axis=1)
    return out


def diameter(g: RegularGraph) -> float:
    """Exact diameter by breadth-first search from every vertex at once; inf if disconnected."""
    if g.directed:
        raise UnsupportedError("diameter is defined here for undirected graphs")
    if g.n > DENSE_UNDIRECTED_LIMIT:
        raise ResourceLimitError(f"diameter limited to n <= {DENSE_UNDIRECTED_LIMIT}")
    adj = g.dense().astype(np.float32)
    reached = np.eye(g.n, dtype=bool)
    frontier = reached.copy()
    depth = 0
    while not reached.all():
        nxt = (frontier.astype(np.float32) @ adj) > 0
        frontier = nxt & ~reached
        if not frontier.any():
            return math.inf
        reached |= frontier
        depth += 1
    return depth


# -- export ---------------------------------------------------------------------------------
def export_graph(g: RegularGraph, path: Path) -> None:
    """JSON header line followed by n packed adjacency rows of ceil(n/8) bytes."""
    header = {
        "format": "row-bitset-v1",
        "spec": g.spec.to_dict(),
        "n": g.n,
        "directed": g.directed,
        "degree": g.claimed_degree,
        "row_bytes": (g.n + 7) // 8,
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.packbits(g.dense(), axis=1).tobytes())
    tmp.replace(path)


def load_graph(path: Path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        n, width = header["n"], header["row_bytes"]
        rows = np.frombuffer(fh.read(), dtype=np.uint8)
    if rows.size != n * width:
        raise DomainError(f"{path}: expected {n * width} bitset bytes, found {rows.size}")
    adj = np.unpackbits(rows.reshape(n, width), axis=1, count=n).astype(bool)
    return header, adj
