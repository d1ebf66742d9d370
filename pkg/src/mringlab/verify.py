"""Brute-force verification of normality, case analyses and decomposition identities.

Every check compares a prediction (a case label's count, an assembled matrix
identity) with walk counts obtained directly from the edge oracles.  A failed
comparison is report content, never an exception.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, ResourceLimitError
from .field import gf
from .graphs import GraphSpec, RegularGraph, build_graph, common_neighbors_batch
from .matrix import Mat2, enumerate_tables, ring

EXHAUSTIVE_PAIR_LIMIT = 10**8
MAX_LISTED = 200

CASE_FAMILIES = ("sp-digraph-m2", "sp-digraph-sl2", "sl2-singular-diff")
LABELS = {
    "sp-digraph-m2": ("1", "2", "3.1", "3.3", "3.4", "3.5"),
    "sp-digraph-sl2": ("1", "2", "3", "4", "5.1", "5.2", "5.3", "5.4"),
    "sl2-singular-diff": (
        "det0-generic",
        "det0-row-equal",
        "det0-col-equal",
        "det0-translate",
        "det0-uncovered",
        "detNZ-generic",
        "detNZ-proportional",
    ),
}


def predicted_counts(family: str, q: int) -> dict[str, int | None]:
    """Common out-neighbour count each case label predicts; None = no prediction."""
    if family == "sp-digraph-m2":
        return {"1": 1, "2": 0, "3.1": 0, "3.3": q * q, "3.4": q * q, "3.5": 0}
    if family == "sp-digraph-sl2":
        return {"1": 1, "2": 0, "3": 0, "4": 0, "5.1": 0, "5.2": 0, "5.3": q, "5.4": 0}
    if family == "sl2-singular-diff":
        return {
            "det0-generic": 2 * q - 1,
            "det0-row-equal": 2 * q - 1,
            "det0-col-equal": 2 * q - 1,
            "det0-translate": 0,
            "det0-uncovered": None,
            "detNZ-generic": q - 1,
            "detNZ-proportional": q,
        }
    raise DomainError(f"no case analysis for family {family!r}")


@dataclass(frozen=True)
class PairClassification:
    label: str
    predicted: int | None


def _pair_parts(family: str, q: int, us, vs):
    R = ring(gf(q))
    T = enumerate_tables(q)
    N = R.size
    left = T.all if family == "sp-digraph-m2" else T.sl2
    us, vs = np.asarray(us, dtype=np.int64), np.asarray(vs, dtype=np.int64)
    if family == "sl2-singular-diff":
        return R, T.sl2[us], None, T.sl2[vs], None
    return R, left[us // N], us % N, left[vs // N], vs % N


def classify_pairs(family: str, q: int, us, vs) -> np.ndarray:
    """Vectorised case labels (as an object array of strings) for vertex pairs."""
    us, vs = np.asarray(us, dtype=np.int64), np.asarray(vs, dtype=np.int64)
    if np.any(us == vs):
        raise DomainError("case analysis is over distinct vertices")
    R, a1, c1, a2, c2 = _pair_parts(family, q, us, vs)
    labels = np.empty(len(us), dtype=object)
    if family == "sl2-singular-diff":
        f = R.field
        e1, e2 = R.entries[a1], R.entries[a2]
        a, b = e1[:, 0], e1[:, 1]
        a_, b_ = e2[:, 0], e2[:, 1]
        det0 = R.det_of[R.sub(a1, a2)] == 0
        cross = f.sub(f.mul(a, b_), f.mul(b, a_)) != 0
        ea, eb = a == a_, b == b_
        labels[:] = "det0-uncovered"
        labels[det0 & ~ea & ~eb & cross] = "det0-generic"
        labels[det0 & ~ea & eb & cross] = "det0-row-equal"
        labels[det0 & ea & ~eb] = "det0-col-equal"
        labels[det0 & ea & eb] = "det0-translate"
        labels[~det0 & cross] = "detNZ-generic"
        labels[~det0 & ~cross] = "detNZ-proportional"
        return labels
    da, dc = R.sub(a1, a2), R.sub(c1, c2)
    detA, detC = R.det_of[da], R.det_of[dc]
    rA, rC = R.rank_of[da], R.rank_of[dc]
    same_profile = R.profile_of[da] == R.profile_of[dc]
    if family == "sp-digraph-m2":
        labels[detA != 0] = "1"
        labels[(detA == 0) & (detC != 0)] = "2"
        labels[(rA == 0) & (rC == 1)] = "3.1"
        labels[(rA == 1) & (rC == 0)] = "3.3"
        labels[(rA == 1) & (rC == 1) & same_profile] = "3.4"
        labels[(rA == 1) & (rC == 1) & ~same_profile] = "3.5"
    elif family == "sp-digraph-sl2":
        labels[(detA != 0) & (detA == detC)] = "1"
        labels[(detA != 0) & (detC != 0) & (detA != detC)] = "2"
        labels[(detA == 0) & (detC != 0)] = "3"
        labels[(detA != 0) & (detC == 0)] = "4"
        labels[(rA == 0) & (rC == 1)] = "5.1"
        labels[(rA == 1) & (rC == 0)] = "5.2"
        labels[(rA == 1) & (rC == 1) & same_profile] = "5.3"
        labels[(rA == 1) & (rC == 1) & ~same_profile] = "5.4"
    else:
        raise DomainError(f"no case analysis for family {family!r}")
    # both differences zero means u == v, excluded above
    assert not any(lbl is None for lbl in labels), "case split is not exhaustive"
    return labels


def classify_pair(family: str, q: int, u: int, v: int) -> PairClassification:
    if u == v:
        raise DomainError("classify_pair needs two distinct vertices")
    label = classify_pairs(family, q, [u], [v])[0]
    return PairClassification(label, predicted_counts(family, q)[label])


# -- reports ----------------------------------------------------------------------------
@dataclass
class VerificationReport:
    target: str
    q: int
    mode: str
    pairs_checked: int = 0
    mismatch_count: int = 0
    mismatches: list = field(default_factory=list)
    elapsed_ms: float | None = None
    verdict: str = "exact"
    details: dict = field(default_factory=dict)

    def add_mismatch(self, item: dict) -> None:
        self.mismatch_count += 1
        self.verdict = "mismatch"
        if len(self.mismatches) < MAX_LISTED:
            self.mismatches.append(item)

    @property
    def ok(self) -> bool:
        return self.mismatch_count == 0

    def to_dict(self, timing: bool = True) -> dict:
        out = asdict(self)
        if not timing:
            out["elapsed_ms"] = None
        return out

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def describe_vertex(family: str, q: int, u: int) -> dict:
    """Full matrices of a vertex, for human-readable mismatch reports."""
    T = enumerate_tables(q)
    N = q**4
    f = gf(q)
    if family in ("sl2-singular-diff", "sl2-invertible-diff", "sl2-sl2-diff"):
        return {"A": Mat2.from_index(f, int(T.sl2[u])).rows()}
    if family in ("unit-cayley", "det-alpha", "gl-diff-m2", "singular-diff-m2"):
        return {"A": Mat2.from_index(f, u).rows()}
    left = T.all if family in ("sp-digraph-m2", "aux-e") else T.sl2
    return {"A": Mat2.from_index(f, int(left[u // N])).rows(), "C": Mat2.from_index(f, u % N).rows()}


def _pairs(n: int, mode: str, k: int | None, seed: int, diagonal: bool = False) -> tuple[np.ndarray, np.ndarray]:
    if mode == "exhaustive":
        if n * n > EXHAUSTIVE_PAIR_LIMIT:
            raise ResourceLimitError(f"{n * n} ordered pairs exceed the exhaustive limit")
        u, v = np.divmod(np.arange(n * n, dtype=np.int64), n)
        keep = np.ones(n * n, dtype=bool) if diagonal else u != v
        return u[keep], v[keep]
    if mode == "sampled":
        if k is None or k < 1:
            raise DomainError("sampled mode needs a positive sample count k")
        rng = np.random.default_rng(seed)
        u = rng.integers(0, n, size=k, dtype=np.int64)
        step = rng.integers(0 if diagonal else 1, n, size=k, dtype=np.int64)
        return u, (u + step) % n
    raise DomainError(f"mode must be 'exhaustive' or 'sampled', not {mode!r}")


def _chunked(fn, us, vs, threads: int, chunk: int = 20_000):
    bounds = [(s, min(s + chunk, len(us))) for s in range(0, len(us), chunk)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda b: fn(us[b[0] : b[1]], vs[b[0] : b[1]]), bounds))
    else:
        parts = [fn(us[a:b], vs[a:b]) for a, b in bounds]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def _mode_name(mode: str, k: int | None) -> str:
    return mode if mode == "exhaustive" else f"sampled({k})"


def verify_case_analysis(
    family: str, q: int, mode: str = "exhaustive", k: int | None = None, seed: int = 0, threads: int = 1
) -> VerificationReport:
    """Brute-force common out-neighbour counts against each pair's case prediction."""
    start = time.perf_counter()
    g = build_graph(GraphSpec(family, q), audit=False, dense=False)
    us, vs = _pairs(g.n, mode, k, seed)
    labels = classify_pairs(family, q, us, vs)
    observed = _chunked(lambda a, b: common_neighbors_batch(g, a, b, "out"), us, vs, threads)
    predicted = predicted_counts(family, q)
    report = VerificationReport(f"cases:{family}", q, _mode_name(mode, k), pairs_checked=len(us))
    summary = {}
    for label in LABELS[family]:
        sel = labels == label
        obs = observed[sel]
        pred = predicted[label]
        bad = np.nonzero(sel & (observed != (-1 if pred is None else pred)))[0]
        summary[label] = {
            "pairs": int(sel.sum()),
            "predicted": pred,
            "observed": sorted({int(x) for x in np.unique(obs)}),
            "mismatches": int(len(bad)),
        }
        for i in bad:
            report.add_mismatch(
                {
                    "label": label,
                    "predicted": pred,
                    "observed": int(observed[i]),
                    "u": describe_vertex(family, q, int(us[i])),
                    "v": describe_vertex(family, q, int(vs[i])),
                }
            )
    report.details = {"labels": summary, "partition_total": int(sum(s["pairs"] for s in summary.values()))}
    report.elapsed_ms = (time.perf_counter() - start) * 1e3
    return report


def verify_normality(
    g: RegularGraph, mode: str = "exhaustive", k: int | None = None, seed: int = 0, threads: int = 1
) -> VerificationReport:
    """|N+(u, v)| == |N-(u, v)| on every (or every sampled) ordered pair, u = v included.

    The diagonal compares out- and in-degree, which is what exposes an
    irregular digraph such as a directed path.
    """
    start = time.perf_counter()
    if not g.directed:
        raise DomainError("verify_normality needs a directed graph")
    us, vs = _pairs(g.n, mode, k, seed, diagonal=True)
    plus = _chunked(lambda a, b: common_neighbors_batch(g, a, b, "out"), us, vs, threads)
    minus = _chunked(lambda a, b: common_neighbors_batch(g, a, b, "in"), us, vs, threads)
    report = VerificationReport(f"normality:{g.spec.name}", g.spec.q, _mode_name(mode, k), pairs_checked=len(us))
    for i in np.nonzero(plus != minus)[0]:
        item = {"n_plus": int(plus[i]), "n_minus": int(minus[i]), "u": int(us[i]), "v": int(vs[i])}
        if g.spec.family != "custom":
            item["u"] = describe_vertex(g.spec.family, g.spec.q, int(us[i]))
            item["v"] = describe_vertex(g.spec.family, g.spec.q, int(vs[i]))
        report.add_mismatch(item)
    off = us != vs
    report.details = {
        "sum_n_plus": int(plus.sum()),
        "sum_n_minus": int(minus.sum()),
        "sum_n_plus_distinct": int(plus[off].sum()),
        "sum_n_minus_distinct": int(minus[off].sum()),
    }
    report.verdict = "normal" if report.ok else "not-normal"
    report.elapsed_ms = (time.perf_counter() - start) * 1e3
    return report


# -- decomposition identities -----------------------------------------------------------------
DECOMPOSITIONS = ("g1-mmt", "g2-mmt", "g31-squared")


def g31_part_rule(q: int, j: int):
    """Edge rules of the five graphs used in the squared-adjacency identity for G31."""
    R = ring(gf(q))
    f = R.field

    def rule(x, y):
        e1, e2 = R.entries[x], R.entries[y]
        a, b, c, d = (e1[..., i] for i in range(4))
        a_, b_, c_, d_ = (e2[..., i] for i in range(4))
        det0 = R.det_of[R.sub(x, y)] == 0
        cross = f.sub(f.mul(a, b_), f.mul(b, a_)) != 0
        distinct = np.asarray(x) != y
        if j == 1:
            return (a != a_) & (b != b_) & cross & det0
        if j == 2:
            return (a != a_) & (b == b_) & (d == d_) & cross & det0
        if j == 3:
            return (a == a_) & (b != b_) & (c == c_) & det0
        if j == 4:
            return (a == a_) & (b == b_) & ((c != c_) | (d != d_)) & det0
        if j == 5:
            one = f.add(1, f.sub(f.mul(b_, c), f.mul(a_, d)))  # 1 + b'c - a'd
            two = f.sub(f.sub(f.mul(a_, d), f.mul(b, c_)), 1)  # a'd - bc' - 1
            return ~cross & ((one != 0) | (two != 0)) & ~det0 & distinct
        raise DomainError(j)

    return rule


def _decomposition_terms(target: str, q: int):
    """(lhs graph, diagonal coefficient, J coefficient, [(coef, edge rule)])."""
    if target == "g1-mmt":
        g = build_graph(GraphSpec("sp-digraph-m2", q), audit=False, dense=q <= 2)
        parts = [(c, build_graph(GraphSpec("aux-e", q, j), audit=False, dense=q <= 2).edge)
                 for c, j in ((-1, 11), (-1, 12), (q * q - 1, 13), (q * q - 1, 14), (-1, 15))]
        return g, q**4 - 1, 1, parts
    if target == "g2-mmt":
        g = build_graph(GraphSpec("sp-digraph-sl2", q), audit=False, dense=q <= 2)
        coefs = {1: -1, 2: 1, 3: -1, 4: -1, 5: -1, 6: -1, 7: q - 1, 8: -1}
        parts = [(c, build_graph(GraphSpec("aux-m", q, j), audit=False, dense=q <= 2).edge) for j, c in coefs.items()]
        # leading coefficient read as |SL_2(F_q)| - 1
        return g, q**3 - q - 1, 1, parts
    if target == "g31-squared":
        g = build_graph(GraphSpec("sl2-singular-diff", q), audit=False)
        T = enumerate_tables(q)
        sl2 = T.sl2
        parts = []
        for c, j in ((q, 1), (q, 2), (q, 3), (-(q - 1), 4), (1, 5)):
            rule = g31_part_rule(q, j)
            parts.append((c, lambda u, v, rule=rule: rule(sl2[np.asarray(u)], sl2[np.asarray(v)])))
        return g, q * q - q + 1, q - 1, parts
    raise DomainError(f"unknown decomposition target {target!r}")


def verify_decomposition(
    target: str, q: int, mode: str = "exhaustive", k: int = 10**6, seed: int = 0, threads: int = 1
) -> VerificationReport:
    """Compare walk counts (M M^t or M^2) with the assembled right-hand side entrywise.

    ``exhaustive`` checks all n^2 entries; ``sampled`` draws ``k`` entries
    (a tenth of them on the diagonal).
    """
    start = time.perf_counter()
    g, diag, jcoef, parts = _decomposition_terms(target, q)
    n = g.n
    if mode == "exhaustive":
        if n * n > EXHAUSTIVE_PAIR_LIMIT:
            raise ResourceLimitError("too many entries for an exhaustive check")
        us, vs = np.divmod(np.arange(n * n, dtype=np.int64), n)
    elif mode == "sampled":
        rng = np.random.default_rng(seed)
        us = rng.integers(0, n, size=k, dtype=np.int64)
        vs = rng.integers(0, n, size=k, dtype=np.int64)
        vs[: k // 10] = us[: k // 10]
    else:
        raise DomainError(f"mode must be 'exhaustive' or 'sampled', not {mode!r}")

    def lhs(a, b):
        # walks u -> w <- v for digraphs; u - w - v for the undirected G31
        return common_neighbors_batch(g, a, b, "out")

    def rhs(a, b):
        total = np.where(a == b, diag, 0) + jcoef
        for c, edge in parts:
            total = total + c * edge(a, b).astype(np.int64)
        return total

    left = _chunked(lhs, us, vs, threads)
    right = _chunked(rhs, us, vs, threads)
    report = VerificationReport(target, q, _mode_name(mode, k if mode == "sampled" else None), pairs_checked=len(us))
    family = g.spec.family
    for i in np.nonzero(left != right)[0]:
        report.add_mismatch(
            {
                "lhs": int(left[i]),
                "rhs": int(right[i]),
                "u": describe_vertex(family, q, int(us[i])),
                "v": describe_vertex(family, q, int(vs[i])),
                "diagonal": bool(us[i] == vs[i]),
            }
        )
    report.elapsed_ms = (time.perf_counter() - start) * 1e3
    return report


def decomposition_lambda_bound(target: str, q: int) -> float:
    """sqrt of (diagonal coefficient + sum |coef| * component degree): the crude triangle bound."""
    g, diag, _, parts = _decomposition_terms(target, q)
    total = float(diag)
    probe = np.arange(g.n, dtype=np.int64)
    for c, edge in parts:
        deg = int(edge(np.int64(0), probe).sum())
        total += abs(c) * deg
    return float(np.sqrt(total))


# -- determinant scaling and SL_2 sum cover -------------------------------------------------
def scaling_lemma_sizes(i: int, j: int, Di, Dj, q: int) -> tuple[int, int]:
    """(|Di Dj|, |Di' Dj'|) with Di' row-scaled by 1/i and Dj' column-scaled by 1/j."""
    if i == 0 or j == 0:
        raise DomainError("scaling lemma needs nonzero determinants")
    R = ring(gf(q))
    f = R.field
    Di, Dj = np.asarray(Di, dtype=np.int64), np.asarray(Dj, dtype=np.int64)
    if np.any(R.det_of[Di] != i) or np.any(R.det_of[Dj] != j):
        raise DomainError("every element of Di (Dj) must have determinant i (j)")
    Di_s = R.scale(Di, int(f.inv(i)), "row")
    Dj_s = R.scale(Dj, int(f.inv(j)), "column")
    direct = np.unique(R.mul(Di[:, None], Dj[None, :]))
    scaled = np.unique(R.mul(Di_s[:, None], Dj_s[None, :]))
    return len(direct), len(scaled)


def verify_scaling_lemma(i: int, j: int, Di, Dj, q: int) -> bool:
    a, b = scaling_lemma_sizes(i, j, Di, Dj, q)
    return a == b


def verify_sl2_sumcover(q: int) -> bool:
    """Every matrix of M_2(F_q) is a sum of two SL_2 matrices."""
    if q > 7:
        raise ResourceLimitError("sum-cover check limited to q <= 7")
    R = ring(gf(q))
    sl2 = enumerate_tables(q).sl2
    hit = np.zeros(R.size, dtype=bool)
    for x in sl2:
        hit[R.add(x, sl2)] = True
        if hit.all():
            return True
    return bool(hit.all())
