"""Image sizes of matrix polynomials on sampled subsets, against predicted lower bounds.

Images are computed exactly at the set level: ``f(A, B, C) = A + BC`` is
``A + (BC)`` with ``BC`` reduced to its support first, so the cost is
governed by set sizes (at most q^4 each), never by |A||B||C|.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, ResourceLimitError
from .matrix import MatrixRing, enumerate_tables, ring

POLYNOMIALS = {
    # name: number of variables
    "sum": 2,
    "product": 2,
    "x_plus_yz": 3,
    "x_times_y_plus_z": 3,
    "xy_plus_z_plus_t": 4,
    "sumproduct_max": 1,
}
DOMAINS = ("M2", "SL2", "GL2", "D0")
THEOREMS = (
    "product",
    "sum",
    "x_plus_yz",
    "x_times_y_plus_z",
    "triple",
    "sumproduct",
    "sum_eps",
)
CHUNK = 1 << 22
CSV_COLUMNS = (
    "q",
    "poly",
    "domains",
    "sizes",
    "image",
    "q4",
    "ratio",
    "predicted_bound",
    "bound_ratio",
    "seed",
    "trial",
    "ms",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment cell.

    ``sizes`` holds one entry per distinct set: an int is an absolute size, a
    float is an exponent ``e`` meaning ``round(q**e)`` capped at the domain.
    ``variables`` names the set feeding each argument; ``"AAA"`` evaluates
    f(A, A, A), the default ``"ABC"`` uses independent sets.
    """

    q: int
    polynomial: str
    domains: tuple[str, ...]
    sizes: tuple[int | float, ...]
    trials: int = 1
    seed: int = 0
    variables: str | None = None

    def __post_init__(self):
        if self.polynomial not in POLYNOMIALS:
            raise DomainError(f"unknown polynomial {self.polynomial!r}")
        if self.trials < 1:
            raise DomainError("trials must be >= 1")
        letters = self.letters
        if len(letters) != POLYNOMIALS[self.polynomial]:
            raise DomainError(f"{self.polynomial} takes {POLYNOMIALS[self.polynomial]} arguments")
        nsets = len(dict.fromkeys(letters))
        if len(self.domains) != nsets or len(self.sizes) != nsets:
            raise DomainError(f"need one domain and one size per distinct set ({nsets})")
        for d in self.domains:
            if d not in DOMAINS:
                raise DomainError(f"unknown domain {d!r}")
        for d, s in zip(self.domains, self.absolute_sizes()):
            if s < 0 or s > domain_size(d, self.q):
                raise DomainError(f"size {s} exceeds |{d}| = {domain_size(d, self.q)}")

    @property
    def letters(self) -> str:
        if self.variables is not None:
            return self.variables
        return "ABCD"[: POLYNOMIALS[self.polynomial]]

    def absolute_sizes(self) -> tuple[int, ...]:
        out = []
        for d, s in zip(self.domains, self.sizes):
            if isinstance(s, float):
                s = min(round(self.q**s), domain_size(d, self.q))
            out.append(int(s))
        return tuple(out)


@dataclass
class ExperimentRecord:
    config: dict
    images: list[int]
    predicted_bound: float | None
    theorem: str | None
    ratios: list[float]
    covered: list[bool]
    runtime_ms: list[float] | None = field(default=None)
    extra: dict = field(default_factory=dict)

    def to_dict(self, timing: bool = True) -> dict:
        out = asdict(self)
        if not timing:
            out["runtime_ms"] = None
        return out


def domain_size(name: str, q: int) -> int:
    return {
        "M2": q**4,
        "SL2": q**3 - q,
        "GL2": (q * q - 1) * (q * q - q),
        "D0": q**3 + q * q - q,
    }[name]


def trial_rng(seed: int, trial: int, stream: int = 0) -> np.random.Generator:
    """Independent stream per (seed, trial, set); independent of scheduling."""
    return np.random.default_rng([seed, trial, stream])


def sample_subset(domain: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform ``size``-subset of ``domain`` without replacement.

    It is the prefix of a seeded shuffle, so for a fixed rng state a smaller
    sample is always contained in a larger one.
    """
    domain = np.asarray(domain, dtype=np.int64)
    if size > len(domain) or size < 0:
        raise DomainError(f"cannot sample {size} of {len(domain)} elements")
    return domain[rng.permutation(len(domain))[:size]]


# -- exact images ------------------------------------------------------------------------------
def _support(R: MatrixRing, X: np.ndarray, Y: np.ndarray, op: str) -> np.ndarray:
    present = np.zeros(R.size, dtype=bool)
    X, Y = np.asarray(X, dtype=np.int64), np.asarray(Y, dtype=np.int64)
    if len(X) == 0 or len(Y) == 0:
        return np.zeros(0, dtype=np.int64)
    # the smaller set drives the outer loop
    fn = R.add if op == "add" else R.mul
    rows = max(1, CHUNK // len(Y))
    for s in range(0, len(X), rows):
        present[fn(X[s : s + rows, None], Y[None, :])] = True
    return np.flatnonzero(present)


def image_set(q: int, polynomial: str, *sets) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Support of the image; for ``sumproduct_max`` the pair (A+A, AA)."""
    if polynomial not in POLYNOMIALS:
        raise DomainError(f"unknown polynomial {polynomial!r}")
    if len(sets) != POLYNOMIALS[polynomial]:
        raise DomainError(f"{polynomial} takes {POLYNOMIALS[polynomial]} sets, got {len(sets)}")
    R = ring(q)
    if polynomial == "sum":
        return _support(R, sets[0], sets[1], "add")
    if polynomial == "product":
        return _support(R, sets[0], sets[1], "mul")
    if polynomial == "x_plus_yz":
        return _support(R, sets[0], _support(R, sets[1], sets[2], "mul"), "add")
    if polynomial == "x_times_y_plus_z":
        return _support(R, sets[0], _support(R, sets[1], sets[2], "add"), "mul")
    if polynomial == "xy_plus_z_plus_t":
        return _support(R, _support(R, sets[0], sets[1], "mul"), _support(R, sets[2], sets[3], "add"), "add")
    a = sets[0]
    return _support(R, a, a, "add"), _support(R, a, a, "mul")


def image_size(q: int, polynomial: str, *sets) -> int:
    img = image_set(q, polynomial, *sets)
    if polynomial == "sumproduct_max":
        return max(len(img[0]), len(img[1]))
    return len(img)


# -- predicted bounds ---------------------------------------------------------------------
def predicted_bound(theorem: str, sizes, q: int, eps: float | None = None) -> float:
    """Right-hand side of a lower bound with implied constant 1.

    ``product``: A, B in SL2; ``sum``: A in SL2, B in M2; ``x_plus_yz``:
    A in M2, B, C in SL2; ``x_times_y_plus_z``: A, B in SL2, C in M2;
    ``triple``: three sets in M2 (x(y+z) or x+yz); ``sumproduct``: one set in
    M2, bounding max(|A+A|, |AA|); ``sum_eps``: one set in SL2, bounding
    |A+A| for the exponent gain ``eps``.
    """
    s = [float(x) for x in sizes]
    if any(x < 0 for x in s):
        raise DomainError("sizes must be non-negative")
    if theorem == "product":
        a, b = s
        return min(q**3, a * b / q**2)
    if theorem == "sum":
        a, b = s
        return min(a * a * b / q**3, a * q)
    if theorem == "x_plus_yz":
        a, b, c = s
        return min(q**4, q**3 * a, a * b * b * c * c / q**7, b * c / q)
    if theorem == "x_times_y_plus_z":
        a, b, c = s
        return min(q**4, a * b * b * c / q**5, a * b / q)
    if theorem == "triple":
        a, b, c = s
        return min(a * b * c / q**7, q**4)
    if theorem == "sumproduct":
        (a,) = s
        return min(a * a / q**3.5, q * q * math.sqrt(a))
    if theorem == "sum_eps":
        if eps is None:
            raise DomainError("sum_eps needs eps")
        (a,) = s
        return min(a ** (1 + eps), a ** (4 / 3))
    raise DomainError(f"unknown theorem id {theorem!r}")


def theorem_for(polynomial: str, domains: tuple[str, ...], letters: str) -> str | None:
    """Lower bound that applies to a configuration, or None when none does."""
    doms = [domains[list(dict.fromkeys(letters)).index(ch)] for ch in letters]
    sl2 = [d == "SL2" for d in doms]
    if polynomial == "product" and all(sl2):
        return "product"
    if polynomial == "sum" and sl2[0]:
        return "sum"
    if polynomial == "x_plus_yz":
        return "x_plus_yz" if sl2[1] and sl2[2] else "triple"
    if polynomial == "x_times_y_plus_z":
        return "x_times_y_plus_z" if sl2[0] and sl2[1] else "triple"
    if polynomial == "sumproduct_max":
        return "sumproduct"
    return None


def mixing_sum_bound(size_a: int, size_b: int, q: int, lam: float) -> float:
    """Smallest |A+B| (A in SL2) compatible with the mixing lemma for the unit Cayley graph.

    Every (a, b) gives the edge (a + b, b), so |A||B| <= e(A+B, B) <= d|A+B||B|/n
    + lam sqrt(|A+B||B|).  Solving for x = sqrt|A+B| gives the positive root.
    """
    d, n = q**3 - q, q**4
    a2 = d * size_b / n
    b1 = lam * math.sqrt(size_b)
    c0 = -float(size_a) * size_b
    x = (-b1 + math.sqrt(b1 * b1 - 4 * a2 * c0)) / (2 * a2)
    return x * x


# -- experiments ------------------------------------------------------------------------
def _trial_sets(config: ExperimentConfig, trial: int) -> list[np.ndarray]:
    tables = enumerate_tables(config.q)
    sets = []
    for k, (dom, size) in enumerate(zip(config.domains, config.absolute_sizes())):
        sets.append(sample_subset(tables.domain(dom), size, trial_rng(config.seed, trial, k)))
    order = list(dict.fromkeys(config.letters))
    return [sets[order.index(ch)] for ch in config.letters]


def _one_trial(config: ExperimentConfig, trial: int) -> tuple[int, float]:
    start = time.perf_counter()
    sets = _trial_sets(config, trial)
    args = sets[:1] if config.polynomial == "sumproduct_max" else sets
    return image_size(config.q, config.polynomial, *args), (time.perf_counter() - start) * 1e3


def _run_trials(config: ExperimentConfig, threads: int) -> list[tuple[int, float]]:
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda t: _one_trial(config, t), range(config.trials)))
    return [_one_trial(config, t) for t in range(config.trials)]


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentRecord:
    """Image size per trial plus the applicable predicted bound."""
    q4 = config.q**4
    results = _run_trials(config, threads)
    images = [r[0] for r in results]
    theorem = theorem_for(config.polynomial, config.domains, config.letters)
    bound = None
    if theorem is not None:
        sizes = [config.absolute_sizes()[list(dict.fromkeys(config.letters)).index(ch)] for ch in config.letters]
        bound = predicted_bound(theorem, sizes, config.q)
    cfg = asdict(config)
    cfg["absolute_sizes"] = list(config.absolute_sizes())
    return ExperimentRecord(
        config=cfg,
        images=images,
        predicted_bound=bound,
        theorem=theorem,
        ratios=[im / q4 for im in images],
        covered=[im == q4 for im in images],
        runtime_ms=[r[1] for r in results],
    )


def coverage_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentRecord:
    """Does f(A, A, A, A) (or f(A, A, B, B)) cover all of M2 in each trial?"""
    if config.polynomial != "xy_plus_z_plus_t":
        raise DomainError("coverage experiments use xy_plus_z_plus_t")
    record = run_experiment(config, threads)
    record.extra["coverage_frequency"] = sum(record.covered) / len(record.covered)
    return record


def sharpness_check(q: int) -> dict:
    """x(y+z) on D0 x M2 x M2: the image is exactly the singular matrices."""
    if q > 5:
        raise ResourceLimitError("sharpness check limited to q <= 5")
    tables = enumerate_tables(q)
    full = tables.all
    image = image_set(q, "x_times_y_plus_z", tables.domain("D0"), full, full)
    singular = np.sort(tables.domain("D0"))
    return {
        "q": q,
        "image_size": int(len(image)),
        "expected": q**3 + q * q - q,
        "subset_of_singular": bool(np.isin(image, singular).all()),
        "equals_singular": bool(np.array_equal(image, singular)),
    }


# -- sweeps --------------------------------------------------------------------------------
DEFAULT_DOMAINS = {
    "sum": ("SL2", "M2"),
    "product": ("SL2", "SL2"),
    "x_plus_yz": ("SL2", "SL2", "SL2"),
    "x_times_y_plus_z": ("SL2", "SL2", "SL2"),
    "xy_plus_z_plus_t": ("M2", "M2", "M2", "M2"),
    "sumproduct_max": ("M2",),
}


@dataclass
class SweepResult:
    rows: list[dict]
    cells: list[dict]
    epsilon: list[dict]

    def csv_text(self, timing: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            row = dict(row)
            if not timing:
                row["ms"] = ""
            writer.writerow(row)
        return buf.getvalue()

    def summary(self) -> dict:
        return {"cells": self.cells, "epsilon": self.epsilon}

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=1)


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def threshold_sweep(
    polynomial: str,
    qs,
    exponents,
    trials: int = 20,
    seed: int = 0,
    domains: tuple[str, ...] | None = None,
    threads: int = 1,
) -> SweepResult:
    """Mean image/q^4 per (q, exponent) cell; all sets share the exponent."""
    domains = tuple(domains or DEFAULT_DOMAINS[polynomial])
    top = 3.0 if all(d != "M2" for d in domains) else 4.0
    for e in exponents:
        if not 1.0 <= float(e) <= top:
            raise DomainError(f"exponent {e} outside [1, {top}] for domains {domains}")
    rows, cells, eps_rows = [], [], []
    for q in qs:
        q4 = q**4
        for e in exponents:
            config = ExperimentConfig(q, polynomial, domains, tuple(float(e) for _ in domains), trials, seed)
            record = run_experiment(config, threads)
            sizes = config.absolute_sizes()
            bound = record.predicted_bound
            for t, (image, ms) in enumerate(zip(record.images, record.runtime_ms)):
                rows.append(
                    {
                        "q": q,
                        "poly": polynomial,
                        "domains": ";".join(domains),
                        "sizes": ";".join(map(str, sizes)),
                        "image": image,
                        "q4": q4,
                        "ratio": _fmt(image / q4),
                        "predicted_bound": _fmt(bound),
                        "bound_ratio": _fmt(image / bound) if bound else "",
                        "seed": seed,
                        "trial": t,
                        "ms": f"{ms:.3f}",
                    }
                )
            ratios = np.array(record.ratios)
            cells.append(
                {
                    "q": q,
                    "e": float(e),
                    "sizes": list(sizes),
                    "mean_ratio": float(ratios.mean()),
                    "min_ratio": float(ratios.min()),
                    "trials": trials,
                    "theorem": record.theorem,
                    "predicted_bound": bound,
                    "min_bound_ratio": (min(record.images) / bound) if bound else None,
                }
            )
            if polynomial == "sum" and domains == ("SL2", "SL2"):
                for eps in (0.1, 0.25, 0.5):
                    eps_rows.append(
                        {
                            "q": q,
                            "e": float(e),
                            "eps": eps,
                            "mean_image": float(np.mean(record.images)),
                            "bound": predicted_bound("sum_eps", sizes[:1], q, eps),
                            "hypothesis_size": q ** (3 / (2 - eps)),
                        }
                    )
    return SweepResult(rows, cells, eps_rows)


def diagonal_table(cells: list[dict]) -> str:
    """Plain CSV view {q, e, mean_ratio, min_ratio, trials} of sweep cells."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["q", "e", "mean_ratio", "min_ratio", "trials"])
    for c in cells:
        writer.writerow([c["q"], c["e"], repr(c["mean_ratio"]), repr(c["min_ratio"]), c["trials"]])
    return buf.getvalue()
