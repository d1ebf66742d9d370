"""Command-line entry point: ``mringlab <subcommand> [flags]``.

Exit codes: 0 success, 1 verification mismatch (reported, not hidden),
2 usage error, 3 resource limit (budget, field size, unwritable output).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import MatrixLabError, ResourceLimitError
from .expansion import (
    DEFAULT_DOMAINS,
    POLYNOMIALS,
    ExperimentConfig,
    coverage_experiment,
    diagonal_table,
    run_experiment,
    sharpness_check,
    threshold_sweep,
)
from .field import gf
from .graphs import FAMILIES, GraphSpec, build_graph
from .matrix import enumerate_tables
from .spectral import second_eigenvalue
from .verify import (
    CASE_FAMILIES,
    DECOMPOSITIONS,
    verify_case_analysis,
    verify_decomposition,
    verify_normality,
    verify_scaling_lemma,
    verify_sl2_sumcover,
)

log = logging.getLogger("mringlab")

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE, EXIT_RESOURCE = 0, 1, 2, 3
SPECTRUM_CACHE_VERSION = 1


# -- persistence ---------------------------------------------------------------------------
def atomic_write(path: Path, data: str | bytes) -> None:
    """Write via a temporary file in the same directory and rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


@dataclass
class RunManifest:
    argv: list[str]
    command: str
    q: int | None
    seed: int
    version: str
    outputs: list[str] = field(default_factory=list)
    wall_clock_ms: float | None = None
    stages: dict[str, float] = field(default_factory=dict)

    def to_json(self, timing: bool) -> str:
        out = asdict(self)
        if not timing:
            out["wall_clock_ms"] = None
            out["stages"] = {k: None for k in self.stages}
        return json.dumps(out, sort_keys=True, indent=1) + "\n"


class CacheManager:
    """Group tables and spectra on disk, keyed by (q, modulus, family)."""

    def __init__(self, directory: Path | str):
        self.dir = Path(directory)
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
            probe = self.dir / ".write-probe"
            probe.write_bytes(b"")
            probe.unlink()
        except OSError as exc:
            raise ResourceLimitError(f"cache directory {self.dir} is not writable: {exc}") from exc

    def tables(self, q: int):
        return enumerate_tables(q, cache_dir=self.dir)

    def spectrum_path(self, spec: GraphSpec, method: str) -> Path:
        f = gf(spec.q)
        mod = "-".join(map(str, f.modulus)) or "prime"
        key = hashlib.sha256(json.dumps(spec.to_dict(), sort_keys=True).encode()).hexdigest()[:16]
        return self.dir / f"spectrum_q{spec.q}_{mod}_{key}_{method}.npz"

    def load_spectrum(self, spec: GraphSpec, method: str) -> dict | None:
        path = self.spectrum_path(spec, method)
        if not path.exists():
            return None
        try:
            with np.load(path, allow_pickle=False) as data:
                if int(data["version"]) != SPECTRUM_CACHE_VERSION:
                    return None
                if str(data["spec"]) != json.dumps(spec.to_dict(), sort_keys=True):
                    return None
                log.info("spectrum cache hit: %s", path)
                return {"lambda2": float(data["lambda2"]), "tolerance": float(data["tolerance"])}
        except Exception:  # any unreadable file is treated as absent
            log.warning("ignoring unusable spectrum cache %s; recomputing", path)
            return None

    def store_spectrum(self, spec: GraphSpec, method: str, lambda2: float, tolerance: float) -> None:
        import io

        buf = io.BytesIO()
        np.savez(
            buf,
            version=np.int64(SPECTRUM_CACHE_VERSION),
            spec=np.str_(json.dumps(spec.to_dict(), sort_keys=True)),
            lambda2=np.float64(lambda2),
            tolerance=np.float64(tolerance),
        )
        atomic_write(self.spectrum_path(spec, method), buf.getvalue())


# -- argument parsing --------------------------------------------------------------------------
def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--q", type=int, default=3, help="field order")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="output file (default: stdout)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--budget-mb", type=float, default=None, help="dense storage budget per graph")
    p.add_argument("--config", type=Path, default=None, help="key=value file; flags override it")
    p.add_argument("--no-timing", action="store_true", help="omit timings for byte-stable output")
    p.add_argument("--cache-dir", type=Path, default=None)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mringlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate", help="enumerate SL2, GL2 and the determinant slices")
    _common(p)

    p = sub.add_parser("spectrum", help="second eigenvalue of a graph family")
    _common(p)
    p.add_argument("--family", default="unit-cayley", choices=[f for f in FAMILIES if f not in ("tensor", "custom")])
    p.add_argument("--param", type=int, default=None)
    p.add_argument("--method", default="auto", choices=["auto", "dense-full", "jacobi", "via-mmt", "iterative-extreme"])
    p.add_argument("--assume-normal", action="store_true", help="accept non-normal digraphs (singular-value bound)")
    p.add_argument("--bound", type=float, default=None, help="claimed lambda bound to report a ratio against")

    p = sub.add_parser("verify", help="brute-force structure verification")
    _common(p)
    p.add_argument(
        "--target",
        required=True,
        help="g1-mmt | g2-mmt | g31-squared | cases:<family> | normality:<family> | scaling | sumcover",
    )
    p.add_argument("--mode", default="exhaustive", choices=["exhaustive", "sampled"])
    p.add_argument("--k", type=int, default=100_000, help="sample count in sampled mode")

    p = sub.add_parser("experiment", help="image sizes over sampled subsets")
    _common(p)
    p.add_argument("--poly", default="x_plus_yz", choices=sorted(POLYNOMIALS))
    p.add_argument("--domains", default=None, help="comma list per distinct set, e.g. SL2,M2")
    p.add_argument("--sizes", default=None, help="comma list; integers are sizes, decimals are exponents")
    p.add_argument("--variables", default=None, help="argument-to-set map, e.g. AAAA or AABB")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--sharpness", action="store_true", help="run the singular-matrix sharpness check instead")

    p = sub.add_parser("sweep", help="threshold sweep over q and exponents; CSV plus JSON summary")
    _common(p)
    p.add_argument("--poly", default="x_plus_yz", choices=sorted(POLYNOMIALS))
    p.add_argument("--qs", type=_ints, default=None, help="comma list of q (default: --q)")
    p.add_argument("--exponents", type=_floats, default=[2.0, 2.25, 2.5, 2.75, 3.0])
    p.add_argument("--domains", default=None)
    p.add_argument("--trials", type=int, default=20)

    p = sub.add_parser("report", help="summarise manifests found under a directory")
    _common(p)
    p.add_argument("inputs", type=Path, nargs="?", default=Path("."))
    return parser


def _read_config(path: Path) -> dict[str, str]:
    values = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"config line without '=': {line!r}")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def parse_args(argv: list[str]) -> argparse.Namespace:
    """Flags > config file > defaults."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    try:
        values = _read_config(args.config)
    except (OSError, ValueError) as exc:
        parser.error(f"cannot read config {args.config}: {exc}")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None:
            parser.error(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = action.type(raw) if action.type else raw
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


# -- commands --------------------------------------------------------------------------------
def _tables(args):
    if args.cache_dir is not None:
        return CacheManager(args.cache_dir).tables(args.q)
    return enumerate_tables(args.q)


def cmd_enumerate(args, manifest) -> tuple[dict, int]:
    T = _tables(args)
    f = T.field
    return {
        "q": f.order,
        "modulus": list(f.modulus),
        "m2": int(len(T.all)),
        "sl2": int(len(T.sl2)),
        "gl2": int(len(T.gl2)),
        "d0": int(len(T.slice(0))),
        "slices": {str(a): int(len(T.slice(a))) for a in range(f.order)},
    }, EXIT_OK


def cmd_spectrum(args, manifest) -> tuple[dict, int]:
    spec = GraphSpec(args.family, args.q, args.param)
    if args.q > 27:
        raise ResourceLimitError(f"q={args.q} exceeds the enumeration limit")
    cache = CacheManager(args.cache_dir) if args.cache_dir is not None else None
    if cache is not None:
        cache.tables(args.q)
        hit = cache.load_spectrum(spec, args.method)
    else:
        hit = None
    start = time.perf_counter()
    g = build_graph(spec, budget_mb=args.budget_mb)
    manifest.stages["build"] = (time.perf_counter() - start) * 1e3
    if hit is not None:
        out = {
            "family": spec.name,
            "q": args.q,
            "n": g.n,
            "d": g.degree,
            "lambda2": hit["lambda2"],
            "method": args.method,
            "tolerance": hit["tolerance"],
            "claimed_bound": args.bound,
            "ratio": hit["lambda2"] / args.bound if args.bound else None,
            "runtime_ms": None,
            "cached": True,
        }
        return out, EXIT_OK
    report = second_eigenvalue(g, method=args.method, assume_normal=args.assume_normal, claimed_bound=args.bound)
    manifest.stages["solve"] = report.runtime_ms
    if cache is not None:
        cache.store_spectrum(spec, args.method, report.lambda2, report.tolerance)
    out = report.to_dict(timing=not args.no_timing)
    out["cached"] = False
    if report.normality != "n/a":
        out["normality"] = report.normality
    return out, EXIT_OK


def cmd_verify(args, manifest) -> tuple[dict, int]:
    target = args.target
    k = args.k if args.mode == "sampled" else None
    if target in DECOMPOSITIONS:
        report = verify_decomposition(target, args.q, args.mode, args.k, args.seed, args.threads)
    elif target.startswith("cases:"):
        family = target.split(":", 1)[1]
        if family not in CASE_FAMILIES:
            raise MatrixLabError(f"no case analysis for {family!r}; choose from {CASE_FAMILIES}")
        report = verify_case_analysis(family, args.q, args.mode, k, args.seed, args.threads)
    elif target.startswith("normality:"):
        g = build_graph(GraphSpec(target.split(":", 1)[1], args.q), budget_mb=args.budget_mb, audit=False)
        report = verify_normality(g, args.mode, k, args.seed, args.threads)
    elif target == "sumcover":
        ok = verify_sl2_sumcover(args.q)
        out = {"target": "sumcover", "q": args.q, "verdict": "exact" if ok else "mismatch"}
        return out, EXIT_OK if ok else EXIT_MISMATCH
    elif target == "scaling":
        T = _tables(args)
        results = {}
        for i in range(1, args.q):
            for j in range(1, args.q):
                results[f"{i},{j}"] = verify_scaling_lemma(i, j, T.slice(i), T.slice(j), args.q)
        ok = all(results.values())
        out = {"target": "scaling", "q": args.q, "pairs": results, "verdict": "exact" if ok else "mismatch"}
        return out, EXIT_OK if ok else EXIT_MISMATCH
    else:
        raise MatrixLabError(f"unknown verification target {target!r}")
    return report.to_dict(timing=not args.no_timing), EXIT_OK if report.ok else EXIT_MISMATCH


def _parse_sizes(text: str | None, n: int, default: float) -> tuple:
    if text is None:
        return tuple(default for _ in range(n))
    return tuple(float(x) if "." in x or "e" in x.lower() else int(x) for x in text.split(","))


def cmd_experiment(args, manifest) -> tuple[dict, int]:
    if args.sharpness:
        return sharpness_check(args.q), EXIT_OK
    letters = args.variables or "ABCD"[: POLYNOMIALS[args.poly]]
    nsets = len(dict.fromkeys(letters))
    domains = tuple(args.domains.split(",")) if args.domains else DEFAULT_DOMAINS[args.poly][:nsets]
    sizes = _parse_sizes(args.sizes, nsets, 2.5)
    config = ExperimentConfig(args.q, args.poly, domains, sizes, args.trials, args.seed, args.variables)
    if args.poly == "xy_plus_z_plus_t":
        record = coverage_experiment(config, args.threads)
    else:
        record = run_experiment(config, args.threads)
    return record.to_dict(timing=not args.no_timing), EXIT_OK


def cmd_sweep(args, manifest):
    domains = tuple(args.domains.split(",")) if args.domains else None
    qs = args.qs or [args.q]
    result = threshold_sweep(args.poly, qs, args.exponents, args.trials, args.seed, domains, args.threads)
    summary = result.summary()
    summary["table"] = diagonal_table(result.cells)
    return (result.csv_text(timing=not args.no_timing), summary), EXIT_OK


def cmd_report(args, manifest) -> tuple[dict, int]:
    runs = []
    for path in sorted(Path(args.inputs).rglob("*.manifest.json")):
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError):
            log.warning("skipping unreadable manifest %s", path)
            continue
        entry = {"manifest": str(path), "command": data.get("command"), "q": data.get("q"), "outputs": data.get("outputs", [])}
        verdicts = []
        for out in entry["outputs"]:
            p = Path(out)
            if p.suffix == ".json" and p.exists():
                try:
                    verdicts.append(json.loads(p.read_text()).get("verdict"))
                except (json.JSONDecodeError, AttributeError):
                    pass
        entry["verdicts"] = [v for v in verdicts if v is not None]
        runs.append(entry)
    return {"runs": runs, "count": len(runs)}, EXIT_OK


COMMANDS = {
    "enumerate": cmd_enumerate,
    "spectrum": cmd_spectrum,
    "verify": cmd_verify,
    "experiment": cmd_experiment,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def _emit(args, manifest: RunManifest, payload) -> None:
    timing = not args.no_timing
    if args.command == "sweep":
        csv_text, summary = payload
        if args.out is None:
            sys.stdout.write(csv_text)
            return
        summary_path = args.out.with_suffix(".json")
        atomic_write(args.out, csv_text)
        atomic_write(summary_path, json.dumps(summary, sort_keys=True, indent=1) + "\n")
        manifest.outputs += [str(args.out), str(summary_path)]
    else:
        text = json.dumps(payload, sort_keys=True, indent=1, default=_jsonable) + "\n"
        if args.out is None:
            sys.stdout.write(text)
            return
        atomic_write(args.out, text)
        manifest.outputs.append(str(args.out))
    manifest_path = args.out.with_name(args.out.name + ".manifest.json")
    atomic_write(manifest_path, manifest.to_json(timing))


def _jsonable(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def cli_dispatch(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors this way
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    start = time.perf_counter()
    manifest = RunManifest(argv=argv, command=args.command, q=args.q, seed=args.seed, version=__version__)
    try:
        payload, code = COMMANDS[args.command](args, manifest)
        manifest.wall_clock_ms = (time.perf_counter() - start) * 1e3
        _emit(args, manifest, payload)
    except ResourceLimitError as exc:
        print(f"mringlab: resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except OSError as exc:
        print(f"mringlab: cannot write output: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except MatrixLabError as exc:
        print(f"mringlab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return code


def main() -> None:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
