"""Command-line front end: evaluate statistics over grids, emit CSV + manifest.

All library calls are linear-power; dB conversion happens exactly once, here,
and only for threshold sweeps.  Every run writes one CSV per curve plus a
JSON manifest (config, seed, version, collected warnings).  Exit codes:
0 success, 2 invalid configuration, 3 numerical failure, 4 validation-suite
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import KmsprodError, NonConvergenceError, ParameterError, QuadratureError
from .fading import ShadowedParams, cdf_single_grid, sample_single
from .metrics import amount_of_fading, combine_min_outage, cqei
from .oracle import pdf_by_convolution, cdf_by_convolution_grid, sample_product
from .product import ProductModel, cdf_product, mgf_product, moment_mixed, moment_product, pdf_product
from .specfun import TruncationPolicy
from .validate import run_validation

COMMANDS = (
    "pdf",
    "cdf",
    "mgf",
    "moments",
    "af",
    "cqei",
    "op-cascade",
    "op-relay",
    "sample",
    "validate",
)

_GRID_COMMANDS = {"pdf", "cdf", "mgf", "op-cascade", "op-relay"}
_DB_COMMANDS = {"op-cascade", "op-relay"}
_THREE_LINK = {"op-relay"}


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    points: int
    kind: str = "linear"  # linear | log | db

    def values(self) -> np.ndarray:
        if self.kind == "log":
            return np.geomspace(self.lo, self.hi, self.points)
        return np.linspace(self.lo, self.hi, self.points)


@dataclass
class RunConfig:
    command: str
    links: list[ShadowedParams] = field(default_factory=list)
    grid: GridSpec | None = None
    policy: TruncationPolicy = TruncationPolicy()
    seed: int = 0
    mc_samples: int = 0
    out: Path = Path(".")
    n_max: int = 4
    mixed: bool = False
    full: bool = False

    def as_manifest_dict(self) -> dict:
        return {
            "command": self.command,
            "links": [
                {
                    "kappa": p.kappa,
                    "mu": p.mu,
                    "m": p.m,
                    "gamma_bar": p.gamma_bar,
                }
                for p in self.links
            ],
            "grid": (
                None
                if self.grid is None
                else {
                    "min": self.grid.lo,
                    "max": self.grid.hi,
                    "points": self.grid.points,
                    "kind": self.grid.kind,
                }
            ),
            "policy": {
                "rel_tol": self.policy.rel_tol,
                "abs_tol": self.policy.abs_tol,
                "max_terms": self.policy.max_terms,
                "consecutive_small": self.policy.consecutive_small,
            },
            "seed": self.seed,
            "mc_samples": self.mc_samples,
            "n_max": self.n_max,
            "mixed": self.mixed,
            "full": self.full,
        }


class ConfigError(ParameterError):
    """Invalid or incomplete run configuration."""


_LINK_KEYS = ("kappa", "mu", "m", "gbar")


def _parse_grid(text: str) -> GridSpec:
    parts = text.split(":")
    if len(parts) not in (3, 4):
        raise ConfigError(f"grid must be min:max:points[:linear|log|dB], got {text!r}")
    try:
        lo = float(parts[0])
        hi = float(parts[1])
        points = int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"bad grid numbers in {text!r}: {exc}") from None
    kind = parts[3].lower() if len(parts) == 4 else "linear"
    if kind not in ("linear", "log", "db"):
        raise ConfigError(f"grid kind must be linear, log or dB, got {parts[3]!r}")
    if not lo < hi:
        raise ConfigError(f"grid needs min < max, got {lo} >= {hi}")
    if points < 2:
        raise ConfigError(f"grid needs points >= 2, got {points}")
    if kind == "log" and lo <= 0:
        raise ConfigError("log grids need min > 0")
    return GridSpec(lo, hi, points, kind)


def parse_params(source) -> RunConfig:
    """Build a RunConfig from `key=value` text (str) or a mapping.

    Accepted keys: command, kappa1..3, mu1..3, m1..3, gbar1..3, grid,
    rel_tol, abs_tol, max_terms, seed, mc_samples, n_max, mixed, full, out.
    Violated invariants are reported by name; missing keys are listed.
    """
    if isinstance(source, str):
        raw: dict[str, str] = {}
        for tok in source.replace("\n", " ").split():
            if tok.startswith("#"):
                break
            if "=" not in tok:
                raise ConfigError(f"expected key=value, got {tok!r}")
            key, _, val = tok.partition("=")
            raw[key.strip()] = val.strip()
    else:
        raw = {k: v for k, v in dict(source).items() if v is not None}

    command = raw.pop("command", None)
    if command not in COMMANDS:
        raise ConfigError(
            f"command must be one of {', '.join(COMMANDS)}; got {command!r}"
        )

    def pop_float(key, default=None):
        if key not in raw:
            return default
        try:
            return float(raw.pop(key))
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be a number") from None

    def pop_int(key, default):
        if key not in raw:
            return default
        try:
            return int(raw.pop(key))
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be an integer") from None

    n_links = 3 if command in _THREE_LINK else (0 if command == "validate" else 2)
    links = []
    missing = []
    for i in range(1, n_links + 1):
        vals = {}
        for key in _LINK_KEYS:
            v = pop_float(f"{key}{i}")
            if v is None and key != "gbar":
                missing.append(f"{key}{i}")
            vals[key] = v
        if not missing:
            try:
                links.append(
                    ShadowedParams(
                        kappa=vals["kappa"],
                        mu=vals["mu"],
                        m=vals["m"],
                        gamma_bar=vals["gbar"] if vals["gbar"] is not None else 1.0,
                    )
                )
            except ParameterError as exc:
                raise ConfigError(f"link {i}: {exc}") from None
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")

    grid = None
    if "grid" in raw:
        grid = _parse_grid(str(raw.pop("grid")))
    elif command in _GRID_COMMANDS:
        raise ConfigError("missing required keys: grid")
    if grid is not None and grid.kind == "db" and command not in _DB_COMMANDS:
        raise ConfigError("dB grids are permitted only for threshold sweeps")
    if command == "pdf" and grid.lo <= 0.0:
        raise ConfigError("pdf grids need min > 0")
    if command == "cdf" and grid.lo < 0.0:
        raise ConfigError("cdf grids need min >= 0")
    if command == "mgf" and grid.hi >= 0.0:
        raise ConfigError("mgf grids must satisfy max < 0 (transform domain s < 0)")

    try:
        policy = TruncationPolicy(
            rel_tol=pop_float("rel_tol", 1e-12),
            abs_tol=pop_float("abs_tol", 1e-300),
            max_terms=pop_int("max_terms", 1000),
            consecutive_small=pop_int("consecutive_small", 3),
        )
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None

    config = RunConfig(
        command=command,
        links=links,
        grid=grid,
        policy=policy,
        seed=pop_int("seed", 0),
        mc_samples=pop_int("mc_samples", 0),
        out=Path(str(raw.pop("out", "."))),
        n_max=pop_int("n_max", 4),
        mixed=str(raw.pop("mixed", "")).lower() in ("1", "true", "yes"),
        full=str(raw.pop("full", "")).lower() in ("1", "true", "yes"),
    )
    if raw:
        raise ConfigError(f"unknown keys: {', '.join(sorted(raw))}")
    if config.mc_samples < 0:
        raise ConfigError("mc_samples must be >= 0")
    return config


def _thread_count() -> int:
    env = os.environ.get("KMS_THREADS", "")
    try:
        n = int(env)
    except ValueError:
        n = 0
    return max(1, n) if n else min(8, os.cpu_count() or 1)


def _map_grid(fn, values):
    """Evaluate fn over grid points concurrently, results in grid order."""
    with ThreadPoolExecutor(max_workers=_thread_count()) as pool:
        return list(pool.map(fn, values))


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _mc_pdf_columns(samples, ys, kind):
    """Histogram density estimate centered on the grid points."""
    ys = np.asarray(ys, dtype=float)
    if kind == "log":
        mids = np.sqrt(ys[:-1] * ys[1:])
        edges = np.concatenate([[ys[0] ** 2 / mids[0]], mids, [ys[-1] ** 2 / mids[-1]]])
    else:
        mids = 0.5 * (ys[:-1] + ys[1:])
        first = max(ys[0] - (mids[0] - ys[0]), 0.0)
        edges = np.concatenate([[first], mids, [ys[-1] + (ys[-1] - mids[-1])]])
    counts, _ = np.histogram(samples, bins=edges)
    widths = np.diff(edges)
    n = samples.size
    dens = counts / (n * widths)
    stderr = np.sqrt(np.maximum(counts, 1.0)) / (n * widths)
    return dens, stderr


def _run_product_curve(config: RunConfig, stat: str) -> list[tuple]:
    model = ProductModel(config.links[0], config.links[1])
    ys = config.grid.values()
    is_db = config.grid.kind == "db"
    xs = 10.0 ** (ys / 10.0) if is_db else ys

    def one(x):
        if stat == "pdf":
            sv = pdf_product(model, float(x), config.policy)
        elif stat == "cdf" or stat == "op":
            if x == 0.0:
                return (0.0, 0.0, "series", 0.0)
            sv = cdf_product(model, float(x), config.policy)
        else:  # mgf
            sv = mgf_product(model, float(x), config.policy)
        return (sv.value, sv.tail_estimate, "series", sv.max_term_ratio)

    results = _map_grid(one, xs)
    # honest curves at cancellation-flagged points: substitute the oracle
    rows = []
    oracle_cdf = None
    flagged = [
        i for i, r in enumerate(results) if r[3] > 1e12 and stat in ("cdf", "op", "pdf")
    ]
    if flagged and stat in ("cdf", "op"):
        oracle_cdf = cdf_by_convolution_grid(model, xs[flagged])
    for i, (x, r) in enumerate(zip(xs, results)):
        value, tail, source, ratio = r
        if i in flagged:
            if stat == "pdf":
                value = pdf_by_convolution(model, float(x))
            else:
                value = float(oracle_cdf[flagged.index(i)])
            source = "oracle"
            tail = abs(value) * 1e-8
        abscissa = ys[i] if is_db else x
        rows.append((float(abscissa), value, tail, source))
    if config.mc_samples:
        rng = np.random.default_rng(config.seed)
        samples = sample_product(model, rng, config.mc_samples)
        if stat == "pdf":
            dens, err = _mc_pdf_columns(samples, xs, config.grid.kind)
            rows = [r + (float(d), float(e)) for r, d, e in zip(rows, dens, err)]
        elif stat in ("cdf", "op"):
            ecdf = np.searchsorted(np.sort(samples), xs, side="right") / samples.size
            err = np.sqrt(np.maximum(ecdf * (1.0 - ecdf), 1e-12) / samples.size)
            rows = [r + (float(p), float(e)) for r, p, e in zip(rows, ecdf, err)]
        else:
            mc = [float(np.mean(np.exp(s * samples))) for s in xs]
            se = [
                float(np.std(np.exp(s * samples)) / math.sqrt(samples.size))
                for s in xs
            ]
            rows = [r + (p, e) for r, p, e in zip(rows, mc, se)]
    return rows


def _run_relay_curve(config: RunConfig) -> list[tuple]:
    sr = config.links[2]
    rd = ProductModel(config.links[0], config.links[1])
    ys = config.grid.values()
    is_db = config.grid.kind == "db"
    xs = 10.0 ** (ys / 10.0) if is_db else ys
    f_sr = cdf_single_grid(sr, xs, config.policy)

    def one(x):
        sv = cdf_product(rd, float(x), config.policy)
        value = min(max(sv.value, 0.0), 1.0)
        source = "oracle" if sv.max_term_ratio > 1e12 else "series"
        return value, sv.tail_estimate, source

    f_rd_rows = _map_grid(one, xs)
    flagged = [i for i, r in enumerate(f_rd_rows) if r[2] == "oracle"]
    if flagged:
        oracle_vals = cdf_by_convolution_grid(rd, xs[flagged])
        f_rd_rows = [
            (float(oracle_vals[flagged.index(i)]), abs(r[1]), "oracle")
            if i in flagged
            else r
            for i, r in enumerate(f_rd_rows)
        ]
    rows = []
    for i, x in enumerate(xs):
        frd, tail, source = f_rd_rows[i]
        value = combine_min_outage(float(f_sr[i]), frd)
        abscissa = ys[i] if is_db else x
        rows.append((float(abscissa), value, tail, source, float(f_sr[i]), frd))
    if config.mc_samples:
        rng = np.random.default_rng(config.seed)
        g_sr = sample_single(sr, rng, config.mc_samples)
        g_rd = sample_product(rd, rng, config.mc_samples)
        approx = np.minimum(g_sr, g_rd)
        exact = g_sr * g_rd / (g_sr + g_rd + 1.0)
        n = config.mc_samples
        for i, x in enumerate(xs):
            p = float(np.mean(approx <= x))
            q = float(np.mean(exact <= x))
            se = math.sqrt(max(p * (1.0 - p), 1e-12) / n)
            rows[i] = rows[i] + (p, se, q)
    return rows


def run(config: RunConfig) -> int:
    """Execute a parsed configuration; returns the process exit status."""
    out_dir = config.out
    out_dir.mkdir(parents=True, exist_ok=True)
    collected: list[str] = []
    outputs: list[str] = []
    status = 0
    try:
        with warnings.catch_warnings(record=True) as wlist:
            warnings.simplefilter("always")
            status = _dispatch(config, out_dir, outputs)
        collected = sorted({f"{w.category.__name__}: {w.message}" for w in wlist})
    except ConfigError:
        raise
    except (NonConvergenceError, QuadratureError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except KmsprodError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    manifest = {
        "version": __version__,
        "config": config.as_manifest_dict(),
        "seed": config.seed,
        "warnings": collected,
        "outputs": outputs,
        "status": status,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return status


def _dispatch(config: RunConfig, out_dir: Path, outputs: list[str]) -> int:
    cmd = config.command
    if cmd in ("pdf", "cdf", "mgf"):
        stat = cmd
        rows = _run_product_curve(config, stat)
        abscissa = "s" if cmd == "mgf" else "y"
        header = [abscissa, "value", "tail_estimate", "source"]
        if config.mc_samples:
            header += ["mc_value", "mc_stderr"]
        name = f"{cmd}.csv"
        _write_csv(out_dir / name, header, rows)
        outputs.append(name)
        return 0
    if cmd == "op-cascade":
        rows = _run_product_curve(config, "op")
        abscissa = "gamma_th_db" if config.grid.kind == "db" else "gamma_th"
        header = [abscissa, "value", "tail_estimate", "source"]
        if config.mc_samples:
            header += ["mc_value", "mc_stderr"]
        _write_csv(out_dir / "op_cascade.csv", header, rows)
        outputs.append("op_cascade.csv")
        return 0
    if cmd == "op-relay":
        rows = _run_relay_curve(config)
        abscissa = "gamma_th_db" if config.grid.kind == "db" else "gamma_th"
        header = [abscissa, "value", "tail_estimate", "source", "f_sr", "f_rd"]
        if config.mc_samples:
            header += ["mc_value", "mc_stderr", "mc_exact_value"]
        _write_csv(out_dir / "op_relay.csv", header, rows)
        outputs.append("op_relay.csv")
        return 0
    if cmd == "moments":
        model = ProductModel(config.links[0], config.links[1])
        rows = []
        for n in range(config.n_max + 1):
            if config.mixed:
                value = moment_mixed(config.links[0], config.links[1], n)
            else:
                value = moment_product(model, n)
            rows.append((n, value))
        _write_csv(out_dir / "moments.csv", ["n", "value"], rows)
        outputs.append("moments.csv")
        return 0
    if cmd in ("af", "cqei"):
        model = ProductModel(config.links[0], config.links[1])
        value = amount_of_fading(model) if cmd == "af" else cqei(model)
        _write_csv(out_dir / f"{cmd}.csv", ["metric", "value"], [(cmd, value)])
        outputs.append(f"{cmd}.csv")
        return 0
    if cmd == "sample":
        model = ProductModel(config.links[0], config.links[1])
        rng = np.random.default_rng(config.seed)
        count = config.mc_samples or 100_000
        values = sample_product(model, rng, count)
        _write_csv(
            out_dir / "samples.csv",
            ["index", "value"],
            list(enumerate(values.tolist())),
        )
        outputs.append("samples.csv")
        return 0
    if cmd == "validate":
        report = run_validation(config.seed, full=config.full)
        with open(out_dir / "validation_report.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        outputs.append("validation_report.json")
        for check in report["checks"]:
            print(f"{'PASS' if check['passed'] else 'FAIL'}  {check['name']}")
        return 0 if report["passed"] else 4
    raise ConfigError(f"unhandled command {cmd!r}")


def _build_argparser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="kmsprod",
        description=(
            "Series statistics and performance metrics for the product of "
            "two kappa-mu shadowed fading variables"
        ),
    )
    ap.add_argument("command", choices=COMMANDS)
    for i in (1, 2, 3):
        ap.add_argument(f"--k{i}", type=float, help=f"kappa of link {i}")
        ap.add_argument(f"--mu{i}", type=float)
        ap.add_argument(f"--m{i}", type=float)
        ap.add_argument(f"--gbar{i}", type=float, help=f"mean power (default 1)")
    ap.add_argument("--grid", help="min:max:points[:linear|log|dB]")
    ap.add_argument("--rel-tol", type=float, dest="rel_tol")
    ap.add_argument("--abs-tol", type=float, dest="abs_tol")
    ap.add_argument("--max-terms", type=int, dest="max_terms")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mc-samples", type=int, dest="mc_samples")
    ap.add_argument("--n-max", type=int, dest="n_max")
    ap.add_argument("--mixed", action="store_true")
    ap.add_argument("--full", action="store_true")
    ap.add_argument("--out", default=".")
    return ap


def main(argv=None) -> int:
    ap = _build_argparser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    raw = {
        "command": ns.command,
        "grid": ns.grid,
        "seed": ns.seed,
        "out": ns.out,
    }
    for i in (1, 2, 3):
        raw[f"kappa{i}"] = getattr(ns, f"k{i}")
        raw[f"mu{i}"] = getattr(ns, f"mu{i}")
        raw[f"m{i}"] = getattr(ns, f"m{i}")
        raw[f"gbar{i}"] = getattr(ns, f"gbar{i}")
    for key in ("rel_tol", "abs_tol", "max_terms", "mc_samples", "n_max"):
        raw[key] = getattr(ns, key)
    if ns.mixed:
        raw["mixed"] = "true"
    if ns.full:
        raw["full"] = "true"
    try:
        config = parse_params(raw)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    try:
        return run(config)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
