"""Mesh-ladder experiments: solve, estimate orders, bound, and report.

Usage::

    wggpe --example example1 --method wg_k1 p1 p2 --N 16 32 64 128 --out results/ex1

A YAML config file (``--config``) may hold the same keys; flags win.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .assembly import WgOperators
from .bounds import lower_bound, upper_bound
from .conforming import ConformingOperators, LagrangeSpace
from .eigensolve import GroundState, ScfConfig, scf_solve
from .exceptions import ConfigError
from .mesh import uniform_mesh
from .problem import (
    NonlinearTerm,
    ProblemSpec,
    Rectangle,
    constant_potential,
    harmonic_plus_gaussian_potential,
    harmonic_potential,
    potential_from_dict,
)
from .wg import WgSpace

__all__ = [
    "EXAMPLES",
    "ExampleEntry",
    "ExperimentConfig",
    "ReportRow",
    "ConvergenceReport",
    "CSV_COLUMNS",
    "METHODS",
    "order_estimate",
    "run_experiment",
    "emit_report",
    "report_to_csv",
    "report_to_json",
    "report_to_text",
    "load_config",
    "main",
]

log = logging.getLogger(__name__)

METHODS = ("wg_k1", "wg_k2", "p1", "p2")
FORMATS = ("csv", "json", "text")
CSV_COLUMNS = (
    "example",
    "method",
    "N",
    "h",
    "lambda",
    "energy",
    "l4norm4",
    "iters",
    "order_lambda",
    "order_energy",
    "lambda_lower",
    "lambda_upper",
)


@dataclass(frozen=True)
class ExampleEntry:
    domain: Rectangle
    potential_factory: object
    betas: tuple

    def spec(self, beta: float) -> ProblemSpec:
        return ProblemSpec(self.domain, self.potential_factory(), NonlinearTerm(beta))


EXAMPLES = {
    "example1": ExampleEntry(Rectangle.square(-8, 8), lambda: constant_potential(1.0), (1.0,)),
    "example2": ExampleEntry(Rectangle.square(-1, 1), harmonic_potential, (2.0,)),
    "example3": ExampleEntry(Rectangle.square(-6, 6), harmonic_potential, (20.0, 200.0, 2000.0)),
    "example4": ExampleEntry(Rectangle.square(-8, 8), harmonic_plus_gaussian_potential, (400.0,)),
}


def _example_name(name) -> str:
    key = str(name).strip().lower()
    for prefix in ("example", "ex"):
        if key.startswith(prefix):
            key = key[len(prefix) :]
            break
    key = f"example{key}"
    if key not in EXAMPLES:
        raise ConfigError(f"unknown example {name!r}; choose from {sorted(EXAMPLES)}")
    return key


@dataclass
class ExperimentConfig:
    """One experiment: a problem (registry example or explicit spec), methods and a mesh ladder."""

    example: str | None = None
    spec: ProblemSpec | None = None
    beta: float | None = None
    methods: tuple = ("wg_k1",)
    N: tuple = (16, 32, 64, 128)
    epsilon: float = 0.1
    scf: ScfConfig = field(default_factory=ScfConfig)
    out: str | None = None
    formats: tuple = ("text",)
    warm_start: bool = True

    def __post_init__(self):
        if (self.example is None) == (self.spec is None):
            raise ConfigError("give exactly one of an example id or an explicit problem")
        if self.example is not None:
            self.example = _example_name(self.example)
        self.methods = tuple(self.methods)
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods must not repeat")
        try:
            self.N = tuple(int(n) for n in self.N)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"mesh ladder must be integers: {self.N!r}") from exc
        if any(n < 1 for n in self.N):
            raise ConfigError("mesh sizes must be positive")
        if any(b <= a for a, b in zip(self.N, self.N[1:])):
            raise ConfigError("mesh ladder must be strictly increasing")
        if not 0.0 < float(self.epsilon) < 1.0:
            raise ConfigError("epsilon must lie in (0, 1)")
        self.epsilon = float(self.epsilon)
        if self.beta is not None:
            self.beta = float(self.beta)
            if self.beta < 0:
                raise ConfigError("beta must be non-negative")
        self.formats = tuple(self.formats)
        for f in self.formats:
            if f not in FORMATS:
                raise ConfigError(f"unknown format {f!r}; choose from {FORMATS}")

    @property
    def doubling(self) -> bool:
        return all(b == 2 * a for a, b in zip(self.N, self.N[1:]))

    def problems(self) -> list[tuple[str, ProblemSpec]]:
        """(label, spec) pairs; an example with several registered betas expands into several."""
        if self.spec is not None:
            spec = self.spec if self.beta is None else self.spec.with_beta(self.beta)
            return [("custom", spec)]
        entry = EXAMPLES[self.example]
        betas = entry.betas if self.beta is None else (self.beta,)
        if len(entry.betas) == 1:
            return [(self.example, entry.spec(b)) for b in betas]
        return [(f"{self.example}-beta{b:g}", entry.spec(b)) for b in betas]


@dataclass
class ReportRow:
    example: str
    method: str
    N: int
    h: float
    lam: float | None = None
    energy: float | None = None
    l4norm4: float | None = None
    iters: int | None = None
    order_lambda: float | None = None
    order_energy: float | None = None
    lambda_lower: float | None = None
    lambda_upper: float | None = None
    residual: float | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def values(self) -> dict:
        """Column name -> value for the CSV/JSON schema."""
        return {
            "example": self.example,
            "method": self.method,
            "N": self.N,
            "h": self.h,
            "lambda": self.lam,
            "energy": self.energy,
            "l4norm4": self.l4norm4,
            "iters": self.iters,
            "order_lambda": self.order_lambda,
            "order_energy": self.order_energy,
            "lambda_lower": self.lambda_lower,
            "lambda_upper": self.lambda_upper,
        }


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    # in-memory ground states keyed (example, method, N); never serialised
    states: dict = field(default_factory=dict, repr=False)

    @property
    def failures(self) -> list:
        return [r for r in self.rows if not r.ok]

    def row(self, example, method, N) -> ReportRow:
        for r in self.rows:
            if (r.example, r.method, r.N) == (example, method, N):
                return r
        raise KeyError((example, method, N))

    def series(self, example, method, key="lam") -> list:
        return [getattr(r, key) for r in self.rows if r.example == example and r.method == method]


def order_estimate(values) -> float | None:
    """log2 of the ratio of successive differences of three doubling-ladder values.

    Returns None (undefined order) when a difference vanishes or the two
    differences change sign.
    """
    if len(values) != 3 or any(v is None for v in values):
        return None
    a, b, c = (float(v) for v in values)
    d1, d2 = b - a, c - b
    if not (math.isfinite(d1) and math.isfinite(d2)) or d1 == 0.0 or d2 == 0.0:
        return None
    if (d1 > 0) != (d2 > 0):
        return None
    return math.log2(d1 / d2)


# ---------------------------------------------------------------- running


def _build_ops(method: str, spec: ProblemSpec, N: int, epsilon: float):
    mesh = uniform_mesh(spec.domain, N)
    if method.startswith("wg_k"):
        return WgOperators(WgSpace(mesh, int(method[4:])), spec, epsilon)
    return ConformingOperators(LagrangeSpace(mesh, int(method[1:])), spec)


def solve_cell(method: str, spec: ProblemSpec, N: int, epsilon: float = 0.1,
               scf: ScfConfig | None = None, previous: GroundState | None = None) -> GroundState:
    """Ground state for one (method, N); ``previous`` is a coarser nested solution used as start."""
    ops = _build_ops(method, spec, N, epsilon)
    x0 = None
    if previous is not None and previous.ops is not None:
        x0 = ops.prolong(previous.ops, previous.x)
    return scf_solve(ops, scf, x0=x0)


def _mesh_size(rect: Rectangle, N: int) -> float:
    """Longest triangle side (the cell diagonal) of the N x N mesh."""
    return math.hypot((rect.xmax - rect.xmin) / N, (rect.ymax - rect.ymin) / N)


def _nested(coarse: int, fine: int) -> bool:
    return fine % coarse == 0


def run_experiment(config: ExperimentConfig) -> ConvergenceReport:
    """Solve every (problem, method, N) cell; failures are recorded per cell."""
    report = ConvergenceReport()
    for label, spec in config.problems():
        for method in config.methods:
            prev = None
            for N in config.N:
                row = ReportRow(label, method, N, h=_mesh_size(spec.domain, N))
                try:
                    start = prev if (config.warm_start and prev is not None and _nested(prev[0], N)) else None
                    gs = solve_cell(method, spec, N, config.epsilon, config.scf, start and start[1])
                except Exception as exc:  # noqa: BLE001 - recorded per cell, ladder continues
                    log.warning("%s %s N=%d failed: %s", label, method, N, exc)
                    row.error = f"{type(exc).__name__}: {exc}"
                    prev = None
                else:
                    row.lam, row.energy, row.l4norm4 = gs.lam, gs.energy, gs.l4norm4
                    row.iters, row.residual = gs.iterations, gs.residual
                    report.states[(label, method, N)] = gs
                    prev = (N, gs)
                report.rows.append(row)
            _fill_orders(report, label, method, config)
        _fill_bounds(report, label, config)
    return report


def _fill_orders(report, label, method, config):
    rows = [r for r in report.rows if r.example == label and r.method == method]
    for i in range(2, len(rows)):
        trio = rows[i - 2 : i + 1]
        if not all(trio[j + 1].N == 2 * trio[j].N for j in range(2)):
            continue
        rows[i].order_lambda = order_estimate([r.lam for r in trio])
        rows[i].order_energy = order_estimate([r.energy for r in trio])


def _fill_bounds(report, label, config):
    for N in config.N:
        get = report.states.get
        wg, p1, p2 = get((label, "wg_k1", N)), get((label, "p1", N)), get((label, "p2", N))
        lower = lower_bound(wg, p2) if wg is not None and p2 is not None else None
        upper = upper_bound(p1, p2) if p1 is not None and p2 is not None else None
        for r in report.rows:
            if r.example == label and r.N == N and r.ok:
                r.lambda_lower, r.lambda_upper = lower, upper


# ---------------------------------------------------------------- output


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def report_to_csv(report: ConvergenceReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.rows:
        w.writerow([_fmt(v) for v in r.values().values()])
    return buf.getvalue()


def report_to_json(report: ConvergenceReport) -> str:
    # float repr is the shortest string that round-trips, so parsing restores the bits
    doc = {
        "columns": list(CSV_COLUMNS),
        "rows": [r.values() for r in report.rows],
        "failures": [
            {"example": r.example, "method": r.method, "N": r.N, "error": r.error}
            for r in report.failures
        ],
    }
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def report_to_text(report: ConvergenceReport) -> str:
    """One block per (example, method): lambda and energy across N plus the last order."""
    out = []
    groups = []
    for r in report.rows:
        key = (r.example, r.method)
        if key not in groups:
            groups.append(key)
    for example, method in groups:
        rows = [r for r in report.rows if (r.example, r.method) == (example, method)]
        head = ["N"] + [str(r.N) for r in rows] + ["Order"]
        lam = ["lambda"] + [_cell(r.lam, r) for r in rows] + [_order(rows[-1].order_lambda)]
        en = ["energy"] + [_cell(r.energy, r) for r in rows] + [_order(rows[-1].order_energy)]
        table = [head, lam, en]
        if any(r.lambda_lower is not None for r in rows):
            table.append(["lower"] + [_cell(r.lambda_lower, r) for r in rows] + [""])
        if any(r.lambda_upper is not None for r in rows):
            table.append(["upper"] + [_cell(r.lambda_upper, r) for r in rows] + [""])
        widths = [max(len(line[i]) for line in table) for i in range(len(head))]
        out.append(f"{example}  {method}")
        for line in table:
            out.append("  ".join(c.rjust(wd) for c, wd in zip(line, widths)).rstrip())
        out.append("")
    return "\n".join(out)


def _cell(v, row) -> str:
    if not row.ok:
        return "failed"
    return "-" if v is None else f"{v:.6f}"


def _order(v) -> str:
    return "-" if v is None else f"{v:.2f}"


_WRITERS = {"csv": (report_to_csv, ".csv"), "json": (report_to_json, ".json"), "text": (report_to_text, ".txt")}


def emit_report(report: ConvergenceReport, fmt: str, out=None) -> str | Path:
    """Render ``report``; write ``<out>.<ext>`` when ``out`` is given and return its path."""
    if fmt not in _WRITERS:
        raise ConfigError(f"unknown format {fmt!r}")
    render, ext = _WRITERS[fmt]
    text = render(report)
    if out is None:
        return text
    path = Path(out)
    path = path.with_name(path.name + ext)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


# ---------------------------------------------------------------- config / CLI

_SCF_KEYS = {f.name for f in fields(ScfConfig)}


def _as_list(v):
    if v is None:
        return None
    if isinstance(v, str):
        return [p for p in v.replace(",", " ").split() if p]
    if isinstance(v, (list, tuple)):
        out = []
        for item in v:
            out.extend(_as_list(item) if isinstance(item, str) else [item])
        return out
    return [v]


def _config_from_mapping(d: dict) -> ExperimentConfig:
    d = dict(d)
    known = {"example", "domain", "potential", "beta", "methods", "method", "N", "epsilon", "scf", "out", "format", "formats", "warm_start"}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    spec = None
    if "domain" in d or "potential" in d:
        if "domain" not in d or "potential" not in d:
            raise ConfigError("an explicit problem needs both 'domain' and 'potential'")
        try:
            spec = ProblemSpec(
                Rectangle(*map(float, d["domain"])),
                potential_from_dict(d["potential"]),
                NonlinearTerm(float(d.get("beta") or 0.0)),
            )
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid explicit problem: {exc}") from exc
    scf = d.get("scf") or {}
    if not isinstance(scf, dict) or set(scf) - _SCF_KEYS:
        raise ConfigError(f"scf overrides must be a mapping with keys from {sorted(_SCF_KEYS)}")
    kwargs = dict(
        example=d.get("example"),
        spec=spec,
        beta=d.get("beta"),
        scf=ScfConfig(**scf),
        out=d.get("out"),
        warm_start=bool(d.get("warm_start", True)),
    )
    methods = _as_list(d.get("methods", d.get("method")))
    if methods is not None:
        kwargs["methods"] = methods
    if d.get("N") is not None:
        kwargs["N"] = _as_list(d["N"])
    if d.get("epsilon") is not None:
        kwargs["epsilon"] = d["epsilon"]
    formats = _as_list(d.get("formats", d.get("format")))
    if formats is not None:
        kwargs["formats"] = formats
    return ExperimentConfig(**kwargs)


def load_config(path) -> dict:
    """Read a YAML mapping from ``path``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    return data


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wggpe", description="Weak Galerkin ground states: mesh ladders, orders and eigenvalue bounds.")
    p.add_argument("--config", help="YAML config file; flags override its keys")
    p.add_argument("--example", help="registry example: example1 .. example4")
    p.add_argument("--method", nargs="+", help=f"methods from {', '.join(METHODS)}")
    p.add_argument("--N", nargs="+", help="mesh ladder, e.g. 16 32 64 128")
    p.add_argument("--epsilon", type=float, help="stabiliser exponent (default 0.1)")
    p.add_argument("--beta", type=float, help="override the nonlinearity strength")
    p.add_argument("--out", help="output path stem; files get .csv/.json/.txt")
    p.add_argument("--format", nargs="+", help="csv, json and/or text")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(argv=None) -> tuple[ExperimentConfig, bool]:
    args = build_parser().parse_args(argv)
    d = load_config(args.config) if args.config else {}
    if args.example is not None:
        d.pop("domain", None)
        d.pop("potential", None)
        d["example"] = args.example
    for key, val in (("method", args.method), ("N", args.N), ("epsilon", args.epsilon),
                     ("beta", args.beta), ("out", args.out), ("format", args.format)):
        if val is not None:
            if key in ("method", "format"):
                d.pop(key + "s", None)
            d[key] = val
    if "example" not in d and "domain" not in d:
        raise ConfigError("no problem given: use --example or a config with domain/potential")
    return _config_from_mapping(d), args.verbose


def main(argv=None) -> int:
    try:
        config, verbose = config_from_args(argv)
    except ConfigError as exc:
        print(f"wggpe: configuration error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    report = run_experiment(config)
    for fmt in config.formats:
        result = emit_report(report, fmt, config.out)
        if config.out is None:
            sys.stdout.write(result)
    for r in report.failures:
        print(f"wggpe: {r.example} {r.method} N={r.N} failed: {r.error}", file=sys.stderr)
    return 2 if report.failures else 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
