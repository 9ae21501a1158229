"""Command-line interface: CSV in, fitted models and reports out.

Four subcommands: ``simulate`` writes a synthetic dataset, ``fit`` ingests
a CSV and fits the model with the chosen selection method, ``predict``
evaluates a stored fit on new rows, and ``bench`` runs the scenario
comparison harness.  Exit codes: 0 success, 2 input error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from .asp import AspConfig, SelectionResult, full_sample_basis
from .data import Dataset
from .kernels import PredictorDomain, build_model
from .simulate import SCENARIOS, SELECTORS, gen_data, run_benchmark
from .solver import BasisSelection, FitResult, SmoothingParams, assemble_blocks, fit_model, predict
from .util import InputError, NumericalError

DISCRETE_INFERENCE_MAX_LEVELS = 20


@dataclass(frozen=True)
class ColumnScaler:
    """Maps one raw CSV column onto the model scale and back."""

    name: str
    kind: str
    lo: float = 0.0
    hi: float = 1.0
    levels: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("continuous", "discrete"):
            raise InputError(f"unknown column kind {self.kind!r}")
        if self.kind == "continuous" and not self.hi > self.lo:
            raise InputError(f"column {self.name!r} is constant; cannot scale")
        if self.kind == "discrete" and len(self.levels) < 2:
            raise InputError(f"column {self.name!r} needs at least 2 levels")

    def domain(self) -> PredictorDomain:
        if self.kind == "continuous":
            return PredictorDomain.continuous(self.lo, self.hi)
        return PredictorDomain.discrete(len(self.levels))

    def apply(self, values: np.ndarray) -> np.ndarray:
        """To domain scale: raw units for continuous, 1..K for discrete."""
        if self.kind == "continuous":
            return values.astype(float)
        level_of = {v: i + 1 for i, v in enumerate(self.levels)}
        out = np.empty(len(values))
        for i, v in enumerate(values):
            if v not in level_of:
                raise InputError(
                    f"column {self.name!r}: value {v!r} is not a training level")
            out[i] = level_of[v]
        return out

    def to_json(self) -> dict:
        doc = {"name": self.name, "kind": self.kind}
        if self.kind == "continuous":
            doc["lo"], doc["hi"] = self.lo, self.hi
        else:
            doc["levels"] = list(self.levels)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ColumnScaler":
        if doc["kind"] == "continuous":
            return cls(name=doc["name"], kind="continuous",
                       lo=float(doc["lo"]), hi=float(doc["hi"]))
        return cls(name=doc["name"], kind="discrete",
                   levels=tuple(float(v) for v in doc["levels"]))


@dataclass(frozen=True)
class IngestedTable:
    """A parsed CSV: model-ready dataset plus the per-column scalers."""

    dataset: Dataset
    response: str
    scalers: tuple[ColumnScaler, ...]

    @property
    def predictor_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.scalers)


def _read_csv_table(path: str) -> tuple[list[str], list[list[str]]]:
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from None
    with handle:
        reader = csv.reader(handle)
        rows = [row for row in reader if row]
    if not rows:
        raise InputError(f"{path} is empty")
    return rows[0], rows[1:]


def _parse_numeric_table(header, raw_rows):
    """All cells to float; missing and non-numeric cells reported by position."""
    missing, bad = [], []
    table = np.empty((len(raw_rows), len(header)))
    for i, row in enumerate(raw_rows):
        if len(row) != len(header) or any(cell.strip() == "" for cell in row):
            missing.append(i + 1)
            continue
        for j, cell in enumerate(row):
            try:
                table[i, j] = float(cell)
            except ValueError:
                bad.append((i + 1, header[j]))
    if missing:
        shown = ", ".join(str(r) for r in missing[:10])
        raise InputError(f"rows with missing cells: {shown}"
                         + (" ..." if len(missing) > 10 else ""))
    if bad:
        row, col = bad[0]
        raise InputError(f"non-numeric cell at row {row}, column {col!r}")
    return table


def _infer_scaler(name: str, values: np.ndarray, override: str | None) -> ColumnScaler:
    distinct = np.unique(values)
    if override == "discrete" or (
            override is None
            and distinct.size <= DISCRETE_INFERENCE_MAX_LEVELS
            and np.all(values == np.round(values))):
        if distinct.size < 2:
            raise InputError(f"column {name!r} is constant; cannot scale")
        return ColumnScaler(name=name, kind="discrete", levels=tuple(distinct))
    return ColumnScaler(name=name, kind="continuous",
                        lo=float(values.min()), hi=float(values.max()))


def ingest(csv_path: str, response_column: str,
           continuous_overrides=(), discrete_overrides=()) -> IngestedTable:
    """Parse a CSV into a model-ready dataset with stored column scalers.

    Continuous columns are min-max scaled to [0, 1]; integer-valued columns
    with at most 20 distinct values are treated as discrete factors unless
    overridden.  Rows with missing cells are rejected by row number.
    """
    header, raw_rows = _read_csv_table(csv_path)
    if response_column not in header:
        raise InputError(f"response column {response_column!r} not in header {header}")
    if not raw_rows:
        raise InputError(f"{csv_path} has a header but no data rows")
    overrides = {}
    for name in continuous_overrides:
        overrides[name] = "continuous"
    for name in discrete_overrides:
        if overrides.get(name) == "continuous":
            raise InputError(f"column {name!r} marked both continuous and discrete")
        overrides[name] = "discrete"
    unknown = set(overrides) - set(header)
    if unknown:
        raise InputError(f"override columns not in header: {sorted(unknown)}")
    table = _parse_numeric_table(header, raw_rows)
    resp_idx = header.index(response_column)
    y = table[:, resp_idx]
    scalers = []
    columns = []
    for j, name in enumerate(header):
        if j == resp_idx:
            continue
        scaler = _infer_scaler(name, table[:, j], overrides.get(name))
        scalers.append(scaler)
        columns.append(scaler.apply(table[:, j]))
    if not scalers:
        raise InputError("no predictor columns besides the response")
    x = np.column_stack(columns)
    domains = tuple(s.domain() for s in scalers)
    dataset = Dataset.from_raw(x, y, domains)
    return IngestedTable(dataset=dataset, response=response_column,
                         scalers=tuple(scalers))


def parse_model(text: str, n_predictors: int):
    """Model grammar: comma-separated terms, colon-joined interactions.

    Predictors are 1-based column positions, e.g. "1,2,1:2" is two mains
    plus their interaction.
    """
    effects = []
    for term in text.split(","):
        term = term.strip()
        if not term:
            raise InputError("empty term in model specification")
        try:
            idx = tuple(int(p) - 1 for p in term.split(":"))
        except ValueError:
            raise InputError(f"cannot parse model term {term!r}") from None
        if any(i < 0 or i >= n_predictors for i in idx):
            raise InputError(
                f"model term {term!r} references a predictor outside 1..{n_predictors}")
        effects.append(idx)
    return effects


METHODS = ("gcv", "skip", "asp-u", "asp-a", "order")


def _config_from_args(args) -> AspConfig:
    jobs = getattr(args, "jobs", None)
    if jobs is None:
        env = os.environ.get("SPANOVA_JOBS")
        jobs = int(env) if env else None
    p_text = getattr(args, "p", "auto")
    estimate = p_text == "auto"
    if estimate:
        p_default = 1.0
    else:
        try:
            p_default = float(p_text)
        except ValueError:
            raise InputError(f"--p must be a number or 'auto', got {p_text!r}") from None
    return AspConfig(
        b_coef=args.b_coef,
        n_subsamples=args.subsamples,
        r_default=args.r,
        p_default=p_default,
        order_c=args.order_c,
        estimate_smoothness=estimate,
        basis_coef=args.basis_coef,
        basis_exp=args.basis_exp,
        gcv_max_iter=args.gcv_max_iter,
        seed=args.seed,
        jobs=jobs,
    )


def _selection_to_json(sel: SelectionResult) -> dict:
    doc = {
        "method": sel.method,
        "lambda": sel.lambda_full,
        "theta": list(sel.theta),
        "flags": list(sel.flags),
    }
    for field in ("subsample_size", "lambda_sub", "p", "r"):
        value = getattr(sel, field)
        if value is not None:
            doc[field] = value
    if sel.rate is not None:
        doc["rate"] = {"c": sel.rate.c, "gamma": sel.rate.gamma,
                       "rss": sel.rate.rss, "clamped": sel.rate.clamped}
    return doc


def run_fit(args) -> int:
    t_start = time.perf_counter()
    table = ingest(args.data, args.response,
                   args.continuous or (), args.discrete or ())
    effects = parse_model(args.model, len(table.scalers))
    spec = build_model([s.domain() for s in table.scalers], effects)
    config = _config_from_args(args)
    sel = SELECTORS[args.method](table.dataset, spec, config)
    t_fit = time.perf_counter()
    basis = full_sample_basis(table.dataset.n, spec.null_dim, config)
    blocks = assemble_blocks(table.dataset, spec, basis)
    fit = fit_model(table.dataset, spec, sel.params, blocks=blocks)
    fit_seconds = time.perf_counter() - t_fit
    doc = {
        "response": table.response,
        "columns": [s.to_json() for s in table.scalers],
        "model": args.model,
        "n": table.dataset.n,
        "selection": _selection_to_json(sel),
        "fit": {
            "q": int(fit.basis.q),
            "basis_rows": fit.basis_rows.tolist(),
            "d": fit.d.tolist(),
            "c": fit.c.tolist(),
            "log10_nlam": fit.params.log10_nlam,
            "theta": list(fit.params.theta),
            "trace_a": fit.trace_a,
            "gcv": fit.gcv,
        },
        "config": {
            "seed": config.seed, "basis_coef": config.basis_coef,
            "basis_exp": config.basis_exp, "b_coef": config.b_coef,
            "n_subsamples": config.n_subsamples, "r": config.r_default,
            "p": "auto" if config.estimate_smoothness else config.p_default,
            "order_c": config.order_c, "gcv_max_iter": config.gcv_max_iter,
        },
        "timing": {
            "selection_seconds": sel.seconds,
            "fit_seconds": fit_seconds,
            "total_seconds": time.perf_counter() - t_start,
        },
    }
    with open(args.out, "w") as handle:
        json.dump(doc, handle, indent=2, sort_keys=True)
        handle.write("\n")
    if args.fitted_out:
        with open(args.fitted_out, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["fitted"])
            for value in fit.fitted:
                writer.writerow([repr(float(value))])
    print(f"fit written to {args.out}"
          f" (method={sel.method}, lambda={sel.lambda_full:.6g},"
          f" edf={fit.trace_a:.2f})")
    return 0


def _load_fit_document(path: str):
    try:
        with open(path) as handle:
            doc = json.load(handle)
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from None
    scalers = tuple(ColumnScaler.from_json(c) for c in doc["columns"])
    effects = parse_model(doc["model"], len(scalers))
    spec = build_model([s.domain() for s in scalers], effects)
    fit_doc = doc["fit"]
    params = SmoothingParams(log10_nlam=float(fit_doc["log10_nlam"]),
                             log10_theta=tuple(
                                 float(np.log10(v)) for v in fit_doc["theta"]))
    basis_rows = np.asarray(fit_doc["basis_rows"], dtype=float)
    fit = FitResult(
        d=np.asarray(fit_doc["d"], dtype=float),
        c=np.asarray(fit_doc["c"], dtype=float),
        fitted=np.empty(0),
        trace_a=float(fit_doc["trace_a"]),
        gcv=float(fit_doc["gcv"]),
        params=params,
        basis=BasisSelection(indices=np.arange(basis_rows.shape[0])),
        basis_rows=basis_rows,
    )
    return doc, scalers, spec, fit


def run_predict(args) -> int:
    doc, scalers, spec, fit = _load_fit_document(args.fit)
    header, raw_rows = _read_csv_table(args.data)
    missing = [s.name for s in scalers if s.name not in header]
    if missing:
        raise InputError(f"input is missing predictor columns: {missing}")
    with open(args.out, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["prediction", "out_of_range"])
        if raw_rows:
            table = _parse_numeric_table(header, raw_rows)
            cols = []
            for s in scalers:
                cols.append(s.apply(table[:, header.index(s.name)]))
            x = np.column_stack(cols)
            import warnings
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                eta, flags = predict(fit, spec, x)
            for value, flag in zip(eta, flags):
                writer.writerow([repr(float(value)), str(bool(flag)).lower()])
    n_rows = len(raw_rows)
    print(f"{n_rows} prediction{'s' if n_rows != 1 else ''} written to {args.out}")
    return 0


def run_simulate(args) -> int:
    if args.scenario not in SCENARIOS:
        raise InputError(f"unknown scenario {args.scenario!r};"
                         f" choose from {sorted(SCENARIOS)}")
    sim = gen_data(args.scenario, args.n, args.snr, seed=args.seed)
    d = sim.dataset.d
    with open(args.out, "w", newline="") as handle:
        writer = csv.writer(handle)
        header = [f"x{j + 1}" for j in range(d)] + ["y"]
        if args.with_truth:
            header.append("eta")
        writer.writerow(header)
        for i in range(sim.n):
            row = [repr(float(v)) for v in sim.dataset.x[i]]
            row.append(repr(float(sim.dataset.y[i])))
            if args.with_truth:
                row.append(repr(float(sim.eta[i])))
            writer.writerow(row)
    print(f"{sim.n} rows written to {args.out} (sigma={sim.sigma:.6g})")
    return 0


def _summary_path(out_path: str) -> str:
    root, ext = os.path.splitext(out_path)
    return f"{root}_summary{ext or '.csv'}"


def run_bench(args) -> int:
    scenarios = [s.strip() for s in args.scenario.split(",")]
    ns = [int(v) for v in args.n.split(",")]
    snrs = [float(v) for v in args.snr.split(",")]
    methods = [m.strip() for m in args.methods.split(",")]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise InputError(f"unknown methods {bad}; choose from {METHODS}")
    config = _config_from_args(args)
    records = []
    for scenario in scenarios:
        for n in ns:
            for snr in snrs:
                records.extend(run_benchmark(
                    scenario, n, snr, methods, args.replicates, seed=args.seed,
                    config=config, benchmark_max_iter=args.benchmark_max_iter))
    with open(args.out, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["scenario", "n", "snr", "method", "replicate",
                         "loss", "log_re", "wall_time_seconds"])
        for r in records:
            writer.writerow([r.scenario, r.n, repr(r.snr), r.method, r.replicate,
                             repr(r.loss), repr(r.log_re),
                             repr(r.wall_time_seconds)])
    cells: dict[tuple, list] = {}
    for r in records:
        cells.setdefault((r.scenario, r.n, r.snr, r.method), []).append(r)
    summary = _summary_path(args.out)
    with open(summary, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["scenario", "n", "snr", "method", "replicates",
                         "median_log_re", "median_wall_time_seconds"])
        for key in sorted(cells, key=lambda k: (k[0], k[1], k[2], k[3])):
            group = cells[key]
            writer.writerow([
                key[0], key[1], repr(key[2]), key[3], len(group),
                repr(float(np.median([r.log_re for r in group]))),
                repr(float(np.median([r.wall_time_seconds for r in group]))),
            ])
    print(f"{len(records)} rows written to {args.out}; summary in {summary}")
    return 0


def _add_config_arguments(parser):
    parser.add_argument("--method", choices=METHODS, default="asp-u")
    parser.add_argument("--b-coef", type=float, default=50.0,
                        help="subsample size coefficient b = round(coef * n^{1/4})")
    parser.add_argument("--subsamples", type=int, default=5)
    parser.add_argument("--r", type=float, default=3.0, help="rate order")
    parser.add_argument("--p", default="auto",
                        help="smoothness index in [1,2], or 'auto' to estimate")
    parser.add_argument("--order-c", type=float, default=1.0,
                        help="constant for the order-based method")
    parser.add_argument("--basis-coef", type=float, default=10.0,
                        help="basis count rule q = round(coef * n^exp)")
    parser.add_argument("--basis-exp", type=float, default=2.0 / 9.0)
    parser.add_argument("--gcv-max-iter", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=None,
                        help="worker processes for subsample fits"
                             " (default: SPANOVA_JOBS or all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spanova",
        description="Tensor-product smoothing spline regression for large samples")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="write a synthetic benchmark dataset")
    p_sim.add_argument("--scenario", required=True)
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--snr", type=float, required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--with-truth", action="store_true",
                       help="include the noiseless eta column")
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(run=run_simulate)

    p_fit = sub.add_parser("fit", help="fit a model to a CSV file")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--response", required=True)
    p_fit.add_argument("--model", required=True,
                       help="comma-separated terms, e.g. '1,2,1:2'")
    p_fit.add_argument("--continuous", action="append", default=None,
                       metavar="COLUMN", help="force a column continuous")
    p_fit.add_argument("--discrete", action="append", default=None,
                       metavar="COLUMN", help="force a column discrete")
    _add_config_arguments(p_fit)
    p_fit.add_argument("--out", required=True, help="fit document (JSON)")
    p_fit.add_argument("--fitted-out", default=None,
                       help="optional CSV of fitted values")
    p_fit.set_defaults(run=run_fit)

    p_pred = sub.add_parser("predict", help="evaluate a stored fit on new rows")
    p_pred.add_argument("--fit", required=True)
    p_pred.add_argument("--data", required=True)
    p_pred.add_argument("--out", required=True)
    p_pred.set_defaults(run=run_predict)

    p_bench = sub.add_parser("bench", help="run the scenario comparison harness")
    p_bench.add_argument("--scenario", required=True,
                         help="comma-separated scenario ids")
    p_bench.add_argument("--n", required=True, help="comma-separated sizes")
    p_bench.add_argument("--snr", required=True, help="comma-separated ratios")
    p_bench.add_argument("--methods", required=True,
                         help=f"comma-separated from {METHODS}")
    p_bench.add_argument("--replicates", type=int, default=10)
    p_bench.add_argument("--benchmark-max-iter", type=int, default=None,
                         help="cap the benchmark's iterations (high-dim runs use 1)")
    _add_config_arguments(p_bench)
    p_bench.add_argument("--out", required=True)
    p_bench.set_defaults(run=run_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.run(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
