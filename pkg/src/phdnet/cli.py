"""Command-line entry point: ``phdnet {ingest,analyze,regress,validate,synth,export}``.

Exit codes: 0 success, 1 usage/configuration, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from phdnet import __version__
from phdnet.centrality import CentralityOptions, centrality_series, eigenvector_centrality
from phdnet.errors import ArtifactError, ConfigurationError, DataError, UnknownGradeError
from phdnet.graph import (
    FORMATS,
    MarketSpec,
    Window,
    build_network,
    export,
    network_stats,
    slice_network,
    synthesize_market,
)
from phdnet.ingest import (
    OVERSEAS,
    InstitutionEntry,
    InstitutionRegistry,
    load_records,
    parse_records,
    clean_records,
    write_records,
)
from phdnet.stats import (
    PREDICTORS,
    RegressionReport,
    compute_predictors,
    grade_to_rank,
    ols_fit,
    pearson,
    trend_statistic,
)

log = logging.getLogger("phdnet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
EXTENSIONS = {"csv": "csv", "dot": "dot", "graphml": "graphml"}
DEFAULT_PAIRS = "ec_2014:grade_round3,ec_2021:grade_round4,ec_2021:gras_score"
# config echo leaves out where outputs go, so reruns into another directory match
_NOT_ECHOED = {"out", "config", "func", "command", "verbose"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# small helpers


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _formats(text: str) -> list[str]:
    out = [f.strip() for f in str(text).split(",") if f.strip()]
    bad = [f for f in out if f not in ("csv", "json", "dot", "graphml")]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown format(s): {', '.join(bad)}")
    return out


def _digest(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _clean_json(value):
    if isinstance(value, float) or isinstance(value, np.floating):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, dict):
        return {str(k): _clean_json(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean_json(v) for v in value]
    return value


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_text(payload) -> str:
    return json.dumps(_clean_json(payload), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _provenance(args, inputs: dict[str, str | None]) -> dict:
    config = {
        k: v for k, v in sorted(vars(args).items())
        if k not in _NOT_ECHOED and k not in inputs and not callable(v)
    }
    files = {}
    for label, path in sorted(inputs.items()):
        if path:
            files[label] = {"file": os.path.basename(path), "sha256": _digest(path)}
    return {"tool": f"phdnet {__version__}", "command": args.command, "inputs": files, "config": config}


def _fmt(value, digits: int) -> str:
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.{digits}f}"


def _load_registry(args) -> InstitutionRegistry | None:
    if not args.registry:
        return None
    return InstitutionRegistry.from_csv(args.registry)


def _records(args, registry):
    if not args.records:
        raise ConfigurationError("--records is required")
    return load_records(args.records, registry=registry, rule=args.year_rule,
                        delimiter=args.delimiter)


def _options(args) -> CentralityOptions:
    return CentralityOptions(tolerance=args.tol, max_iterations=args.max_iter, damping=args.damping)


# --------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> int:
    registry = _load_registry(args)
    if not args.records:
        raise ConfigurationError("--records is required")
    raw, diag = parse_records(args.records, delimiter=args.delimiter)
    records, diag = clean_records(raw, diag, registry=registry, rule=args.year_rule)
    out = Path(args.out)
    buf = io.StringIO()
    write_records(records, buf)
    report = {
        "provenance": _provenance(args, {"records": args.records, "registry": args.registry}),
        "diagnostics": diag.to_dict(),
    }
    _write_atomic(out / "records_clean.csv", buf.getvalue())
    _write_atomic(out / "diagnostics.json", _json_text(report))
    log.info("admitted %d of %d rows (%d rejected, %d duplicates)",
             diag.admitted, diag.total_rows, len(diag.rejected), diag.deduplicated)
    return EXIT_OK


def _default_start(records, boundaries):
    if not records:
        return None
    lo = min(r.employment_year for r in records)
    return lo if lo <= boundaries[0] else None


def cmd_analyze(args) -> int:
    registry = _load_registry(args)
    records, diag = _records(args, registry)
    boundaries = args.boundaries
    start = args.start_year if args.start_year is not None else _default_start(records, boundaries)
    slices = slice_network(records, boundaries, "windowed", registry, start_year=start,
                           keep_inactive=args.keep_inactive)
    full = build_network(records, registry, Window())
    options = _options(args)
    table = centrality_series(records, registry, boundaries, options, mode=args.mode,
                              start_year=start)
    full_ec = eigenvector_centrality(full, options)

    warnings = [
        f"centrality at cut-point {y} did not converge"
        for y, ok in zip(table.cut_points, table.converged) if not ok
    ]
    if not full_ec.converged:
        warnings.append("full-range centrality did not converge")
    for w in warnings:
        log.warning(w)

    prov = _provenance(args, {"records": args.records, "registry": args.registry})
    stats = {
        "provenance": prov,
        "admitted_records": diag.admitted,
        "slices": [
            {"window": net.window.label, "start_year": net.window.start_year,
             "end_year": net.window.end_year, **network_stats(net).to_dict()}
            for net in slices
        ],
        "full": {"window": "all", **network_stats(full).to_dict()},
    }
    cent = {
        "provenance": prov,
        "mode": args.mode,
        "warnings": warnings,
        "columns": [
            {"cut_point": y, "converged": r.converged, "iterations": r.iterations_used,
             "dominant_value": r.dominant_value, "scores": r.scores}
            for y, r in zip(table.cut_points, table.results)
        ],
        "full": {"converged": full_ec.converged, "iterations": full_ec.iterations_used,
                 "dominant_value": full_ec.dominant_value, "scores": full_ec.scores},
    }
    out = Path(args.out)
    files = {
        "network_stats.json": _json_text(stats),
        "centrality.csv": table.to_csv(),
        "centrality.json": _json_text(cent),
    }
    for fmt in args.format:
        if fmt == "json":
            continue  # reports are always written as JSON
        ext = EXTENSIONS[fmt]
        files[f"network_full.{ext}"] = export(full, fmt)
        for net in slices:
            files[f"network_{net.window.start_year or 'start'}_{net.window.end_year}.{ext}"] = export(net, fmt)
    for name, text in files.items():
        _write_atomic(out / name, text)
    return EXIT_OK


def _read_subset(path, registry) -> list[str]:
    if not path:
        raise ConfigurationError("--subset is required")
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln.split(",")[0].strip() for ln in fh]
    except OSError as exc:
        raise DataError(f"cannot read subset file: {exc}") from exc
    nodes = [ln for ln in lines if ln and not ln.startswith("#")]
    if nodes and nodes[0] == "node":
        nodes = nodes[1:]
    if registry is not None:
        nodes = [registry.resolve(n)[0] for n in nodes]
    seen, out = set(), []
    for n in nodes:
        if n not in seen:
            seen.add(n)
            out.append(n)
    return out


def _report_csv(report: RegressionReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["term", "B", "SE", "Beta", "t", "p", "VIF"])
    for c in (report.intercept, *report.coefficients):
        writer.writerow([c.label, _fmt(c.B, 3), _fmt(c.std_error, 3), _fmt(c.Beta, 3),
                         _fmt(c.t, 3), _fmt(c.p, 3), _fmt(c.VIF, 3)])
    writer.writerow([])
    writer.writerow(["R2", "adj_R2", "F", "df_model", "df_resid", "F_p", "DW", "n"])
    writer.writerow([_fmt(report.r_squared, 3), _fmt(report.adj_r_squared, 3),
                     _fmt(report.f_statistic, 3), report.df_model, report.df_resid,
                     _fmt(report.f_pvalue, 3), _fmt(report.durbin_watson, 3), report.n])
    return buf.getvalue()


def cmd_regress(args) -> int:
    registry = _load_registry(args)
    records, _ = _records(args, registry)
    subset = _read_subset(args.subset, registry)
    options = _options(args)
    full = build_network(records, registry, Window())
    panel = compute_predictors(records, full, subset, args.reference_year, registry)
    X = panel.matrix()

    level = eigenvector_centrality(full, options)
    scores = level.scores
    y_level = np.array([scores.get(u, 0.0) for u in subset])

    table = centrality_series(records, registry, args.boundaries, options, mode=args.mode,
                              start_year=args.start_year)
    rows = {n: table.scores[i] for i, n in enumerate(table.nodes)}
    zeros = np.zeros(len(table.cut_points))
    trend = trend_statistic({u: rows.get(u, zeros) for u in subset}, args.window)
    y_trend = np.array([trend[u] for u in subset])

    levels = ols_fit(X, y_level, PREDICTORS)
    trends = ols_fit(X, y_trend, PREDICTORS)

    warnings = []
    if not level.converged:
        warnings.append("full-range centrality did not converge")
    warnings += [f"centrality at cut-point {y} did not converge"
                 for y, ok in zip(table.cut_points, table.converged) if not ok]
    for w in warnings:
        log.warning(w)
    prov = _provenance(args, {"records": args.records, "registry": args.registry,
                              "subset": args.subset})
    out = Path(args.out)
    files = {
        "panel.csv": panel.to_csv(),
        "regression_levels.json": _json_text({"provenance": prov, "dependent": "ec_full",
                                              "warnings": warnings, **levels.to_dict()}),
        "regression_levels.csv": _report_csv(levels),
        "regression_trend.json": _json_text({"provenance": prov, "dependent": "ec_trend",
                                             "window": args.window, "warnings": warnings,
                                             **trends.to_dict()}),
        "regression_trend.csv": _report_csv(trends),
    }
    for name, text in files.items():
        _write_atomic(out / name, text)
    return EXIT_OK


def _parse_pairs(text: str) -> list[tuple[int, str]]:
    pairs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        left, sep, right = item.partition(":")
        if not sep or not left.startswith("ec_"):
            raise ConfigurationError(f"bad pairing {item!r}; expected ec_<year>:<column>")
        try:
            year = int(left[3:])
        except ValueError:
            raise ConfigurationError(f"bad pairing {item!r}; expected ec_<year>:<column>") from None
        pairs.append((year, right.strip()))
    if not pairs:
        raise ConfigurationError("no pairings given")
    return pairs


def cmd_validate(args) -> int:
    registry = _load_registry(args)
    records, _ = _records(args, registry)
    if not args.validation:
        raise ConfigurationError("--validation is required")
    pairs = _parse_pairs(args.pairs)
    years = sorted({y for y, _ in pairs})
    table = centrality_series(records, registry, years, _options(args), mode=args.mode,
                              start_year=args.start_year)
    known = set(table.nodes)
    node_row = {n: i for i, n in enumerate(table.nodes)}

    try:
        with open(args.validation, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read validation file: {exc}") from exc
    needed = {"node"} | {col for _, col in pairs}
    missing = needed - set(header)
    if missing:
        raise ConfigurationError(f"validation file lacks columns: {sorted(missing)}")
    targets = sorted({col for _, col in pairs})

    kept, dropped = [], []
    for line, row in enumerate(rows, start=2):
        node = (row.get("node") or "").strip()
        if registry is not None and node:
            node = registry.resolve(node)[0]
        values = {}
        incomplete = not node or node not in known
        for col in targets:
            cell = (row.get(col) or "").strip()
            if col.startswith("grade"):
                try:
                    values[col] = float(grade_to_rank(cell))
                except UnknownGradeError as exc:
                    raise UnknownGradeError(exc.token, row=line) from None
            elif not cell:
                incomplete = True
            else:
                try:
                    values[col] = float(cell)
                except ValueError:
                    raise DataError(f"row {line}: non-numeric {col} {cell!r}") from None
        if incomplete:
            dropped.append(node or f"<row {line}>")
        else:
            kept.append((node, values))

    results = []
    for year, col in pairs:
        k = table.cut_points.index(year)
        ec = [table.scores[node_row[n], k] for n, _ in kept]
        target = [v[col] for _, v in kept]
        rep = pearson(ec, target)
        results.append({"ec_column": f"ec_{year}", "target": col, **rep.to_dict()})

    prov = _provenance(args, {"records": args.records, "registry": args.registry,
                              "validation": args.validation})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["ec_column", "target", "r", "n", "t", "p"])
    for r in results:
        writer.writerow([r["ec_column"], r["target"], _fmt(r["r"], 4), r["n"],
                         _fmt(r["t"], 3), _fmt(r["p"], 3)])
    payload = {"provenance": prov, "n_rows": len(rows), "n_used": len(kept),
               "dropped": dropped, "correlations": results}
    out = Path(args.out)
    _write_atomic(out / "correlation.csv", buf.getvalue())
    _write_atomic(out / "correlation.json", _json_text(payload))
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = MarketSpec(
        tier_sizes=tuple(args.tiers),
        hire_rates=tuple(args.hire_rates) if args.hire_rates else None,
        downward_bias=args.bias,
        self_loop_prob=args.self_loop,
        overseas_prob=args.overseas,
        year_range=tuple(args.years),
        n_records=args.n_records,
        seed=args.seed,
        prestige_decay=args.decay,
    )
    if len(spec.year_range) != 2:
        raise ConfigurationError("--years takes two comma-separated years")
    records = synthesize_market(spec)
    tiers = spec.node_tiers()
    top = sorted(n for n, t in tiers.items() if t == 1)
    tags = {top[0]: {"tsinghua"}}
    tags.setdefault(top[1] if len(top) > 1 else top[0], set()).add("peking")
    registry = InstitutionRegistry(
        [InstitutionEntry(n, n, (), False, frozenset(tags.get(n, ()))) for n in sorted(tiers)]
        + [InstitutionEntry(OVERSEAS, "Overseas", (), True)]
    )
    out = Path(args.out)
    buf = io.StringIO()
    write_records(records, buf)
    reg = io.StringIO()
    registry.to_csv(reg)
    tier_buf = io.StringIO()
    w = csv.writer(tier_buf, lineterminator="\n")
    w.writerow(["node", "tier"])
    for n in sorted(tiers):
        w.writerow([n, tiers[n]])
    _write_atomic(out / "market_records.csv", buf.getvalue())
    _write_atomic(out / "market_registry.csv", reg.getvalue())
    _write_atomic(out / "market_tiers.csv", tier_buf.getvalue())
    return EXIT_OK


def cmd_export(args) -> int:
    registry = _load_registry(args)
    records, _ = _records(args, registry)
    if args.end_year is None and args.start_year is None:
        window = Window()
    else:
        window = Window(args.start_year, args.end_year, args.mode)
    net = build_network(records, registry, window, keep_inactive=args.keep_inactive)
    formats = [f for f in args.format if f != "json"]
    if not formats:
        raise ConfigurationError(f"export formats are {', '.join(FORMATS)}")
    out = Path(args.out)
    for fmt in formats:
        _write_atomic(out / f"network.{EXTENSIONS[fmt]}", export(net, fmt))
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _read_config(path: str) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_string("[run]\n" + fh.read())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigurationError(f"bad config file: {exc}") from exc
    return {k.replace("-", "_"): v for k, v in parser["run"].items()}


def build_parser() -> argparse.ArgumentParser:
    shared = _Parser(add_help=False)
    shared.add_argument("--config", help="key = value file; flags override it")
    shared.add_argument("--records", help="hire records CSV")
    shared.add_argument("--registry", help="institution registry CSV")
    shared.add_argument("--out", required=False, default=None, help="output directory")
    shared.add_argument("--boundaries", type=_int_list, default=[2000, 2007, 2014, 2021])
    shared.add_argument("--mode", choices=("windowed", "cumulative"), default="cumulative",
                        help="network mode for centrality series")
    shared.add_argument("--start-year", type=int, default=None)
    shared.add_argument("--end-year", type=int, default=None)
    shared.add_argument("--keep-inactive", action=argparse.BooleanOptionalAction, default=None,
                        help="keep nodes without hires in a window")
    shared.add_argument("--damping", type=float, default=0.0)
    shared.add_argument("--tol", type=float, default=1e-10)
    shared.add_argument("--max-iter", type=int, default=100_000)
    shared.add_argument("--year-rule", choices=("strict", "inclusive"), default="strict")
    shared.add_argument("--delimiter", default=",")
    shared.add_argument("--subset", help="file with one node id per line")
    shared.add_argument("--reference-year", type=int, default=2021)
    shared.add_argument("--window", type=int, default=2, help="moving-average window for trends")
    shared.add_argument("--seed", type=int, default=0)
    shared.add_argument("--format", type=_formats, default=["csv"],
                        help="comma-separated: csv,json,dot,graphml")
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="phdnet", description="PhD exchange network reputation analysis")
    parser.add_argument("--version", action="version", version=f"phdnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("ingest", parents=[shared], help="clean and canonicalize records"
                   ).set_defaults(func=cmd_ingest)
    sub.add_parser("analyze", parents=[shared], help="slice stats, centrality series, exports"
                   ).set_defaults(func=cmd_analyze)
    sub.add_parser("regress", parents=[shared], help="predictor regressions (levels and trend)"
                   ).set_defaults(func=cmd_regress)
    p = sub.add_parser("validate", parents=[shared], help="Pearson validation against grades")
    p.add_argument("--validation", help="CSV node,grade_round3,grade_round4,gras_score")
    p.add_argument("--pairs", default=DEFAULT_PAIRS, help="ec_<year>:<column>,...")
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("synth", parents=[shared], help="generate a synthetic market")
    p.add_argument("--tiers", type=_int_list, default=[5, 10, 20, 40])
    p.add_argument("--hire-rates", type=_float_list, default=None)
    p.add_argument("--n-records", type=int, default=2000)
    p.add_argument("--bias", type=float, default=0.9)
    p.add_argument("--self-loop", type=float, default=0.05)
    p.add_argument("--overseas", type=float, default=0.05)
    p.add_argument("--decay", type=float, default=0.75)
    p.add_argument("--years", type=_int_list, default=[1980, 2021])
    p.set_defaults(func=cmd_synth)
    sub.add_parser("export", parents=[shared], help="serialize a network"
                   ).set_defaults(func=cmd_export)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    values = _read_config(args.config)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in values.items():
        action = known.get(key)
        if action is None or key in ("config", "help"):
            raise ConfigurationError(f"unknown config key {key!r}")
        if action.type is not None:
            try:
                defaults[key] = action.type(raw)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise ConfigurationError(f"config key {key!r}: {exc}") from exc
        elif isinstance(action, argparse.BooleanOptionalAction):
            defaults[key] = raw.strip().lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = raw
        if action.choices is not None and defaults[key] not in action.choices:
            raise ConfigurationError(f"config key {key!r}: {raw!r} not in {list(action.choices)}")
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
    except ArtifactError as exc:
        print(f"phdnet: error: {exc}", file=sys.stderr)
        return exc.exit_code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if not args.out:
        print("phdnet: error: --out is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ArtifactError as exc:
        print(f"phdnet: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
