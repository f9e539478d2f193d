"""``aquatwin`` command line: data generation, screening, forecasting, evaluation, scheduling.

Exit codes: 0 success, 2 infeasible schedule, 3 input or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from . import evaluation, forecasting, lstm
from .config import ConfigError, ToolConfig, load_config
from .data import CONSUMPTION, IngestError, TimeSeriesFrame, correlation_matrix, join, parse_consumption_csv, \
    parse_meteo_csv
from .scheduling import (Infeasible, InstanceError, compare_runs, format_table, gantt_csv, load_instance,
                         random_instance, solution_json, solve_baseline, solve_exact, validate)
from .scheduling.experiments import ComparisonResult, single_comparison, table_csv
from .scheduling.model import instance_from_dict, instance_to_dict
from .synthetic import write_csvs

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT = 0, 2, 3


class InputError(Exception):
    pass


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _say(msg: str) -> None:
    print(msg, flush=True)


def _load_joined(cfg: ToolConfig) -> TimeSeriesFrame:
    return join(parse_consumption_csv(cfg.consumption), parse_meteo_csv(cfg.meteo))


def cmd_gen_data(cfg: ToolConfig, args) -> int:
    spec = cfg.synthetic
    if args.days is not None:
        spec = replace(spec, n_days=args.days)
    cfg.consumption.parent.mkdir(parents=True, exist_ok=True)
    cfg.meteo.parent.mkdir(parents=True, exist_ok=True)
    write_csvs(spec, cfg.consumption, cfg.meteo, meteo_lead_days=args.meteo_lead_days)
    _say(f"wrote {cfg.consumption} ({spec.n_days} days) and {cfg.meteo}")
    return EXIT_OK


def cmd_correlate(cfg: ToolConfig, args) -> int:
    frame = _load_joined(cfg)
    cols = [c for c in frame.columns if frame.data[c].notna().sum() >= 2]
    cm = correlation_matrix(frame, cols)
    out = cfg.out_dir
    _write(out / "correlation.csv", cm.to_frame().to_csv(float_format="%.6f", index_label="column"))
    flagged = cm.significant(CONSUMPTION, args.threshold)
    lines = [f"Pearson correlation against {CONSUMPTION} ({len(frame)} days)",
             f"significance threshold |R| > {args.threshold}", ""]
    for c in cols:
        if c == CONSUMPTION:
            continue
        r = cm.get(CONSUMPTION, c)
        mark = "significant" if c in flagged else "not significant"
        lines.append(f"{c:12s} R = {r:+.4f}  {mark}")
    for pair, why in sorted(cm.failures.items()):
        lines.append(f"{pair[0]} / {pair[1]}: {why}")
    lines += ["", "significant: " + (", ".join(flagged) if flagged else "none")]
    _write(out / "correlation_report.txt", "\n".join(lines) + "\n")
    _say("\n".join(lines))
    return EXIT_OK


def _forecast_frame(cfg: ToolConfig) -> TimeSeriesFrame:
    """Consumption on every meteo day, missing where not yet observed."""
    cons = parse_consumption_csv(cfg.consumption)
    met = parse_meteo_csv(cfg.meteo)
    data = cons.data.join(met.data, how="outer")
    for col in met.columns:
        data[col] = data[col].ffill(limit_area="inside")
    return TimeSeriesFrame(data)


def _persist_model(model, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(model, forecasting.LstmForecaster):
        lstm.save_checkpoint(model.model, path.with_suffix(".json"))
        return path.with_suffix(".json")
    if isinstance(model, forecasting.AdditiveForecaster):
        model.model.export_csv(path.with_suffix(".csv"))
        return path.with_suffix(".csv")
    if isinstance(model, forecasting.GbtForecaster):
        return _write(path.with_suffix(".txt"), model.model.dump())
    if isinstance(model, forecasting.StackingForecaster):
        parts = [f"weights {' '.join(f'{w:.12g}' for w in model.weights)}"]
        parts += [f"member {m.name}\n{m.model.dump()}" for m in model.members]
        return _write(path.with_suffix(".txt"), "\n".join(parts))
    return _write(path.with_suffix(".txt"), f"{model.name}: no trainable parameters\n")


def cmd_forecast(cfg: ToolConfig, args) -> int:
    frame = _forecast_frame(cfg)
    observed = frame.column(CONSUMPTION).dropna()
    start = pd.Timestamp(args.start) if args.start else observed.index[-1] + pd.Timedelta(days=1)
    dates = pd.date_range(start, periods=args.horizon, freq="D")
    model = forecasting.build(args.model, cfg.options())
    train = TimeSeriesFrame(frame.data[(frame.index < start) & frame.column(CONSUMPTION).notna()])
    if len(dates):
        if dates[-1] > frame.index[-1] or frame.column("tmax").reindex(dates).isna().any():
            raise InputError(f"tmax is not available for every day up to {dates[-1].date()}; "
                             "forecasts need future regressor values")
        history = TimeSeriesFrame(frame.data.copy())
        history.data.loc[history.index >= start, CONSUMPTION] = np.nan
        model.fit(train)
        predicted = np.empty(len(dates))
        for k, d in enumerate(dates):  # recursive: each forecast becomes history for the next day
            predicted[k] = float(np.asarray(model.predict(history, [d]), dtype=float)[0])
            history.data.loc[d, CONSUMPTION] = predicted[k]
        _persist_model(model, cfg.out_dir / "models" / args.model)
    else:
        predicted = np.array([])
    actual = frame.column(CONSUMPTION).reindex(dates).to_numpy(dtype=float)
    lines = ["date,actual,predicted"]
    for d, a, p in zip(dates.strftime("%Y-%m-%d"), actual, predicted):
        lines.append(f"{d},{'' if np.isnan(a) else f'{a:.6f}'},{p:.6f}")
    path = _write(cfg.out_dir / f"forecast_{args.model}.csv", "\n".join(lines) + "\n")
    _say(f"wrote {len(dates)} forecast rows to {path}")
    return EXIT_OK


def cmd_evaluate(cfg: ToolConfig, args) -> int:
    frame = _load_joined(cfg)
    models = args.models.split(",") if args.models else cfg.models
    opts = cfg.options()
    factories = {m: (lambda m=m: forecasting.build(m, opts)) for m in models}
    for m in models:
        if m not in forecasting.MODEL_NAMES:
            raise InputError(f"unknown model {m!r}")
    comp = evaluation.compare(factories, frame, cfg.horizons)
    out = cfg.out_dir
    _write(out / "evaluation.csv", evaluation.report_csv(comp.reports))
    text = evaluation.report_text(comp.reports, forecasting.DISPLAY_NAMES)
    _write(out / "evaluation.txt", text)
    for (model, horizon), pred in comp.predictions.items():
        slug = horizon.lower().replace(" ", "_")
        _write(out / "plots" / f"{model}_{slug}.csv", evaluation.plot_csv(pred))
    _say(text)
    return EXIT_OK


def _resolve_instance(cfg: ToolConfig, path: str | None):
    if path:
        inst = load_instance(path)
    elif cfg.instance:
        inst = load_instance(cfg.instance)
    else:
        ref = resources.files("aquatwin.scheduling") / "paper_instance.json"
        with resources.as_file(ref) as p:
            inst = load_instance(p)
    sched = cfg.scheduler
    if sched.get("weights") or sched.get("work_day"):
        doc = instance_to_dict(inst)
        if sched.get("weights"):
            doc["weights"].update(sched["weights"])
        if sched.get("work_day"):
            doc["work_day"].update(sched["work_day"])
        inst = instance_from_dict(doc, inst.name)
    return inst


def _emit_solution(out: Path, inst, sol) -> None:
    problems = validate(inst, sol)
    if problems:
        raise AssertionError("; ".join(map(str, problems)))
    _write(out / f"solution_{sol.solver}.json", solution_json(inst, sol))
    _write(out / f"gantt_{sol.solver}.csv", gantt_csv(sol))


def _describe(inst, sol) -> str:
    doc = json.loads(solution_json(inst, sol))
    o = doc["objective"]
    flag = "" if sol.solver != "exact" else (" (optimal)" if sol.optimal else " (budget exhausted, optimal=false)")
    return (f"{sol.solver}{flag}: visits {list(sol.visits)}  Z={o['z']:.4f}  C_max={o['c_max']:.2f} h  "
            f"fuel={o['f_total']:.3f} L  CO2={o['c_total']:.3f} kg  D={o['d_total']:.2f} h  "
            f"E_eff={doc['metrics']['e_eff_pct']:.2f}%")


def cmd_schedule(cfg: ToolConfig, args) -> int:
    inst = _resolve_instance(cfg, args.instance)
    out = cfg.out_dir / "schedule"
    budget = args.budget if args.budget is not None else float(cfg.scheduler["budget"])
    mode = "compare" if args.compare else "baseline" if args.baseline else "exact"
    sols = []
    if mode in ("baseline", "compare"):
        sols.append(solve_baseline(inst))
    if mode in ("exact", "compare"):
        sols.append(solve_exact(inst, time_budget=budget))
    for sol in sols:
        _emit_solution(out, inst, sol)
        _say(_describe(inst, sol))
    if mode == "compare":
        table = single_comparison(inst, *sols)
        _write(out / "comparison.csv", table_csv(table))
        _write(out / "comparison.txt", format_table(table))
        _say(format_table(table))
    return EXIT_OK


def cmd_compare(cfg: ToolConfig, args) -> int:
    sched = cfg.scheduler
    n_lo, n_hi = sched.get("n_tasks", [4, 6])
    runs = args.runs if args.runs is not None else int(sched.get("compare_runs", 20))
    budget = args.budget if args.budget is not None else float(sched["budget"])
    res: ComparisonResult = compare_runs(lambda rng: random_instance(rng, (n_lo, n_hi)), runs, seed=cfg.seed,
                                         time_budget=budget)
    out = cfg.out_dir / "schedule"
    _write(out / "runs.csv", res.runs.to_csv(index=False, float_format="%.6f"))
    _write(out / "compare_runs.csv", table_csv(res.table))
    text = format_table(res.table) + (f"\nmean Z improvement {res.mean_z_improvement:.2f}% over {runs} runs; "
                                      f"{res.regenerated} infeasible instance(s) regenerated\n")
    _write(out / "compare_runs.txt", text)
    _say(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aquatwin", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--out-dir", help="output directory (overrides config and AQUATWIN_OUT_DIR)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write synthetic consumption and temperature CSVs")
    g.add_argument("--days", type=int)
    g.add_argument("--meteo-lead-days", type=int, default=14)
    g.set_defaults(func=cmd_gen_data)

    c = sub.add_parser("correlate", help="Pearson matrix and significance screening")
    c.add_argument("--threshold", type=float, default=0.4)
    c.set_defaults(func=cmd_correlate)

    f = sub.add_parser("forecast", help="train one model and forecast the following days")
    f.add_argument("--model", required=True)
    f.add_argument("--horizon", type=int, default=7)
    f.add_argument("--start", help="first forecast date (default: day after the last observation)")
    f.set_defaults(func=cmd_forecast)

    e = sub.add_parser("evaluate", help="compare models over the configured hold-out horizons")
    e.add_argument("--models", help="comma-separated subset of models")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("schedule", help="solve a maintenance-scheduling instance")
    s.add_argument("instance", nargs="?", help="instance JSON (default: the bundled five-task example)")
    mode = s.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true")
    mode.add_argument("--baseline", action="store_true")
    mode.add_argument("--compare", action="store_true")
    s.add_argument("--budget", type=float, help="exact solver time budget in seconds")
    s.set_defaults(func=cmd_schedule)

    r = sub.add_parser("compare", help="baseline vs exact over random instances")
    r.add_argument("--runs", type=int)
    r.add_argument("--budget", type=float)
    r.set_defaults(func=cmd_compare)

    def error(message):
        p.print_usage(sys.stderr)
        print(f"aquatwin: error: {message}", file=sys.stderr)
        sys.exit(EXIT_INPUT)

    p.error = error
    for sp in (g, c, f, e, s, r):
        sp.error = error
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, out_dir=args.out_dir)
        return args.func(cfg, args)
    except Infeasible as exc:
        print(f"infeasible: {exc.reason}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, IngestError, InstanceError, InputError, KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
