"""Command-line entry point (`plantd`).

Subcommands cover the full workflow: simulate a telemetry corpus, inject an
enrichment plan into a scenario, train and bundle the plant model graph,
run a one-shot optimization, serve the HTTP control service, and evaluate
savings against a baseline period.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import baselining, enrich, optimize, surrogate, telemetry
from .simplant import (
    MINUTES_PER_DAY,
    Scenario,
    fixed_regime_controller,
    load_scenario,
    save_scenario,
    simulate,
)


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    days = args.days if args.days is not None else scenario.days
    if days < 1:
        print("error: --days must be at least 1", file=sys.stderr)
        return 2
    duration = days * MINUTES_PER_DAY
    controller = fixed_regime_controller(scenario)
    if scenario.enrichment is not None:
        plan = enrich.EnrichmentPlan.from_dict(scenario.enrichment)
        plan.ranges.validate(scenario.plant)
        controller = enrich.enrichment_controller(plan, controller,
                                                  seed=args.seed)
    store = telemetry.RecordStore(args.telemetry)
    simulate(scenario, controller, duration, store=store)
    print(f"wrote {duration} records ({days} days) to {args.telemetry}")
    return 0


def _cmd_enrich(args) -> int:
    scenario = load_scenario(args.scenario)
    ranges = enrich.SpeedRanges.from_config(scenario.plant)
    plan = enrich.plan_for_days(
        scenario.days, args.windows_per_day, duration=args.duration,
        seed=args.seed, ranges=ranges,
    )
    scenario.enrichment = plan.to_dict()
    out = args.out or args.scenario
    save_scenario(scenario, out)
    n = len(plan.windows)
    print(f"injected {n} windows of {args.duration} min into {out}")
    return 0


def _print_report(report: surrogate.TrainReport) -> None:
    print(f"{'module':<10}" + "".join(f"{'fold ' + str(i + 1):>9}"
                                      for i in range(5)) + f"{'avg':>9}")
    for name, row in report.rows.items():
        folds = "".join(f"{m:9.3f}" for m in row["fold_mapes"])
        print(f"{name:<10}{folds}{row['mape']:9.3f}")


def _cmd_train(args) -> int:
    scenario = load_scenario(args.scenario)
    store = telemetry.RecordStore(args.telemetry)
    if len(store) == 0:
        print("error: telemetry corpus is empty", file=sys.stderr)
        return 2
    folds = telemetry.kfold_by_days(store, args.folds,
                                    len(store.days()) // args.folds)
    mask = None
    if scenario.enrichment is not None:
        plan = enrich.EnrichmentPlan.from_dict(scenario.enrichment)
        mask = enrich.window_mask(plan, scenario.duration)
    mlp_kwargs = {"epochs": args.epochs} if args.epochs else None
    graph, report = surrogate.train_graph(store, folds, seed=args.seed,
                                          enriched_mask=mask,
                                          mlp_kwargs=mlp_kwargs)
    surrogate.save_bundle(graph, args.bundle)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
            fh.write("\n")
    _print_report(report)
    print(f"bundle written to {args.bundle}")
    return 0


def _cmd_optimize(args) -> int:
    graph = surrogate.load_bundle(args.bundle)
    store = telemetry.RecordStore(args.telemetry)
    if len(store) == 0:
        print("error: telemetry corpus is empty", file=sys.stderr)
        return 2
    record = store[-1]
    try:
        problem = optimize.build_problem(graph, record)
        result = optimize.solve(problem)
    except optimize.NoFeasiblePoint as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({
        "ts": record.ts,
        "control": {"cwp_speed": result.control.cwp_speed,
                    "chwp_speed": result.control.chwp_speed,
                    "ct_speed": result.control.ct_speed},
        "predicted_kw": result.predicted_kw,
        "measured_kw": record.total_kw,
        "evaluations": result.evaluations,
    }, indent=2))
    return 0


def _cmd_serve(args) -> int:
    from . import service

    config = service.load_config(args.config)
    service.serve(config)
    return 0


def _cmd_evaluate(args) -> int:
    base_store = telemetry.RecordStore(args.baseline_telemetry)
    opt_store = telemetry.RecordStore(args.optimized_telemetry)
    try:
        model = baselining.fit_baseline(base_store.records, seed=args.seed)
        report = baselining.savings(model, opt_store.records)
    except (telemetry.InsufficientData, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    report.save(args.report)
    for d in report.days:
        print(f"day {d.day}: estimated {d.estimated_kwh:.1f} kWh, "
              f"measured {d.measured_kwh:.1f} kWh, saving {d.saving_pct:.2f}%")
    print(f"mean saving: {report.mean_saving_pct:.2f}%")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plantd", description="chiller plant simulator and optimizer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the plant and record telemetry")
    p.add_argument("--scenario", required=True)
    p.add_argument("--telemetry", required=True)
    p.add_argument("--days", type=int, default=None,
                   help="override the scenario's day count")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for enrichment speed draws")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("enrich", help="inject randomization windows into a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", default=None,
                   help="output scenario path (default: in place)")
    p.add_argument("--windows-per-day", type=int, default=3)
    p.add_argument("--duration", type=int,
                   default=enrich.DEFAULT_WINDOW_MINUTES)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_enrich)

    p = sub.add_parser("train", help="cross-validate and bundle the plant model")
    p.add_argument("--scenario", required=True)
    p.add_argument("--telemetry", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--report", default=None, help="write fold MAPEs as JSON")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=None,
                   help="override MLP training epochs")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("optimize", help="one-shot solve on the latest record")
    p.add_argument("--bundle", required=True)
    p.add_argument("--telemetry", required=True)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("serve", help="run the HTTP control service")
    p.add_argument("--config", default=None,
                   help="service config JSON (default: $PLANTD_CONFIG)")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("evaluate", help="baseline fit and savings report")
    p.add_argument("--baseline-telemetry", required=True)
    p.add_argument("--optimized-telemetry", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_evaluate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
