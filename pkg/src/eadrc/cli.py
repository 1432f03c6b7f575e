from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import pandas as pd

from .analysis import LoopAssembly, bode_export, ms_index, sensitivity_frame
from .config import SCHEMA, RunConfig, load_run_config, require
from .discretize import QFormat
from .errors import (
    ConfigError,
    EadrcError,
    ImproperResult,
    InvalidParameters,
    NonFiniteState,
    UnsupportedOrder,
    WrongFilterKind,
)
from .plotting import plot_bode_svg, plot_trace_svg
from .scenarios import (
    SCENARIO_ONE_VARIANTS,
    SCENARIO_TWO_VARIANTS,
    bode_comparison_set,
    order_plant,
    scenario_one,
    scenario_two,
    transient_test,
)
from .sim import RunResult, SimScenario, run_scenarios, write_trace
from .synth import (
    AdrcGains,
    FilterSpec,
    PidParams,
    TwoDofController,
    bandwidth_tune,
    build_ceq,
    build_eadrc_fb,
    build_pid_fb,
    crib_sheet,
    pid_from_adrc,
    unity_tf,
    write_crib_sheet,
)
from .tf import RationalTF, response, tf_series
from .utils import (
    DEFAULT_OUT_DIR,
    dataframe_to_csv,
    dataframe_to_parquet,
    ensure_dir,
    format_coeffs,
    isoformat_utc,
    log_grid,
    save_yaml,
    utc_now,
)


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

USAGE_ERRORS = (ConfigError, InvalidParameters, UnsupportedOrder, WrongFilterKind, ImproperResult)

SECTION_FOR_COMMAND = {
    "tune": "tune",
    "equiv-check": "equiv_check",
    "ms": "ms",
    "bode": "bode",
    "simulate": "simulate",
    "crib": "crib",
}


@dataclass
class SimulationSummary:
    runs: int = 0
    samples: int = 0
    written: list[Path] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)


def _common_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--preset", default=None, help="Named built-in parameter set (see eadrc.config.PRESETS).")
    p.add_argument("--config", default=None, help="YAML run configuration; overrides the preset.")
    p.add_argument("--out", default=str(DEFAULT_OUT_DIR), help="Output directory.")
    p.add_argument("--seed", type=int, default=0, help="Noise generator seed.")
    p.add_argument("--format", choices=["csv", "parquet"], default="csv", help="Tabular output format.")
    p.add_argument("--plot", action="store_true", help="Also write an SVG plot.")
    p.add_argument("--audit-log", default=None, help="NDJSON file for coefficient audit records.")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return p


def _gain_flags(p: argparse.ArgumentParser, order_flag: str = "--n") -> None:
    dest = "n" if order_flag == "--n" else "order"
    p.add_argument(order_flag, dest=dest, type=int, default=None, help="Plant order (1 or 2).")
    p.add_argument("--omega-cl", dest="omega_cl_rad_s", type=float, default=None, help="Controller bandwidth [rad/s].")
    p.add_argument("--k-eso", dest="k_eso", type=float, default=None, help="Observer-to-controller bandwidth ratio.")
    p.add_argument("--b0", dest="b0", type=float, default=None, help="Input gain estimate.")


def build_parser() -> argparse.ArgumentParser:
    parent = _common_parent()
    parser = argparse.ArgumentParser(
        prog="eadrc",
        description="Tune, compare, discretize and simulate error-based ADRC and its PI/PID equivalents.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tune", parents=[parent], help="Bandwidth-tune gains and print the equivalent PI/PID.")
    _gain_flags(p)

    p = sub.add_parser("equiv-check", parents=[parent], help="Verify eADRC == PI/PID x C_EQ over frequency.")
    _gain_flags(p)
    p.add_argument("--tf", dest="tf_s", type=float, default=None, help="PID output filter time constant [s] (n=2).")
    p.add_argument("--perturb-kp", dest="perturb_kp_frac", type=float, default=None, help="Relative Kp perturbation.")
    p.add_argument("--n-points", dest="n_points", type=int, default=None)

    p = sub.add_parser("ms", parents=[parent], help="Maximum sensitivity of a plant/controller pair.")
    _gain_flags(p, order_flag="--order")
    p.add_argument("--structure", default=None, choices=["pi", "pid", "eadrc", "none"])
    p.add_argument("--kp", type=float, default=None)
    p.add_argument("--ki", type=float, default=None)
    p.add_argument("--kd", type=float, default=None)
    p.add_argument("--tf", dest="tf_s", type=float, default=None, help="PID output filter time constant [s].")
    p.add_argument("--n-points", dest="n_points", type=int, default=None)
    p.add_argument("--csv", action="store_const", const=True, default=None, help="Write |S(jw)| table.")

    p = sub.add_parser("bode", parents=[parent], help="Export G_YD/G_UN/G_ER comparison curves.")
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--betas", type=float, nargs="+", default=None)
    p.add_argument("--n-points", dest="n_points", type=int, default=None)

    p = sub.add_parser("simulate", parents=[parent], help="Run a closed-loop simulation scenario.")
    p.add_argument("--scenario", default=None, choices=["transient", "scenario-1", "scenario-2"])
    p.add_argument("--variant", default=None, help="Scenario variant, or 'all'.")
    p.add_argument("--tf", dest="tf_s", type=float, default=None, help="Scenario I PID filter time constant [s].")
    p.add_argument("--tr", dest="tr_s", type=float, default=None, help="Scenario II reference filter time constant [s].")
    p.add_argument("--t-end", dest="t_end_s", type=float, default=None, help="Simulation horizon [s].")
    p.add_argument("--no-noise", dest="noise", action="store_const", const=False, default=None)
    p.add_argument("--fixed-point-bits", dest="fixed_point_bits", type=int, default=None)
    p.add_argument("--substeps", type=int, default=None)
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--structure", default=None, choices=["pi", "pid", "eadrc"])
    p.add_argument("--dof", type=int, default=None, choices=[1, 2])
    p.add_argument("--beta", type=float, default=None)

    p = sub.add_parser("crib", parents=[parent], help="Print the controller crib sheet for one order.")
    _gain_flags(p)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--tf", dest="tf_s", type=float, default=None)
    p.add_argument("--tr", dest="tr_s", type=float, default=None)
    return parser


def _load_config(args: argparse.Namespace) -> RunConfig:
    section = SECTION_FOR_COMMAND[args.command]
    overrides = {section: {key: getattr(args, key) for key in SCHEMA[section] if hasattr(args, key)}}
    return load_run_config(
        preset=args.preset,
        config_path=Path(args.config) if args.config else None,
        overrides=overrides,
    )


def _tuned_gains(cfg: dict[str, Any], name: str, order_key: str = "n") -> AdrcGains:
    return bandwidth_tune(
        require(cfg, order_key, name),
        require(cfg, "omega_cl_rad_s", name),
        require(cfg, "k_eso", name),
        cfg.get("b0", 1.0),
    )


def _output_filter(cfg: dict[str, Any], n: int) -> FilterSpec:
    tf_s = cfg.get("tf_s")
    if not tf_s:
        return FilterSpec.unity()
    if n != 2:
        raise InvalidParameters("An output filter F_Y applies to the n=2 structures only")
    return FilterSpec.first_order(tf_s)


def _write_table(df: pd.DataFrame, path: Path, fmt: str) -> Path:
    if fmt == "parquet":
        path = path.with_suffix(".parquet")
        dataframe_to_parquet(df, path)
    else:
        dataframe_to_csv(df, path)
    return path


def cmd_tune(args: argparse.Namespace, config: RunConfig) -> int:
    cfg = config.section("tune")
    g = _tuned_gains(cfg, "tune")
    pid = pid_from_adrc(g)
    ceq = build_ceq(g)
    classic = "PI" if g.n == 1 else "PID"
    print(f"n={g.n} omega_cl={cfg['omega_cl_rad_s']:g} rad/s k_eso={cfg['k_eso']:g} b0={g.b0:g}")
    print(f"k = {format_coeffs(g.k, 10)}")
    print(f"l = {format_coeffs(g.l, 10)}")
    print(f"{classic}: Kp={pid.kp:.10g} Ki={pid.ki:.10g} Kd={pid.kd:.10g}")
    print(f"C_EQ{g.n}: num={format_coeffs(ceq.num.coeffs, 10)} den={format_coeffs(ceq.den.coeffs, 10)} (ascending in s)")
    return EXIT_OK


def cmd_equiv_check(args: argparse.Namespace, config: RunConfig) -> int:
    cfg = config.section("equiv_check")
    g = _tuned_gains(cfg, "equiv-check")
    fy = _output_filter(cfg, g.n)
    pid = pid_from_adrc(g, fy=fy)
    perturb = cfg.get("perturb_kp_frac", 0.0)
    if perturb:
        pid = replace(pid, kp=pid.kp * (1.0 + perturb))
    w = log_grid(cfg.get("omega_min_rad_s", 1e-2), cfg.get("omega_max_rad_s", 1e3), cfg.get("n_points", 200))
    eadrc = response(build_eadrc_fb(g), w)
    composed = response(tf_series(build_pid_fb(pid), build_ceq(g, fy)), w)
    rel = np.abs(composed - eadrc) / np.abs(eadrc)
    worst = int(np.argmax(rel))
    deviation = float(rel[worst])
    tol = cfg.get("tolerance", 1e-9)
    verdict = "PASS" if deviation < tol else "FAIL"
    print(f"{verdict}: n={g.n} max relative deviation {deviation:.3e} (tolerance {tol:g}) over {w.size} frequencies")
    if verdict == "FAIL":
        print(f"worst omega = {w[worst]:.6g} rad/s")
        return EXIT_FAILURE
    return EXIT_OK


def _ms_controller(cfg: dict[str, Any]) -> TwoDofController:
    structure = require(cfg, "structure", "ms")
    order = require(cfg, "order", "ms")
    if structure in ("pi", "pid"):
        fy = _output_filter(cfg, order)
        pid = PidParams(kp=require(cfg, "kp", "ms"), ki=require(cfg, "ki", "ms"), kd=cfg.get("kd", 0.0), fy=fy)
        return TwoDofController(unity_tf(), build_pid_fb(pid), f"1DOF {structure.upper()}")
    if structure == "eadrc":
        g = _tuned_gains(cfg, "ms", order_key="order")
        return TwoDofController(unity_tf(), build_eadrc_fb(g), f"1DOF eADRC n={g.n}")
    if structure == "none":
        return TwoDofController(unity_tf(), RationalTF.gain(0.0), "open loop")
    raise ConfigError(f"ms: unknown structure {structure!r}")


def cmd_ms(args: argparse.Namespace, config: RunConfig) -> int:
    cfg = config.section("ms")
    asm = LoopAssembly(order_plant(require(cfg, "order", "ms")), _ms_controller(cfg))
    omega_range = (cfg.get("omega_min_rad_s", 1e-3), cfg.get("omega_max_rad_s", 1e3))
    n_points = cfg.get("n_points", 2000)
    res = ms_index(asm, omega_range, n_points)
    print(f"{asm.controller.label}: Ms={res.ms:.4f} at omega={res.omega_peak:.4g} rad/s ({res.grid})")
    if cfg.get("csv"):
        path = _write_table(
            sensitivity_frame(asm, log_grid(omega_range[0], omega_range[1], n_points)),
            Path(args.out) / "sensitivity.csv",
            args.format,
        )
        print(f"Wrote: {path}")
    return EXIT_OK


def cmd_bode(args: argparse.Namespace, config: RunConfig) -> int:
    cfg = config.section("bode")
    order = require(cfg, "order", "bode")
    betas = tuple(cfg["betas"]) if cfg.get("betas") else None
    curves = bode_comparison_set(order, betas)
    df = bode_export(
        curves,
        (cfg.get("omega_min_rad_s", 1e-2), cfg.get("omega_max_rad_s", 1e3)),
        cfg.get("n_points", 200),
    )
    out = ensure_dir(Path(args.out))
    path = _write_table(df, out / f"bode_n{order}.csv", args.format)
    print(f"Bode curves: {len(curves)} ({', '.join(label for label, _ in curves)})")
    print(f"Wrote: {path}")
    if args.plot:
        svg = plot_bode_svg(df, out / f"bode_n{order}.svg", title=f"Comparison curves, n={order}")
        print(f"Wrote: {svg}")
    return EXIT_OK


def _build_scenarios(cfg: dict[str, Any], seed: int, audit_log: Path | None) -> list[SimScenario]:
    scenario = require(cfg, "scenario", "simulate")
    common: dict[str, Any] = {"seed": seed, "noise": cfg.get("noise", True)}
    if "t_end_s" in cfg:
        common["t_end"] = cfg["t_end_s"]
    if "substeps" in cfg:
        common["substeps"] = cfg["substeps"]
    variant = cfg.get("variant")

    if scenario == "transient":
        return [
            transient_test(
                require(cfg, "order", "simulate"),
                cfg.get("structure", "eadrc"),
                cfg.get("dof", 1),
                beta=cfg.get("beta"),
                **common,
            )
        ]
    if "amplitude" in cfg:
        common["amplitude"] = cfg["amplitude"]
    if scenario == "scenario-1":
        variants = SCENARIO_ONE_VARIANTS if variant == "all" else (variant or "eadrc",)
        return [scenario_one(v, cfg.get("tf_s", 0.005), audit_log=audit_log, **common) for v in variants]
    if scenario == "scenario-2":
        variants = SCENARIO_TWO_VARIANTS if variant == "all" else (variant or "eadrc-2dof",)
        return [scenario_two(v, cfg.get("tr_s", 0.03), audit_log=audit_log, **common) for v in variants]
    raise ConfigError(f"simulate: unknown scenario {scenario!r}")


def write_simulation_report(path: Path, result: RunResult, seed: int) -> None:
    sc, trace = result.scenario, result.trace
    lines: list[str] = []
    lines.append("# Simulation Report")
    lines.append("")
    lines.append(f"- Generated at: `{isoformat_utc(utc_now())}`")
    lines.append(f"- Scenario: `{sc.name}`")
    lines.append(f"- Samples: `{len(trace)}` at Ts=`{sc.ts:g}` s, horizon `{sc.t_end:g}` s, seed `{seed}`")
    lines.append("")

    lines.append("## Reproduction choices")
    lines.append("")
    for note in sc.notes or ("none",):
        lines.append(f"- {note}")
    lines.append("")

    def _add_table(title: str, rows: list[dict[str, Any]], cols: list[str]) -> None:
        lines.append(f"## {title}")
        lines.append("")
        if not rows:
            lines.append("- None")
            lines.append("")
            return
        lines.append("| " + " | ".join(cols) + " |")
        lines.append("|" + "|".join(["---"] * len(cols)) + "|")
        for row in rows:
            vals = []
            for c in cols:
                v = row.get(c)
                vals.append(f"{v:.6g}" if isinstance(v, float) else str(v))
            lines.append("| " + " | ".join(vals) + " |")
        lines.append("")

    metric_rows = [{"window": name, **m.to_record()} for name, m in result.metrics.items()]
    _add_table(
        "Metrics",
        metric_rows,
        ["window", "iae", "overshoot_pct", "u_peak", "steady_state_error", "rise_time_s"],
    )

    audit_rows: list[dict[str, Any]] = []
    for block in sc.pipeline().blocks:
        if block.audit is None:
            continue
        audit_rows.append(
            {
                "block": block.label,
                "agrees": block.audit.agrees,
                "max_frequency_deviation": block.audit.frequency_deviation,
                "consumed": block.audit.consumed,
            }
        )
    _add_table("Coefficient audit", audit_rows, ["block", "agrees", "max_frequency_deviation", "consumed"])
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_simulate(args: argparse.Namespace, config: RunConfig) -> int:
    cfg = config.section("simulate")
    out = ensure_dir(Path(args.out))
    audit_log = Path(args.audit_log) if args.audit_log else out / "audit.ndjson"
    scenarios = _build_scenarios(cfg, args.seed, audit_log)
    bits = cfg.get("fixed_point_bits")
    if bits:
        q = QFormat(frac_bits=bits)
        scenarios = [replace(sc, controller=sc.pipeline().quantized(q), notes=sc.notes + (f"Q{bits} fixed point",)) for sc in scenarios]

    try:
        results = run_scenarios(scenarios)
    except NonFiniteState as exc:
        print(f"error: simulation diverged at t={exc.t:.6g} s: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    summary = SimulationSummary()
    comparison: list[dict[str, Any]] = []
    for result in results:
        run_dir = ensure_dir(out / result.scenario.name)
        trace_path = write_trace(
            result.trace,
            run_dir / f"trace.{args.format}",
            args.format,
        )
        metrics_path = run_dir / "metrics.yaml"
        save_yaml(
            metrics_path,
            {
                "scenario": result.scenario.name,
                "seed": args.seed,
                "ts_s": result.scenario.ts,
                "t_end_s": result.scenario.t_end,
                "generated_at_utc": isoformat_utc(utc_now()),
                "config_sources": list(config.sources),
                "reproduction_choices": list(result.scenario.notes),
                "windows": {name: m.to_record() for name, m in result.metrics.items()},
            },
        )
        report_path = run_dir / "report.md"
        write_simulation_report(report_path, result, args.seed)
        summary.written.extend([trace_path, metrics_path, report_path])
        if args.plot:
            summary.written.append(plot_trace_svg(result.trace, run_dir / "trace.svg", title=result.scenario.name))
        summary.runs += 1
        summary.samples += len(result.trace)
        summary.notes.extend(n for n in result.scenario.notes if n not in summary.notes)
        for name, m in result.metrics.items():
            comparison.append({"scenario": result.scenario.name, "window": name, **m.to_record()})

    if len(results) > 1:
        summary.written.append(_write_table(pd.DataFrame.from_records(comparison), out / "comparison.csv", args.format))

    print(f"Simulation complete. runs={summary.runs} samples={summary.samples}")
    for note in summary.notes:
        print(f"Note: {note}")
    for path in summary.written:
        print(f"Wrote: {path}")
    return EXIT_OK


def cmd_crib(args: argparse.Namespace, config: RunConfig) -> int:
    cfg = config.section("crib")
    g = _tuned_gains(cfg, "crib")
    fr = FilterSpec.first_order(cfg["tr_s"]) if cfg.get("tr_s") else FilterSpec.unity()
    pid = pid_from_adrc(g, beta=cfg.get("beta", 1.0), fy=_output_filter(cfg, g.n), fr=fr)
    sheet = crib_sheet(g, pid)
    print(sheet.to_text(), end="")
    out = Path(args.out)
    for path in write_crib_sheet(sheet, out):
        print(f"Wrote: {path}")
    return EXIT_OK


COMMANDS: dict[str, Callable[[argparse.Namespace, RunConfig], int]] = {
    "tune": cmd_tune,
    "equiv-check": cmd_equiv_check,
    "ms": cmd_ms,
    "bode": cmd_bode,
    "simulate": cmd_simulate,
    "crib": cmd_crib,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _load_config(args)
        return COMMANDS[args.command](args, config)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EadrcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    raise SystemExit(main())
