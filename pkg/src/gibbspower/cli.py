"""Command-line experiment runner.

Verbs: run (traces + summaries), sweep (aggregate table over beta and
gamma_bar cells), compare (several variants under common random numbers),
analyze (exact chain analytics for discrete grids). Every verb writes
schema-tagged CSV files; figures are rendered next to them unless
--no-figures is passed.
"""

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from gibbspower import chain, engine
from gibbspower.config import ConfigError, load_config


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return f"{x:g}"


def _cell_tag(variant, seed, beta, gamma_db) -> str:
    tag = f"{variant}_seed{seed}_beta{_fmt(beta)}"
    if gamma_db is not None:
        tag += f"_gb{_fmt(gamma_db)}dB"
    return tag


def _write_csv(path, schema: str, header: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write(f"# schema=gibbspower/{schema}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _cells(cfg, variant, seed_offset):
    """(seed, beta, gamma_bar_db, gamma_bar_linear) grid for one variant."""
    from gibbspower.config import db_to_linear
    gammas = cfg.gamma_bars_db if (variant == "niglad" and cfg.gamma_bars_db) else (None,)
    for seed in cfg.seeds:
        for beta in cfg.betas:
            for gdb in gammas:
                glin = db_to_linear(gdb) if gdb is not None else None
                yield seed + seed_offset, beta, gdb, glin


def _run_cell(cfg, gm, u, grid, variant, seed, beta, gamma_lin):
    return engine.run_simulation(
        gm, u, variant, beta, cfg.horizon_events, seed, grid=grid,
        n_points=cfg.n_points, gamma_bar=gamma_lin, rate=cfg.rate,
        ctrl_power=cfg.ctrl_power,
    )


def _summary_block(tag, stats) -> str:
    lines = [f"[{tag}]"]
    for key in ("events", "tail_events", "tail_mean_utility", "tail_var_utility",
                "broadcasts", "processed"):
        lines.append(f"  {key} = {stats[key]:.10g}" if isinstance(stats[key], float)
                     else f"  {key} = {stats[key]}")
    return "\n".join(lines) + "\n"


def _maybe_chain_analysis(cfg, gm, u, grid, outdir, figures) -> str:
    """Exact analytics next to a discrete run; skipped with a warning when
    the lattice exceeds the caps."""
    if grid is None:
        return ""
    try:
        rows = chain.analysis_table(gm, grid, u, cfg.betas)
        ustar, opt = chain.brute_force_optimum(gm, grid, u)
    except chain.StateSpaceCapError as exc:
        print(f"warning: chain analysis skipped: {exc}", file=sys.stderr)
        return ""
    _write_analysis_csv(outdir / "analysis.csv", rows)
    if figures:
        from gibbspower import plots
        plots.plot_analysis(rows, outdir / "analysis.png")
    return f"[analysis]\n  max_utility = {ustar:.10g}\n  optimal_states = {opt.size}\n"


def _write_analysis_csv(path, rows) -> None:
    _write_csv(
        path, "analysis/v1",
        "beta,mean_utility,variance,variance_bound,prob_optimal,lambda2",
        ([_fmt(r["beta"]), f"{r['mean_utility']:.12g}", f"{r['variance']:.12g}",
          f"{r['variance_bound']:.12g}", f"{r['prob_optimal']:.12g}",
          f"{r['lambda2']:.12g}"] for r in rows),
    )


def _stats_rows(cfg, gm, u, grid, variants, seed_offset):
    """Run every (variant, seed, beta, gamma_bar) cell; yield stat dicts."""
    for variant in variants:
        for seed, beta, gdb, glin in _cells(cfg, variant, seed_offset):
            trace = _run_cell(cfg, gm, u, grid, variant, seed, beta, glin)
            stats = trace.tail_stats(cfg.tail_fraction)
            stats.update({"variant": variant, "seed": seed, "beta": beta,
                          "gamma_bar_db": gdb, "trace": trace})
            yield stats


def cmd_run(cfg, outdir: Path, seed_offset: int, figures: bool) -> int:
    gm = cfg.build_gain_matrix()
    u = cfg.build_utility()
    grid = cfg.build_grid(gm)
    summary = ""
    for stats in _stats_rows(cfg, gm, u, grid, (cfg.variant,), seed_offset):
        tag = _cell_tag(stats["variant"], stats["seed"], stats["beta"],
                        stats["gamma_bar_db"])
        trace = stats.pop("trace")
        trace.to_csv(outdir / f"trace_{tag}.csv", thin=cfg.record_thin)
        if figures:
            from gibbspower import plots
            plots.plot_trace(trace, outdir / f"trace_{tag}.png", cfg.tail_fraction)
        summary += _summary_block(tag, stats)
    summary += _maybe_chain_analysis(cfg, gm, u, grid, outdir, figures)
    (outdir / "summary.txt").write_text(summary)
    print(summary, end="")
    return 0


_SWEEP_HEADER = ("variant,beta,gamma_bar_db,seed,tail_mean_utility,"
                 "tail_var_utility,broadcasts,processed,tail_events")


def _sweep_row(s) -> list:
    return [s["variant"], _fmt(s["beta"]), _fmt(s["gamma_bar_db"]), str(s["seed"]),
            f"{s['tail_mean_utility']:.12g}", f"{s['tail_var_utility']:.12g}",
            str(s["broadcasts"]), str(s["processed"]), str(s["tail_events"])]


def cmd_sweep(cfg, outdir: Path, seed_offset: int, figures: bool) -> int:
    gm = cfg.build_gain_matrix()
    u = cfg.build_utility()
    grid = cfg.build_grid(gm)
    rows = []
    for stats in _stats_rows(cfg, gm, u, grid, (cfg.variant,), seed_offset):
        stats.pop("trace")
        rows.append(stats)
    _write_csv(outdir / "sweep.csv", "sweep/v1", _SWEEP_HEADER,
               (_sweep_row(s) for s in rows))
    if figures and rows:
        from gibbspower import plots
        if len(cfg.betas) > 1:
            plots.plot_sweep(rows, outdir / "sweep_beta.png", x_key="beta")
        if cfg.gamma_bars_db and len(cfg.gamma_bars_db) > 1:
            plots.plot_sweep(rows, outdir / "sweep_gamma_bar.png",
                             x_key="gamma_bar_db")
    print(f"wrote {outdir / 'sweep.csv'} ({len(rows)} cells)")
    return 0


def cmd_compare(cfg, outdir: Path, seed_offset: int, figures: bool) -> int:
    gm = cfg.build_gain_matrix()
    u = cfg.build_utility()
    grid = cfg.build_grid(gm)
    variants = cfg.variant_list()
    rows = []
    for stats in _stats_rows(cfg, gm, u, grid, variants, seed_offset):
        stats.pop("trace")
        rows.append(stats)
    _write_csv(outdir / "compare.csv", "compare/v1", _SWEEP_HEADER,
               (_sweep_row(s) for s in rows))
    if figures and rows:
        from gibbspower import plots
        plots.plot_compare(rows, outdir / "compare.png")
    print(f"wrote {outdir / 'compare.csv'} ({len(rows)} cells)")
    return 0


def cmd_analyze(cfg, outdir: Path, seed_offset: int, figures: bool,
                k_max: int) -> int:
    gm = cfg.build_gain_matrix()
    u = cfg.build_utility()
    grid = cfg.build_grid(gm)
    if grid is None:
        print("error: analyze needs a discrete grid", file=sys.stderr)
        return 2
    try:
        rows = chain.analysis_table(gm, grid, u, cfg.betas)
        ustar, opt = chain.brute_force_optimum(gm, grid, u)
    except chain.StateSpaceCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _write_analysis_csv(outdir / "analysis.csv", rows)
    if figures:
        from gibbspower import plots
        plots.plot_analysis(rows, outdir / "analysis.png")
    summary = (f"[analysis]\n  states = {chain.StateSpace(grid).size}\n"
               f"  max_utility = {ustar:.10g}\n  optimal_states = {opt.size}\n")
    for beta in cfg.betas:
        try:
            model = chain.build_chain(gm, grid, u, beta)
        except chain.StateSpaceCapError as exc:
            print(f"warning: mixing analysis skipped: {exc}", file=sys.stderr)
            break
        initial = np.zeros(model.size)
        initial[0] = 1.0
        tvs = chain.mixing_analysis(model, initial, k_max)
        _write_csv(outdir / f"mixing_beta{_fmt(beta)}.csv", "mixing/v1",
                   "k,tv_distance",
                   ([str(k), f"{tv:.12g}"] for k, tv in enumerate(tvs)))
        if figures:
            from gibbspower import plots
            plots.plot_mixing(tvs, model.lambda2, outdir / f"mixing_beta{_fmt(beta)}.png")
        summary += f"  lambda2[beta={_fmt(beta)}] = {model.lambda2:.8g}\n"
    (outdir / "analysis_summary.txt").write_text(summary)
    print(summary, end="")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gibbspower",
        description="Gibbs-sampling distributed power control: simulate and analyze.",
    )
    parser.add_argument("verb", choices=("run", "sweep", "compare", "analyze"))
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed-offset", type=int, default=0,
                        help="added to every configured seed")
    parser.add_argument("--no-figures", action="store_true",
                        help="skip figure rendering, write CSV only")
    parser.add_argument("--k-max", type=int, default=400,
                        help="steps for the mixing analysis (analyze verb)")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    figures = not args.no_figures

    try:
        if args.verb == "run":
            return cmd_run(cfg, outdir, args.seed_offset, figures)
        if args.verb == "sweep":
            return cmd_sweep(cfg, outdir, args.seed_offset, figures)
        if args.verb == "compare":
            return cmd_compare(cfg, outdir, args.seed_offset, figures)
        return cmd_analyze(cfg, outdir, args.seed_offset, figures, args.k_max)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surface anything else as a diagnostic, not a traceback
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
