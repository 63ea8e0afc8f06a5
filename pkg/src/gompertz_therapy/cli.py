"""Command-line interface.

Subcommands:
    simulate          emit the three group panels from a config
    fit               run the stepwise estimation on the three panels
    test              bootstrap-test one therapy function for constancy
    cascade           run the four concatenated constancy tests
    replicate-study   repeat a simulated study end to end with MSE tables
    report            fitted curves, mean/variance overlays and KDE data

Every artifact lands under the output directory and embeds the seed plus
the fully resolved configuration, so a run is a pure function of
(config, seed).  Exit codes: 0 success, 1 numeric failure, 2 bad input.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .bootstrap import concatenated_protocol, isolated_test, kde_null
from .config import load_config
from .dataio import (read_panel_csv, write_fit_report, write_mse_table,
                     write_panel_csv, write_params_artifact, write_plot_table,
                     write_profile_table, write_test_artifact)
from .errors import NumericError, ValidationError
from .inference import sample_moment_curves, stepwise_fit
from .model import mean_variance_x, theoretical_moments
from .simulate import SimulationConfig, simulate
from .study import StudySpec, replicate_mse
from .validation import check_shared_grid


def _parser():
    parser = argparse.ArgumentParser(
        prog="gompertz-therapy",
        description="Gompertz diffusion tumor-growth modeling with "
                    "time-dependent therapy effects",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML run configuration")
    common.add_argument("--seed", type=int, help="master seed override")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--ordering", choices=("apf", "dif"),
                        help="therapy ordering override")
    common.add_argument("--bootstrap-m", type=int, help="bootstrap replicate count")
    common.add_argument("--level", type=float, help="test significance level")
    common.add_argument("--loess-span", type=float,
                        help="smoothing span for every series")
    common.add_argument("--loess-span-rate", type=float,
                        help="smoothing span for the rate series")
    common.add_argument("--loess-span-variance", type=float,
                        help="smoothing span for the variance series")
    common.add_argument("--loess-degree", type=int, choices=(1, 2),
                        help="local polynomial degree")
    common.add_argument("--scheme", choices=("exact", "euler"),
                        help="simulation scheme override")
    common.add_argument("--relation-form", choices=("m2", "m1u"),
                        help="moment-relation form override")

    sub.add_parser("simulate", parents=[common],
                   help="simulate the three group panels")
    sub.add_parser("fit", parents=[common], help="run the stepwise estimation")
    p_test = sub.add_parser("test", parents=[common],
                            help="bootstrap-test one therapy function")
    p_test.add_argument("--target", required=True, choices=("C", "D", "V1", "V2"))
    sub.add_parser("cascade", parents=[common],
                   help="run the concatenated constancy tests")
    p_rep = sub.add_parser("replicate-study", parents=[common],
                           help="repeat the study end to end")
    p_rep.add_argument("--replications", type=int, default=10)
    sub.add_parser("report", parents=[common],
                   help="emit plot-ready curve, overlay and KDE data")
    return parser


def _overrides(args):
    out = {}
    for flag, key in (("seed", "seed"), ("ordering", "ordering"),
                      ("bootstrap_m", "bootstrap_m"), ("level", "level"),
                      ("loess_span", "loess_span"),
                      ("loess_span_rate", "loess_span_rate"),
                      ("loess_span_variance", "loess_span_variance"),
                      ("loess_degree", "loess_degree"), ("scheme", "scheme"),
                      ("relation_form", "relation_form")):
        val = getattr(args, flag, None)
        if val is not None:
            out[key] = val
    return out


def _panels(cfg):
    """Simulate or ingest the three group panels as configured."""
    ss = np.random.SeedSequence(cfg.seed)
    children = dict(zip(("control", "g1", "g2"), ss.spawn(3)))
    panels = {}
    for name in ("control", "g1", "g2"):
        spec = cfg.groups[name]
        if spec.simulated:
            c, d, v = cfg.group_model_profiles(name)
            sim_cfg = SimulationConfig(n_paths=spec.n_paths, seed=children[name],
                                       scheme=cfg.scheme, substeps=cfg.substeps)
            panels[name] = simulate(cfg.params, c, d, v, cfg.design, sim_cfg,
                                    label=name)
        else:
            panels[name] = read_panel_csv(spec.file, label=name)
    check_shared_grid(panels["g1"], panels["g2"])
    return panels["control"], panels["g1"], panels["g2"]


def _ensure_dirs(out, *subdirs):
    os.makedirs(out, exist_ok=True)
    for sd in subdirs:
        os.makedirs(os.path.join(out, sd), exist_ok=True)


def _write_fit_artifacts(out, cfg, fit):
    write_params_artifact(os.path.join(out, "params.txt"), fit.params,
                          cfg.seed, cfg.effective(),
                          diagnostics=fit.diagnostics.get("control_ml"))
    for target, profile in fit.profiles.items():
        write_profile_table(
            os.path.join(out, "profiles", f"{target}.csv"),
            fit.grid, fit.raw[target], fit.smoothed[target],
            fit.missing[target], fit.floored[target],
            seed=cfg.seed, config=cfg.effective())
    write_fit_report(os.path.join(out, "report.txt"), fit, cfg.seed, cfg.effective())


def _run_single_test(cfg, fit, g1, g2, target):
    test_seed = int(np.random.SeedSequence(cfg.seed).spawn(5)[4].generate_state(1)[0])
    return isolated_test(fit, g1, g2, target, m=cfg.bootstrap_m, seed=test_seed,
                         level=cfg.level)


def _write_test_artifacts(out, cfg, result, stem):
    write_test_artifact(os.path.join(out, "tests", f"{stem}.txt"), result,
                        cfg.seed, cfg.effective())
    grid, density, _ = kde_null(result.replicates, bandwidth="silverman",
                                level=result.level)
    write_plot_table(os.path.join(out, "plotdata", f"kde_{stem}.csv"),
                     {"statistic": grid, "density": density},
                     seed=cfg.seed, config=cfg.effective())


def cmd_simulate(cfg, args):
    _ensure_dirs(args.out, "panels")
    control, g1, g2 = _panels(cfg)
    for name, panel in (("control", control), ("g1", g1), ("g2", g2)):
        write_panel_csv(os.path.join(args.out, "panels", f"{name}.csv"), panel,
                        seed=cfg.seed, config=cfg.effective())
    return 0


def cmd_fit(cfg, args):
    _ensure_dirs(args.out, "profiles")
    control, g1, g2 = _panels(cfg)
    fit = stepwise_fit(control, g1, g2, settings=cfg.settings)
    _write_fit_artifacts(args.out, cfg, fit)
    return 0


def cmd_test(cfg, args):
    _ensure_dirs(args.out, "tests", "plotdata")
    control, g1, g2 = _panels(cfg)
    fit = stepwise_fit(control, g1, g2, settings=cfg.settings)
    result = _run_single_test(cfg, fit, g1, g2, args.target)
    _write_test_artifacts(args.out, cfg, result, args.target)
    return 0


def cmd_cascade(cfg, args):
    _ensure_dirs(args.out, "tests", "plotdata", "profiles")
    control, g1, g2 = _panels(cfg)
    protocol = concatenated_protocol(control, g1, g2, settings=cfg.settings,
                                     level=cfg.level, m=cfg.bootstrap_m,
                                     seed=cfg.seed)
    _write_fit_artifacts(args.out, cfg, protocol.fit)
    for pos, result in enumerate(protocol.tests, start=1):
        _write_test_artifacts(args.out, cfg, result, f"{pos}_{result.target}")
    write_fit_report(os.path.join(args.out, "post_report.txt"),
                     protocol.final_fit, cfg.seed, cfg.effective())
    return 0


def cmd_replicate_study(cfg, args):
    _ensure_dirs(args.out)
    if not all(cfg.groups[g].simulated for g in ("control", "g1", "g2")):
        raise ValidationError("replicate-study needs simulated groups (known truth)")
    spec = StudySpec(
        params=cfg.params, design=cfg.design,
        g1_profiles=cfg.group_model_profiles("g1"),
        g2_profiles=cfg.group_model_profiles("g2"),
        ordering=cfg.settings.ordering,
        n_control=cfg.groups["control"].n_paths,
        n_g1=cfg.groups["g1"].n_paths, n_g2=cfg.groups["g2"].n_paths,
    )
    seeds = np.random.SeedSequence(cfg.seed).spawn(args.replications)
    rows = [replicate_mse(spec, ss, settings=cfg.settings) for ss in seeds]
    medians = {k: float(np.median([r[k] for r in rows])) for k in rows[0]}
    write_mse_table(os.path.join(args.out, "mse.txt"), rows, medians,
                    seed=cfg.seed, config=cfg.effective())
    return 0


def cmd_report(cfg, args):
    _ensure_dirs(args.out, "tests", "plotdata", "profiles")
    control, g1, g2 = _panels(cfg)
    protocol = concatenated_protocol(control, g1, g2, settings=cfg.settings,
                                     level=cfg.level, m=cfg.bootstrap_m,
                                     seed=cfg.seed)
    fit = protocol.fit
    _write_fit_artifacts(args.out, cfg, fit)
    for pos, result in enumerate(protocol.tests, start=1):
        _write_test_artifacts(args.out, cfg, result, f"{pos}_{result.target}")
    write_fit_report(os.path.join(args.out, "post_report.txt"),
                     protocol.final_fit, cfg.seed, cfg.effective())

    truths = {}
    if all(cfg.groups[g].simulated for g in ("g1", "g2")):
        c1, d1, v1 = cfg.group_model_profiles("g1")
        c2, d2, v2 = cfg.group_model_profiles("g2")
        if cfg.settings.ordering == "anti_proliferative_first":
            truths = {"C": c1, "D": d2, "V1": v1, "V2": v2}
        else:
            truths = {"C": c2, "D": d1, "V1": v1, "V2": v2}
    for target, profile in fit.profiles.items():
        cols = {"time": fit.grid, "raw": fit.raw[target],
                "fitted": fit.smoothed[target]}
        if target in truths:
            cols["true"] = truths[target](fit.grid)
        write_plot_table(os.path.join(args.out, "plotdata", f"curve_{target}.csv"),
                         cols, seed=cfg.seed, config=cfg.effective())
    for name, panel in (("g1", g1), ("g2", g2)):
        curves = sample_moment_curves(panel)
        fc, fd, fv = fit.group_profiles(name)
        fit_mean, fit_var = mean_variance_x(
            theoretical_moments(fit.params, fc, fd, fv, panel.design))
        cols = {
            "time": panel.grid,
            "sample_mean": panel.values.mean(axis=0),
            "sample_var": panel.values.var(axis=0, ddof=1),
            "fitted_mean": fit_mean, "fitted_var": fit_var,
        }
        if cfg.groups[name].simulated:
            tc, td, tv = cfg.group_model_profiles(name)
            true_mean, true_var = mean_variance_x(
                theoretical_moments(cfg.params, tc, td, tv, panel.design))
            cols["true_mean"] = true_mean
            cols["true_var"] = true_var
        write_plot_table(os.path.join(args.out, "plotdata", f"meanvar_{name}.csv"),
                         cols, seed=cfg.seed, config=cfg.effective())
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "test": cmd_test,
    "cascade": cmd_cascade,
    "replicate-study": cmd_replicate_study,
    "report": cmd_report,
}


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, overrides=_overrides(args))
        return COMMANDS[args.command](cfg, args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
