"""Command-line pipeline: simulate, summarize, design, fit, calibrate, flux.

Every subcommand takes ``--config`` (a ``key = value`` file, see
:mod:`gravtsir.io`), writes its artifact(s) plus a ``<out>.manifest.json``
recording the resolved configuration, the effective seed, and content
hashes of every input -- reruns with the same inputs are byte-identical.

Exit codes: 0 success, 2 usage error, 3 data/configuration error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .calibrate import credible_region_2d, run_mcmc
from .design import SimulationSettings, build_training_set, make_grid
from .emulator import DistanceEmulator, fit_emulator
from .errors import ConfigError, NumericalError
from .flux import (degree_histogram, export_network, flux_posterior_summary,
                   movement_matrix)
from .io import (RunConfig, correct_underreporting, load_config, load_mask,
                 load_panel, read_chain, read_panel, read_training,
                 write_chain, write_edges, write_flux_summary,
                 write_histogram, write_manifest, write_panel, write_region,
                 write_summary, write_training)
from .model import (EpidemicState, GravityParams, LocalDynamics, PARAM_NAMES)
from .summaries import summarize_panel

__all__ = ["main"]


def _effective_seed(args, cfg: RunConfig) -> int:
    seed = args.seed if args.seed is not None else cfg.seed
    if seed is None:
        raise ConfigError("a seed is required: set 'seed' in the config or "
                          "pass --seed")
    return int(seed)


def _load_observed(cfg: RunConfig):
    """Observed panel + demographics + distances, corrections applied."""
    cfg.require("cases", "cities")
    panel, demo, dist = load_panel(cfg.cases, cfg.cities,
                                   vaccination_path=cfg.vaccination,
                                   distances_path=cfg.distances,
                                   coords=cfg.coords, weekly=cfg.weekly)
    if cfg.reporting_rate is not None:
        panel = correct_underreporting(panel, cfg.reporting_rate)
    return panel, demo, dist


def _data_inputs(cfg: RunConfig) -> list[Path]:
    return [p for p in (cfg.cases, cfg.cities, cfg.vaccination,
                        cfg.distances, cfg.mask) if p is not None]


def _settings_from_config(cfg: RunConfig, panel, demo,
                          dist) -> SimulationSettings:
    """Simulator settings anchored to the observed panel.

    The initial state takes the observed first-biweek cases as infecteds
    and s0 * population as susceptibles; the horizon defaults to the panel
    length.
    """
    population, _, _ = demo.at(1)
    initial = EpidemicState(t=1, susceptible=cfg.s0 * population,
                            infected=panel.cases[:, 0])
    local = LocalDynamics(beta=np.array(cfg.beta), alpha=cfg.alpha)
    horizon = cfg.horizon if cfg.horizon is not None else panel.n_biweeks
    return SimulationSettings(initial=initial, local=local, demo=demo,
                              dist=dist, horizon=horizon,
                              normalize_by_population=cfg.normalize)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seed = _effective_seed(args, cfg)
    panel, demo, dist = _load_observed(cfg)
    settings = _settings_from_config(cfg, panel, demo, dist)
    gravity = GravityParams(*cfg.gravity_values())
    result = settings.run(gravity, seed)
    write_panel(result, args.out)
    write_manifest(f"{args.out}.manifest.json", "simulate", cfg, seed,
                   [args.config, *_data_inputs(cfg)], [args.out])
    return 0


def _cmd_summarize(args) -> int:
    cfg = load_config(args.config)
    if args.panel is not None:
        panel = read_panel(args.panel)
        inputs = [args.config, args.panel]
    else:
        panel, _, _ = _load_observed(cfg)
        inputs = [args.config, *_data_inputs(cfg)]
    summary = summarize_panel(panel, cfg.statistic)
    write_summary(summary, args.out)
    write_manifest(f"{args.out}.manifest.json", "summarize", cfg, cfg.seed,
                   inputs, [args.out])
    return 0


def _cmd_design(args) -> int:
    cfg = load_config(args.config)
    seed = _effective_seed(args, cfg)
    panel, demo, dist = _load_observed(cfg)
    settings = _settings_from_config(cfg, panel, demo, dist)
    observed = summarize_panel(panel, cfg.statistic)
    free = [n for n in PARAM_NAMES if n not in cfg.pinned]
    missing = [n for n in free if n not in cfg.grid]
    if missing:
        raise ConfigError(f"design needs grid counts for the free axes; add "
                          + ", ".join(f"grid_{n}" for n in missing))
    grid = make_grid(cfg.grid, bounds=cfg.bounds or None, pinned=cfg.pinned)
    training = build_training_set(grid, observed, settings, root_seed=seed,
                                  replicates=cfg.replicates,
                                  workers=args.workers)
    write_training(training, args.out)
    write_manifest(f"{args.out}.manifest.json", "design", cfg, seed,
                   [args.config, *_data_inputs(cfg)], [args.out])
    return 0


def _cmd_fit(args) -> int:
    cfg = load_config(args.config)
    training = read_training(args.training)
    seed = args.seed if args.seed is not None else (cfg.seed or 0)
    emulator = fit_emulator(training, n_starts=cfg.n_starts,
                            jitter=cfg.jitter, random_state=seed)
    emulator.save(args.out)
    write_manifest(f"{args.out}.manifest.json", "fit", cfg, seed,
                   [args.config, args.training], [args.out])
    return 0


def _cmd_calibrate(args) -> int:
    cfg = load_config(args.config)
    seed = _effective_seed(args, cfg)
    emulator = DistanceEmulator.load(args.emulator)
    chain = run_mcmc(emulator, n=cfg.chain_length, seed=seed,
                     pinned=cfg.pinned, delta_pinned=cfg.delta_pinned,
                     prior_box=cfg.prior_box(), burn_in=cfg.burn_in,
                     thin=cfg.thin)
    write_chain(chain, args.out, emulator_hash=emulator.training_hash())
    outputs = [args.out]
    regions_path = args.regions
    if regions_path is None:
        out = Path(args.out)
        regions_path = out.with_name(out.stem + "_region" + out.suffix)
    axes_free = all(n not in cfg.pinned for n in cfg.region_axes)
    if axes_free and len(chain) >= 5000:
        region = credible_region_2d(chain, names=cfg.region_axes,
                                    gamma=cfg.gamma, grid_size=cfg.grid_size)
        write_region(region, regions_path)
        outputs.append(regions_path)
    else:
        print("note: skipping credible region (needs two free axes and at "
              "least 5000 samples)", file=sys.stderr)
    write_manifest(f"{args.out}.manifest.json", "calibrate", cfg, seed,
                   [args.config, args.emulator], outputs)
    return 0


def _cmd_flux(args) -> int:
    cfg = load_config(args.config)
    panel, demo, dist = _load_observed(cfg)
    chain, _ = read_chain(args.chain)
    out = Path(args.out)
    summary = flux_posterior_summary(chain, demo, dist, panel,
                                     cities=cfg.flux_cities, gamma=cfg.gamma,
                                     thin=cfg.flux_thin,
                                     average=cfg.flux_average,
                                     workers=args.workers)
    write_flux_summary(summary, out)
    outputs = [out]
    if cfg.mask is not None:
        for label, mask in sorted(load_mask(cfg.mask,
                                            panel.n_biweeks).items()):
            labelled = flux_posterior_summary(
                chain, demo, dist, panel, cities=cfg.flux_cities,
                gamma=cfg.gamma, thin=cfg.flux_thin, average=cfg.flux_average,
                biweek_mask=mask, workers=args.workers)
            label_path = out.with_name(f"{out.stem}_{label}{out.suffix}")
            write_flux_summary(labelled, label_path)
            outputs.append(label_path)
    median = GravityParams.from_array(np.median(chain.samples[:, :4], axis=0))
    matrix = movement_matrix(median, demo, dist, panel,
                             average=cfg.flux_average)
    if args.edges is not None:
        write_edges(export_network(matrix, demo.city_ids,
                                   threshold=cfg.flux_threshold,
                                   direction=cfg.flux_direction), args.edges)
        outputs.append(args.edges)
    if args.histogram is not None:
        bin_edges, counts = degree_histogram(matrix,
                                             direction=cfg.flux_direction,
                                             bins=cfg.flux_bins,
                                             log_transform=cfg.flux_log)
        write_histogram(bin_edges, counts, args.histogram)
        outputs.append(args.histogram)
    write_manifest(f"{out}.manifest.json", "flux", cfg, cfg.seed,
                   [args.config, args.chain, *_data_inputs(cfg)], outputs)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gravtsir",
        description="Gravity-coupled epidemic simulation, emulator-based "
                    "calibration, and infection-flux analysis.")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="command")

    def add(name: str, handler, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True,
                       help="key = value configuration file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", required=True, help="output file")
        p.set_defaults(handler=handler)
        return p

    add("simulate", _cmd_simulate,
        "run the epidemic simulator; writes a case panel CSV")
    p = add("summarize", _cmd_summarize,
            "reduce a panel to the configured per-city statistic")
    p.add_argument("--panel", default=None,
                   help="panel CSV to summarize (default: the configured "
                        "observed cases, corrections applied)")
    p = add("design", _cmd_design,
            "simulate the parameter grid and write the training set")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel simulation processes")
    p = add("fit", _cmd_fit, "fit the distance emulator to a training set")
    p.add_argument("--training", required=True, help="training-set CSV")
    p = add("calibrate", _cmd_calibrate,
            "sample the posterior over gravity parameters")
    p.add_argument("--emulator", required=True, help="fitted emulator file")
    p.add_argument("--regions", default=None,
                   help="credible-region CSV (default: <out>_region.csv)")
    p = add("flux", _cmd_flux,
            "summarize posterior infection flux between cities")
    p.add_argument("--chain", required=True, help="posterior chain CSV")
    p.add_argument("--edges", default=None,
                   help="also export a thresholded edge-list CSV")
    p.add_argument("--histogram", default=None,
                   help="also export a flux histogram CSV")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel processes for the posterior flux loop")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (ValueError, OSError) as exc:
        # SchemaError and ConfigError land here too (both are ValueErrors).
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
