"""Command line entry point: greenlab <subcommand> [--config PATH] [--seed N]
[--out DIR] [--map LABEL|PATH].

Every artifact carries the configuration hash and the seed, and contains
nothing else that varies between runs, so reruns are byte-identical. On a
library error the artifacts written so far are removed and the error is
reported as JSON on stderr with its exit code.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from greenlab.config import ExperimentConfig, load_config
from greenlab.dimension import MAXIMAL_DIMENSION_SLACK, dimension_consistency, local_dimension, with_upper_bound
from greenlab.endomorphism import chart_differential, critical_proximity, finite_difference_differential, lift, load_map
from greenlab.errors import EXIT_NUMERIC, EXIT_OK, ConfigError, DomainError, GreenLabError, NumericalError
from greenlab.green_measure import (
    green_function,
    has_preimage_solver,
    invariance_zscores,
    sample_frame,
    sample_measure,
    sample_orbits,
)
from greenlab.greenlab import greenlab
from greenlab.linearization import (
    linearization_test,
    mass_curves_grid,
    sqrt_d_linearization_test,
)
from greenlab.lyapunov import briend_duval_check, exponent_minimality_test, lyapunov_spectrum, report_dict
from greenlab.projective import random_points
from greenlab.zoo import ZOO_LABELS, load_entry, oracle_residual, save_entry, zoo_entry

logger = logging.getLogger(__name__)

V_DECAY_THRESHOLD = 0.05
VALIDATION_POINTS = 100
VALIDATION_SAMPLE = 1000
VALIDATION_ORBITS = 200
VALIDATION_STEPS = 100
FUNCTIONAL_EQUATION_TOLERANCE = 1e-8
GRADIENT_TOLERANCE = 1e-5
GRADIENT_MIN_PROXIMITY = 1e-3


class Artifacts:
    """Files written by one run, stamped with the config hash and seed."""

    def __init__(self, config):
        self.root = config.output_dir
        self.stamp = {"config_hash": config.config_hash(), "seed": config.seed}
        self.written = []
        self.directories = []

    def path(self, *parts):
        path = os.path.join(self.root, *parts)
        directory = os.path.dirname(path)
        missing = []
        while directory and not os.path.isdir(directory):
            missing.append(directory)
            directory = os.path.dirname(directory)
        for directory in reversed(missing):
            os.makedirs(directory)
            self.directories.append(directory)
        self.written.append(path)
        return path

    def write_json(self, payload, *parts):
        payload = dict(payload, **self.stamp)
        with open(self.path(*parts), "w") as file:
            json.dump(payload, file, indent=2, sort_keys=True)
            file.write("\n")
        logger.info("wrote %s", os.path.join(self.root, *parts))

    def write_csv(self, frame, *parts, header=None):
        header = dict(header or {}, **self.stamp)
        with open(self.path(*parts), "w", newline="") as file:
            for key in sorted(header):
                file.write("# {}={}\n".format(key, header[key]))
            frame.to_csv(file, index=False, float_format="%.17g")
        logger.info("wrote %s", os.path.join(self.root, *parts))

    def remove(self):
        for path in reversed(self.written):
            if os.path.exists(path):
                os.remove(path)
        for directory in reversed(self.directories):
            if os.path.isdir(directory) and not os.listdir(directory):
                os.rmdir(directory)
        self.written = []
        self.directories = []


def resolve_map(source):
    """A zoo label, a zoo entry directory or a map.json file."""
    if source in ZOO_LABELS:
        return zoo_entry(source).map
    if os.path.isdir(source):
        return load_entry(source).map
    if os.path.isfile(source):
        return load_map(source)
    raise ConfigError("{!r} is neither a zoo label nor a map definition".format(source))


def _sample(f, config, count, chains=None):
    return sample_measure(
        f,
        count,
        burn_in=config.burn_in,
        seed=config.seed,
        method=config.method,
        chains=config.chains if chains is None else chains,
    )


def _spectrum(f, config, n_orbits=None, n_steps=None):
    n_steps = n_steps or config.n_steps
    sample = sample_orbits(f, n_orbits or config.n_orbits, n_steps, burn_in=config.burn_in, seed=config.seed)
    return lyapunov_spectrum(f, sample, n_steps)


def _middle(grid):
    return grid[len(grid) // 2]


def run_sample(f, config, artifacts):
    sample = _sample(f, config, config.sample_count)
    header = dict(map_label=sample.map_label, method=sample.method, burn_in=sample.burn_in, count=sample.count, chains=sample.chains)
    artifacts.write_csv(sample_frame(sample), "sample.csv", header=header)


def run_exponents(f, config, artifacts):
    spectrum = _spectrum(f, config)
    report = report_dict(spectrum, f.degree)
    report["map_label"] = f.label
    artifacts.write_json(report, "exponents.json")


def run_masses(f, config, artifacts):
    sample = _sample(f, config, config.sample_count)
    tables = mass_curves_grid(f, sample, config.n_range, config.rho, config.tau, config.nu)
    for (rho, tau, nu), table in sorted(tables.items()):
        name = "rho={:g}_tau={:g}_nu={:g}.csv".format(rho, tau, nu)
        artifacts.write_csv(table, "masses", name, header=dict(map_label=f.label, rho=rho, tau=tau, nu=nu))


def _trace_pair(item, f, config):
    point, orbit = item
    arguments = (f, point, config.max_n, config.ball_radius, config.recurrence_radius)
    return (
        sqrt_d_linearization_test(*arguments, orbit=orbit).to_dict(),
        linearization_test(*arguments, orbit=orbit).to_dict(),
    )


def run_linearize(f, config, artifacts):
    sample = sample_orbits(f, config.trace_points, config.max_n, burn_in=config.burn_in, seed=config.seed)
    traces = greenlab.map_points(list(zip(sample.points, sample.orbits)), _trace_pair, f, config)
    for index, (sqrt_d, inverse) in enumerate(traces):
        artifacts.write_json(
            {"map_label": f.label, "sqrt_d": sqrt_d, "inverse_differential": inverse},
            "traces",
            "point_{:04d}.json".format(index),
        )


def _dimension_report(f, config, spectrum):
    sample = _sample(f, config, config.dimension_count)
    report = local_dimension(sample, config.r_min, config.r_max)
    return with_upper_bound(report, spectrum, f.degree)


def run_dimension(f, config, artifacts):
    spectrum = _spectrum(f, config)
    report = _dimension_report(f, config, spectrum)
    consistency = dimension_consistency(report, spectrum, f.degree)
    payload = report.to_dict()
    payload.update(
        map_label=f.label,
        within_bound=consistency.within_bound,
        maximal_candidate=consistency.maximal_candidate,
        consistent=consistency.consistent,
    )
    artifacts.write_json(payload, "dimension.json")


def run_verdict(f, config, artifacts):
    """Composite diagnostic: 'consistent' with the Lattes characterization only
    if the exponents are minimal, the dimension maximal and V_n(nu) keeps
    its mass; never a proof."""
    d = f.degree
    spectrum = _spectrum(f, config)
    minimality = exponent_minimality_test(spectrum, d)
    bd = briend_duval_check(spectrum, d)

    report = _dimension_report(f, config, spectrum)
    consistency = dimension_consistency(report, spectrum, d)

    rho, tau, nu = _middle(config.rho), _middle(config.tau), _middle(config.nu)
    sample = _sample(f, config, max(config.sample_count, 500))
    table = mass_curves_grid(f, sample, config.n_range, (rho,), (tau,), (nu,))[(rho, tau, nu)]
    last_v_mass = float(table.mass_V.iloc[-1])
    v_mass_decay = last_v_mass < V_DECAY_THRESHOLD

    maximal = consistency.maximal_candidate
    consistent = minimality.minimal and maximal and not v_mass_decay and consistency.consistent

    artifacts.write_json(
        {
            "map_label": f.label,
            "minimality": "pass" if minimality.minimal else "fail",
            "minimality_margin": minimality.margin,
            "bd_margin": bd.bound_margin,
            "narrow_spectrum_margin": bd.narrow_spectrum_margin,
            "dimension_max": "pass" if maximal else "fail",
            "measured_dimension": report.measured_local_dim,
            "dimension_upper_bound": report.upper_bound,
            "dimension_ci95": list(report.ci95),
            "v_mass_decay": "yes" if v_mass_decay else "no",
            "v_mass_last": last_v_mass,
            "v_mass_min": float(table.mass_V.min()),
            "verdict_parameters": {"rho": rho, "tau": tau, "nu": nu},
            "lattes_verdict": "consistent" if consistent else "inconsistent",
        },
        "verdict.json",
    )


def _validate_entry(entry, config):
    f = entry.map
    rng = np.random.default_rng(config.seed)
    checks = {}

    lifts = rng.standard_normal((VALIDATION_POINTS, f.dim + 1)) + 1j * rng.standard_normal(
        (VALIDATION_POINTS, f.dim + 1)
    )
    functional = max(
        abs(green_function(f, lift(f, v)).value - f.degree * green_function(f, v).value) for v in lifts
    )
    checks["functional_equation"] = {"residual": functional, "pass": functional < FUNCTIONAL_EQUATION_TOLERANCE}

    gradient = 0.0
    for x in random_points(rng, VALIDATION_POINTS, f.dim):
        if critical_proximity(f, x) < GRADIENT_MIN_PROXIMITY:
            continue
        exact = chart_differential(f, x)
        approximate = finite_difference_differential(f, x)
        gradient = max(gradient, np.linalg.norm(exact - approximate) / np.linalg.norm(exact))
    checks["gradient"] = {"relative_error": float(gradient), "pass": gradient < GRADIENT_TOLERANCE}

    if has_preimage_solver(f):
        sample = _sample(f, config, VALIDATION_SAMPLE)
        zscores = invariance_zscores(f, sample)
        checks["invariance"] = {"max_zscore": float(np.max(zscores)), "pass": bool(np.all(zscores < 3.0))}

        spectrum = _spectrum(f, config, VALIDATION_ORBITS, VALIDATION_STEPS)
        bd = briend_duval_check(spectrum, f.degree)
        minimality = exponent_minimality_test(spectrum, f.degree)
        checks["briend_duval"] = {"margin": bd.bound_margin, "pass": bd.bound_holds}
        checks["minimality"] = {
            "margin": minimality.margin,
            "minimal": minimality.minimal,
            "pass": minimality.minimal or not entry.expected.lattes,
        }

        maximal = None
        try:
            report = _dimension_report(f, config, spectrum)
        except DomainError as error:
            checks["dimension"] = {"pass": None, "reason": str(error)}
        else:
            maximal = dimension_consistency(report, spectrum, f.degree).maximal_candidate
            checks["dimension"] = {
                "measured": report.measured_local_dim,
                "threshold": 2 * f.dim - MAXIMAL_DIMENSION_SLACK,
                "maximal": maximal,
                "pass": maximal or not entry.expected.lattes,
            }

        if not entry.expected.lattes:
            # a non-Lattes map has to fail at least one Lattes diagnostic
            checks["not_lattes"] = {"pass": (not minimality.minimal) or maximal is False}
    else:
        checks["invariance"] = {"pass": None, "reason": "no preimage solver"}

    oracle = oracle_residual(entry)
    if oracle is not None:
        name, residual, tolerance = oracle
        checks[name] = {"residual": residual, "pass": residual < tolerance}

    return checks


def run_validate_zoo(f, config, artifacts):
    summary = {}
    failures = 0
    for label in ZOO_LABELS:
        entry = zoo_entry(label)
        for path in save_entry(entry, os.path.join(config.output_dir, "zoo")):
            artifacts.written.append(path)
        checks = _validate_entry(entry, config)
        failures += sum(1 for check in checks.values() if check["pass"] is False)
        summary[label] = checks
        logger.info("validated %s", label)

    artifacts.write_json({"entries": summary, "failures": failures}, "validate_zoo.json")
    return EXIT_NUMERIC if failures else EXIT_OK


COMMANDS = {
    "sample": run_sample,
    "exponents": run_exponents,
    "masses": run_masses,
    "linearize": run_linearize,
    "dimension": run_dimension,
    "verdict": run_verdict,
    "validate-zoo": run_validate_zoo,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="greenlab",
        description="Green functions, equilibrium measures and Lattes diagnostics",
    )
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="YAML experiment configuration")
    parser.add_argument("--seed", type=int, help="overrides the configured seed")
    parser.add_argument("--out", help="output directory (overrides output_dir)")
    parser.add_argument("--map", help="zoo label, zoo entry directory or map.json file")
    parser.add_argument("--verbose", type=int, default=1, choices=(0, 1, 2))
    parser.add_argument("--progress-bar", action="store_true", help="progress bars on stderr")
    return parser


def _report(error, artifacts):
    if artifacts is not None:
        artifacts.remove()
    sys.stderr.write(json.dumps(error.to_dict(), sort_keys=True) + "\n")
    return error.exit_code


def main(argv=None):
    args = build_parser().parse_args(argv)
    artifacts = None

    try:
        config = load_config(args.config) if args.config else ExperimentConfig()
        config = config.with_overrides(seed=args.seed, output_dir=args.out, map=args.map)
        config.validate()

        greenlab.initialize(progress_bar=args.progress_bar, verbose=args.verbose)

        artifacts = Artifacts(config)
        f = None if args.subcommand == "validate-zoo" else resolve_map(config.map)
        status = COMMANDS[args.subcommand](f, config, artifacts)

    except GreenLabError as error:
        return _report(error, artifacts)
    except (np.linalg.LinAlgError, FloatingPointError) as error:
        return _report(NumericalError("{}: {}".format(type(error).__name__, error)), artifacts)

    return EXIT_OK if status is None else status


if __name__ == "__main__":
    sys.exit(main())
