"""Command-line interface.

Subcommands: ``fit``, ``haar``, ``study convergence|varsel|sparsity`` and
``partitions enumerate``.  Every option can also be given in a JSON config
file (``--config``) keyed by the option's long name with dashes replaced by
underscores; options on the command line override the file.

Exit codes: 0 success, 2 configuration error, 3 budget exceeded,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .estimator import (
    GreedyOptions,
    RateParameters,
    as_samples,
    exhaustive_fit,
    greedy_fit,
    select_sieve_size,
)
from .geometry import BudgetExceeded, enumerate_partitions
from .haar import estimate_decay_exponent, haar_analyze, mixed_holder_constant, top_k_density
from .harness import (
    STUDY_LOOKAHEAD,
    StudyError,
    run_convergence_study,
    run_sparsity_diagnostic,
    run_variable_selection_study,
)
from .synth import SamplingError, grid_density, resolve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_NUMERICAL = 4

log = logging.getLogger("sievepart")

# values used when neither the command line nor the config file sets an option
DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "output_dir": None,
    "format": "json",
    "verbose": False,
    # fit
    "input": None,
    "header": False,
    "size": None,
    "auto_size": False,
    "A": 1.0,
    "r": 1.0,
    "c1": 0.5,
    "method": "greedy",
    "grid_depth": "off",
    "min_leaf_count": 0,
    "min_gain": 0.0,
    "lookahead": None,
    "budget": 10**6,
    "output": None,
    # haar
    "input_grid": None,
    "density": None,
    "mode": "isotropic",
    "level": None,
    "target": "sqrt_f",
    "top_k": None,
    "fit_beta": "10:1000",
    "alpha": None,
    # studies
    "spec": None,
    "n_grid": "512,1024,2048,4096,8192,16384",
    "replications": 5,
    "n_mc": 100_000,
    "bootstrap": 1000,
    "inner": None,
    "p": None,
    "relevant": None,
    "n": 10_000,
    # partitions
    "max_depth": 30,
}


class ConfigError(ValueError):
    pass


def _add_common(parser):
    g = parser.add_argument_group("global options")
    g.add_argument("--config", help="JSON file with option values; command-line flags win")
    g.add_argument("--seed", type=int, help="base random seed (u64)")
    g.add_argument("--threads", type=int, help="worker processes for studies")
    g.add_argument("--output-dir", help="directory for output files (default: print to stdout)")
    g.add_argument("--format", choices=["json", "csv"], help="output format")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _rate_flags(parser):
    parser.add_argument("--A", type=float, help="approximation constant A (default 1)")
    parser.add_argument("--r", type=float, help="complexity index r (default 1)")
    parser.add_argument("--c1", type=float, help="constant c1 in (0, 1) (default 0.5)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    _add_common(common)

    parser = argparse.ArgumentParser(
        prog="sievepart",
        description="Sieve MLE histograms on binary partitions, Haar sparsity diagnostics and studies.",
        argument_default=argparse.SUPPRESS,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", parents=[common], argument_default=argparse.SUPPRESS,
                         help="fit a histogram to samples from a CSV file")
    fit.add_argument("--input", help="CSV file, one sample per row")
    fit.add_argument("--header", action="store_true", help="skip the first CSV row")
    size = fit.add_mutually_exclusive_group()
    size.add_argument("--size", type=int, help="number of leaves I")
    size.add_argument("--auto-size", action="store_true", help="choose I from n, A, r and c1")
    _rate_flags(fit)
    fit.add_argument("--method", choices=["greedy", "exhaustive"])
    fit.add_argument("--grid-depth", help="cut grid depth G, or 'off' for midpoint cuts")
    fit.add_argument("--min-leaf-count", type=int)
    fit.add_argument("--min-gain", type=float)
    fit.add_argument("--lookahead", type=int, help="greedy lookahead depth (default 1)")
    fit.add_argument("--budget", type=int, help="partition budget for exhaustive search")
    fit.add_argument("--output", help="JSON file for the fitted density")

    haar = sub.add_parser("haar", parents=[common], argument_default=argparse.SUPPRESS,
                          help="Haar spectrum of a gridded or built-in density")
    src = haar.add_mutually_exclusive_group()
    src.add_argument("--input-grid", help=".npy array (or CSV for p <= 2) of cell averages")
    src.add_argument("--density", help="built-in name or JSON density spec")
    haar.add_argument("--mode", choices=["tensor", "isotropic"])
    haar.add_argument("--level", type=int, help="grid level L (with --density)")
    haar.add_argument("--target", choices=["f", "sqrt_f"])
    haar.add_argument("--top-k", type=int, help="also emit the top-K approximation of sqrt(f)")
    haar.add_argument("--fit-beta", help="rank range lo:hi for the power-law fit")
    haar.add_argument("--alpha", type=float, help="mixed-Holder smoothness for C(alpha)")

    study = sub.add_parser("study", help="run an experiment")
    ssub = study.add_subparsers(dest="study", required=True)
    conv = ssub.add_parser("convergence", parents=[common], argument_default=argparse.SUPPRESS,
                           help="Hellinger error against n")
    conv.add_argument("--spec", help="density (built-in name or JSON)")
    conv.add_argument("--n-grid", help="comma-separated ascending sample sizes")
    conv.add_argument("--replications", type=int)
    _rate_flags(conv)
    conv.add_argument("--method", choices=["greedy", "exhaustive"])
    conv.add_argument("--n-mc", type=int, help="Monte Carlo points per error estimate")
    conv.add_argument("--bootstrap", type=int, help="bootstrap resamples for the slope band")
    conv.add_argument("--grid-depth")
    conv.add_argument("--min-leaf-count", type=int)
    conv.add_argument("--lookahead", type=int, help=f"greedy lookahead depth (default {STUDY_LOOKAHEAD})")

    vs = ssub.add_parser("varsel", parents=[common], argument_default=argparse.SUPPRESS,
                         help="share of cuts on relevant coordinates")
    vs.add_argument("--inner", help="density on the relevant coordinates")
    vs.add_argument("--p", type=int, help="ambient dimension")
    vs.add_argument("--relevant", help="comma-separated relevant coordinates")
    vs.add_argument("--n", type=int)
    vs.add_argument("--size", type=int)
    vs.add_argument("--replications", type=int)
    vs.add_argument("--min-gain", type=float)
    vs.add_argument("--lookahead", type=int, help=f"greedy lookahead depth (default {STUDY_LOOKAHEAD})")

    sp = ssub.add_parser("sparsity", parents=[common], argument_default=argparse.SUPPRESS,
                         help="Haar coefficient decay of a reference density")
    sp.add_argument("--spec")
    sp.add_argument("--level", type=int)
    sp.add_argument("--mode", choices=["tensor", "isotropic"])
    sp.add_argument("--target", choices=["f", "sqrt_f"])
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--fit-beta")

    parts = sub.add_parser("partitions", help="partition utilities")
    psub = parts.add_subparsers(dest="action", required=True)
    en = psub.add_parser("enumerate", parents=[common], argument_default=argparse.SUPPRESS,
                         help="list every binary partition of a given size")
    en.add_argument("--p", type=int, help="dimension")
    en.add_argument("--size", type=int, help="number of leaves")
    en.add_argument("--budget", type=int)
    en.add_argument("--max-depth", type=int)
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    given = vars(args).copy()
    opts = dict(DEFAULTS)
    if given.get("config"):
        try:
            data = json.loads(Path(given["config"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, value in data.items():
            key = key.replace("-", "_")
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            opts[key] = value
    opts.update({k: v for k, v in given.items() if k != "config"})
    return opts


def _parse_grid_depth(value):
    if value is None or str(value).lower() == "off":
        return None
    try:
        g = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"--grid-depth must be an integer or 'off', got {value!r}") from None
    if g < 1:
        raise ConfigError("--grid-depth must be >= 1")
    return g


def _parse_range(text):
    try:
        lo, hi = (int(v) for v in str(text).split(":"))
    except ValueError:
        raise ConfigError(f"rank range must look like lo:hi, got {text!r}") from None
    if not 1 <= lo <= hi:
        raise ConfigError("rank range needs 1 <= lo <= hi")
    return lo, hi


def _int_list(value):
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    return [int(v) for v in str(value).split(",") if v.strip()]


def _require(opts, *keys):
    missing = [k for k in keys if opts.get(k) is None]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _rate_params(opts) -> RateParameters:
    try:
        return RateParameters(float(opts["A"]), float(opts["r"]), float(opts["c1"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _emit(text: str, opts, filename: str, explicit=None) -> None:
    if explicit:
        path = Path(explicit)
    elif opts["output_dir"]:
        path = Path(opts["output_dir"]) / filename
    else:
        sys.stdout.write(text)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


def _load_samples(path, header: bool) -> np.ndarray:
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read samples from {path}: {exc}") from exc
    try:
        return as_samples(data)
    except ValueError as exc:
        raise ConfigError(f"invalid samples in {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands


def cmd_fit(opts) -> int:
    _require(opts, "input")
    x = _load_samples(opts["input"], bool(opts["header"]))
    n = x.shape[0]
    if n == 0:
        raise ConfigError("the input file holds no samples")
    if opts["auto_size"]:
        size = select_sieve_size(n, _rate_params(opts))
    else:
        _require(opts, "size")
        size = int(opts["size"])
    if size < 1:
        raise ConfigError("--size must be >= 1")
    method = opts["method"]
    if method == "greedy":
        gopts = GreedyOptions(
            min_gain=float(opts["min_gain"]),
            min_leaf_count=int(opts["min_leaf_count"]),
            grid_depth=_parse_grid_depth(opts["grid_depth"]),
            lookahead=int(opts["lookahead"] or 1),
        )
        result = greedy_fit(x, size, gopts)
    elif method == "exhaustive":
        result = exhaustive_fit(x, size, budget=int(opts["budget"]))
    else:
        raise ConfigError(f"unknown method {method!r}")
    out = result.density.to_dict()
    out.update({
        "score": result.score,
        "n": n,
        "size": size,
        "method": method,
        "cuts": [
            {"region": c.region.to_text(), "dim": c.dim, "position": str(c.position), "gain": c.gain}
            for c in result.trace
        ],
        "version": __version__,
    })
    if opts["format"] == "csv":
        rows = ["leaf,height"] + [f'"{leaf.to_text()}",{float(h)!r}' for leaf, h in
                                  zip(result.partition.leaves, result.density.heights)]
        _emit("\n".join(rows) + "\n", opts, "fit.csv", opts["output"])
    else:
        _emit(json.dumps(out, indent=2) + "\n", opts, "fit.json", opts["output"])
    return EXIT_OK


def _load_grid(path) -> np.ndarray:
    try:
        if str(path).endswith(".npy"):
            grid = np.load(path)
        else:
            grid = np.loadtxt(path, delimiter=",")
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read grid from {path}: {exc}") from exc
    return np.asarray(grid, dtype=float)


def cmd_haar(opts) -> int:
    if opts["input_grid"] is None and opts["density"] is None:
        raise ConfigError("give --input-grid or --density")
    if opts["input_grid"] is not None:
        grid = _load_grid(opts["input_grid"])
        source = {"input_grid": str(opts["input_grid"])}
    else:
        _require(opts, "level")
        try:
            spec = resolve(opts["density"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad density: {exc}") from exc
        grid = grid_density(spec, int(opts["level"]))
        source = {"density": opts["density"], "level": int(opts["level"])}
    if np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise ConfigError("grid values must be finite and nonnegative")
    mode, target = opts["mode"], opts["target"]
    values = np.sqrt(grid) if target == "sqrt_f" else grid
    spectrum = haar_analyze(values, mode=mode, target=target)
    lo, hi = _parse_range(opts["fit_beta"])
    summary = {"config": {**source, "mode": mode, "target": target, "fit_beta": [lo, hi]},
               "version": __version__, "nonzero": len(spectrum), "energy": spectrum.energy()}
    try:
        beta, C, diag = estimate_decay_exponent(spectrum, (lo, hi))
        summary.update({"beta_hat": beta, "C_hat": C, "fit": diag})
    except ValueError as exc:
        summary.update({"beta_hat": None, "C_hat": None, "fit": {"error": str(exc)}})
    if opts["alpha"] is not None:
        tensor = spectrum if (mode == "tensor" and target == "sqrt_f") else \
            haar_analyze(np.sqrt(grid), mode="tensor", target="sqrt_f")
        summary["alpha"] = float(opts["alpha"])
        summary["holder_C_hat"] = mixed_holder_constant(tensor, float(opts["alpha"]))
    if opts["top_k"] is not None:
        f = top_k_density(grid, int(opts["top_k"]), mode=mode)
        summary["top_k"] = {"K": int(opts["top_k"]), "density": f.to_dict()}

    if opts["output_dir"]:
        _emit(spectrum.to_csv(), opts, "haar_spectrum.csv")
        _emit(json.dumps(summary, indent=2) + "\n", opts, "haar.json")
    elif opts["format"] == "csv":
        sys.stdout.write(spectrum.to_csv())
    else:
        sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


def _write_report(report, opts) -> None:
    fmt = opts["format"]
    if opts["output_dir"]:
        # CSV output always comes with the JSON report so the config travels along
        for path in report.write(opts["output_dir"], "both" if fmt == "csv" else "json"):
            log.info("wrote %s", path)
    elif fmt == "csv":
        sys.stdout.write(report.to_csv())
    else:
        sys.stdout.write(report.to_json())


def cmd_study(opts, which: str) -> int:
    if which == "convergence":
        _require(opts, "spec")
        report = run_convergence_study(
            _spec_arg(opts["spec"]),
            _int_list(opts["n_grid"]),
            _rate_params(opts),
            replications=int(opts["replications"]),
            seed=int(opts["seed"]),
            method=opts["method"],
            n_mc=int(opts["n_mc"]),
            threads=int(opts["threads"]),
            bootstrap=int(opts["bootstrap"]),
            grid_depth=_parse_grid_depth(opts["grid_depth"]),
            min_leaf_count=int(opts["min_leaf_count"]),
            lookahead=int(opts["lookahead"] or STUDY_LOOKAHEAD),
        )
    elif which == "varsel":
        _require(opts, "inner", "p", "relevant")
        report = run_variable_selection_study(
            _spec_arg(opts["inner"]),
            int(opts["p"]),
            _int_list(opts["relevant"]),
            n=int(opts["n"]),
            size=int(opts["size"] or 32),
            replications=int(opts["replications"]),
            seed=int(opts["seed"]),
            min_gain=float(opts["min_gain"]),
            lookahead=int(opts["lookahead"] or STUDY_LOOKAHEAD),
        )
    else:
        _require(opts, "spec")
        report = run_sparsity_diagnostic(
            _spec_arg(opts["spec"]),
            level=opts["level"],
            mode=opts["mode"],
            target=opts["target"],
            alpha=opts["alpha"],
            rank_range=_parse_range(opts["fit_beta"]),
        )
    _write_report(report, opts)
    return EXIT_OK


def _spec_arg(value):
    try:
        resolve(value)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad density spec {value!r}: {exc}") from exc
    return value


def cmd_enumerate(opts) -> int:
    _require(opts, "p", "size")
    parts = enumerate_partitions(int(opts["p"]), int(opts["size"]), budget=int(opts["budget"]),
                                 max_depth=int(opts["max_depth"]))
    if opts["format"] == "json":
        text = json.dumps({"p": int(opts["p"]), "size": int(opts["size"]), "count": len(parts),
                           "partitions": [pt.to_text().splitlines() for pt in parts]}, indent=2) + "\n"
        _emit(text, opts, "partitions.json")
    else:
        rows = ["partition,leaf"] + [f'{i},"{leaf}"' for i, pt in enumerate(parts)
                                     for leaf in pt.to_text().splitlines()]
        _emit("\n".join(rows) + "\n", opts, "partitions.csv")
    return EXIT_OK


def _dispatch(args, opts) -> int:
    if args.command == "fit":
        return cmd_fit(opts)
    if args.command == "haar":
        return cmd_haar(opts)
    if args.command == "study":
        return cmd_study(opts, args.study)
    return cmd_enumerate(opts)


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StudyError) and exc.__cause__ is not None:
        return _exit_code(exc.__cause__)
    if isinstance(exc, (BudgetExceeded, MemoryError)):
        return EXIT_BUDGET
    if isinstance(exc, (SamplingError, ArithmeticError, FloatingPointError, np.linalg.LinAlgError)):
        return EXIT_NUMERICAL
    if isinstance(exc, (ConfigError, ValueError, TypeError, KeyError, OSError)):
        return EXIT_CONFIG
    return EXIT_NUMERICAL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        opts = resolve_options(args)
        return _dispatch(args, opts)
    except Exception as exc:  # noqa: BLE001 - mapped to an exit code
        code = _exit_code(exc)
        print(f"sievepart: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
