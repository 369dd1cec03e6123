"""
kv-plate-lab: command-line entry point.

Subcommands:
    model       show the resolved configuration / export the assembled matrices
    simulate    energy trace of the Cayley scheme           -> trace.csv
    spectrum    eigenvalues of the discrete generator        -> spectrum.csv
    resolvent   resolvent norms along iℝ + envelope          -> sweep.csv
    decay       late-time decay rate per undamped mode       -> decay.csv
    reduction   second-order reduction residuals             -> reduction.json
    carleman    1-D Carleman ratio sweep over h              -> ratio.csv
    weights     2-D weight pair and sub-ellipticity          -> weights.json
    report      one JSON summary of everything present       -> summary.json

Exit codes: 0 success, 1 validation error, 2 numerical failure (a diagnostic
JSON is written next to the outputs).
"""
import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

import services
from carleman_ratio import ManufacturedPair, PhasePair1D, ratio_spread, ratio_sweep, sweep_frame
from carleman_weights import build_weight_pair, certify_subellipticity
from energy_evolution import (
    EnergyTrace,
    InitialData,
    fit_decay,
    is_decay_monotone,
    mode_decay_rates,
    simulate,
)
from lab_errors import LabNumericalError, LabValidationError, ReportInputError
from lab_settings import LabEnvironment, RunConfig, load_config
from phase_functions import GaussianDip
from reduction_check import SmoothForcing, measured_order, reduction_check
from spectral_analysis import (
    ResolventSample,
    SweepResult,
    fit_envelope,
    log_spaced_grid,
    resolvent_sweep,
    spectrum,
)
from transmission_grid import export_matrix

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("model", "simulate", "spectrum", "resolvent", "decay", "reduction", "carleman", "weights", "report")


class UsageError(LabValidationError):
    pass


class LabArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so run() owns the exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def setup_logging(env: LabEnvironment) -> None:
    log_dir = Path(env.log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=getattr(logging, env.log_level, logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_dir / 'plate_lab.log', encoding='utf-8'),
            logging.StreamHandler()
        ]
    )


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> LabArgumentParser:
    parser = LabArgumentParser(prog="kv-plate-lab", description="Damped transmission plate laboratory")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    sub.required = True

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON run configuration (defaults when omitted)")
        p.add_argument("--seed", type=int, help="override the configuration seed")
        p.add_argument("--out", help="output file (default from the output section)")
        p.add_argument("--progress", action="store_true", help="show progress bars")
        return p

    p = command("model", "show the configuration or export matrices")
    p.add_argument("--show", action="store_true", help="print the resolved configuration")
    p.add_argument("--export", metavar="DIR", help="write K.mtx, M_c.mtx, G.mtx, A.mtx")

    p = command("simulate", "energy trace")
    p.add_argument("--T", type=float, help="final time (numerics.T)")
    p.add_argument("--dt", type=float, help="time step (numerics.dt)")
    command("spectrum", "eigenvalues of the generator")

    p = command("resolvent", "resolvent norm sweep")
    p.add_argument("--mu-min", type=float)
    p.add_argument("--mu-max", type=float)
    p.add_argument("--points", type=int)

    p = command("decay", "per-mode decay rates")
    p.add_argument("--modes", type=_int_list)

    p = command("reduction", "second-order reduction check")
    p.add_argument("--mu", type=float)

    p = command("carleman", "1-D Carleman ratio sweep")
    p.add_argument("--h-sweep", type=_float_list)

    p = command("weights", "2-D weight pair and certificates")
    p.add_argument("--hole-x", type=float)
    p.add_argument("--hole-y", type=float)
    p.add_argument("--hole-r", type=float)

    p = command("report", "JSON summary of the outputs")
    p.add_argument("--dir", help="directory holding the outputs (default output.dir)")
    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config)
    data = config.to_dict()
    if args.seed is not None:
        data["seed"] = args.seed
    overrides = {
        ("numerics", "T"): getattr(args, "T", None),
        ("numerics", "dt"): getattr(args, "dt", None),
        ("sweep", "mu_min"): getattr(args, "mu_min", None),
        ("sweep", "mu_max"): getattr(args, "mu_max", None),
        ("sweep", "points"): getattr(args, "points", None),
        ("sweep", "reduction_mu"): getattr(args, "mu", None),
        ("numerics", "modes"): getattr(args, "modes", None),
        ("carleman", "h_sweep"): getattr(args, "h_sweep", None),
        ("weights", "hole_x"): getattr(args, "hole_x", None),
        ("weights", "hole_y"): getattr(args, "hole_y", None),
        ("weights", "hole_r"): getattr(args, "hole_r", None),
    }
    for (section, key), value in overrides.items():
        if value is not None:
            data[section][key] = value
    if getattr(args, "dir", None):
        data["output"]["dir"] = args.dir
    return RunConfig.from_dict(data)


def _output_path(config: RunConfig, args: argparse.Namespace, name: str) -> Path:
    path = Path(args.out) if args.out else config.output.path(name)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, payload: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default), encoding="utf-8")


def _json_default(value: Any) -> Any:
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


# --- subcommands ---

def cmd_model(config: RunConfig, args: argparse.Namespace, env: LabEnvironment) -> None:
    if args.show or not args.export:
        print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    if args.export:
        _, _, gen = services.get_generator(config)
        target = Path(args.export)
        for name, matrix in (("K", gen.lap.K), ("M_c", gen.lap.M), ("G", gen.lap.G), ("A", gen.A)):
            export_matrix(matrix, target / f"{name}.mtx")
        logger.info(f"[OK] matrices exported to {target}")


def cmd_simulate(config: RunConfig, args: argparse.Namespace, env: LabEnvironment) -> None:
    _, _, gen = services.get_generator(config)
    n = config.numerics
    init = InitialData(kind=n.initial_kind, k=n.initial_k, seed=config.seeds()["initial"])
    trace = simulate(gen, init, n.T, n.dt, record_every=n.record_every, progress=args.progress)
    checks = trace.check_invariants()
    path = _output_path(config, args, "trace")
    trace.to_frame().to_csv(path, index=False)
    logger.info(f"[OK] trace written to {path} ({len(trace.t)} rows, monotone={checks['monotone']})")


def cmd_spectrum(config: RunConfig, args: argparse.Namespace, env: LabEnvironment) -> None:
    _, _, gen = services.get_generator(config)
    values = spectrum(gen)
    frame = pd.DataFrame({"index": np.arange(len(values)), "real": values.real,
                          "imag": values.imag, "modulus": np.abs(values)})
    path = _output_path(config, args, "spectrum")
    frame.to_csv(path, index=False)
    logger.info(f"[OK] spectrum written to {path}")


def cmd_resolvent(config: RunConfig, args: argparse.Namespace, env: LabEnvironment) -> None:
    _, _, gen = services.get_generator(config)
    s = config.sweep
    mu_grid = log_spaced_grid(s.mu_min, s.mu_max, s.points)
    seed = config.seeds()["resolvent"]
    if env.executor == "celery":
        from tasks import dispatch_resolvent_sweep
        samples = dispatch_resolvent_sweep(config, mu_grid)
        result = SweepResult(samples=samples, envelope=fit_envelope(samples))
    else:
        result = resolvent_sweep(gen, mu_grid, seed=seed, workers=env.workers, progress=args.progress)
    path = _output_path(config, args, "sweep")
    result.to_frame().to_csv(path, index=False)
    if result.envelope:
        logger.info(f"[OK] sweep written to {path}: C_a={result.envelope.C_a:.6g}, C_b={result.envelope.C_b:.6g}")


def cmd_decay(config: RunConfig, args: argparse.Namespace, env: LabEnvironment) -> None:
    _, _, gen = services.get_generator(config)
    n = config.numerics
    if env.executor == "celery":
        from tasks import dispatch_mode_decay
        results = dispatch_mode_decay(config, n.modes)
    else:
        results = mode_decay_rates(gen, n.modes, n.T, n.dt, workers=env.workers)
    frame = pd.DataFrame([r.__dict__ for r in results])
    path = _output_path(config, args, "decay")
    frame.to_csv(path, index=False)
    verdict = is_decay_monotone([r.rate for r in results])
    logger.info(f"[OK] decay rates written to {path}; frequency-decay monotone: {verdict}")


def cmd_reduction(config: RunConfig, args: argparse.Namespace, env: LabEnvironment) -> None:
    mu = config.sweep.reduction_mu
    forcing = SmoothForcing.random(config.seeds()["forcing"])
    model, grid, gen = services.get_generator(config)
    coarse = reduction_check(gen, model, grid, mu, forcing)

    fine_data = config.to_dict()
    fine_data["numerics"]["n_cells"] = 2 * grid.n_cells
    fine_model, fine_grid, fine_gen = services.get_generator(RunConfig.from_dict(fine_data))
    fine = reduction_check(fine_gen, fine_model, fine_grid, mu, forcing)

    payload = {
        "mu": mu,
        "coarse": coarse.to_dict(),
        "fine": fine.to_dict(),
        "measured_order": measured_order(coarse.consistency_residual, fine.consistency_residual),
        "pde_order": measured_order(coarse.pde_residual, fine.pde_residual),
    }
    path = _output_path(config, args, "reduction")
    _write_json(path, payload)
    logger.info(f"[OK] reduction report written to {path}: order={payload['measured_order']:.3f}")


def cmd_carleman(config: RunConfig, args: argparse.Namespace, env: LabEnvironment) -> None:
    model = config.build_model()
    c = config.carleman
    pair = PhasePair1D(kappa1=c.kappa1, kappa2=c.kappa2, lam=c.lam)
    results = ratio_sweep(model, pair, c.h_sweep, ManufacturedPair(mode=c.mode),
                          quadrature_points=c.quadrature_points, h0=c.h0,
                          ball_radius=c.ball_radius, check_gamma1=c.check_gamma1)
    path = _output_path(config, args, "ratio")
    sweep_frame(results).to_csv(path, index=False)
    logger.info(f"[OK] ratio sweep written to {path}: max/min={ratio_spread(results):.4g}")


def cmd_weights(config: RunConfig, args: argparse.Namespace, env: LabEnvironment) -> None:
    w = config.weights
    dips = None if w.dips is None else [GaussianDip(**dip) for dip in w.dips]
    pair = build_weight_pair(config.build_domain(), seed=config.seeds()["weights"], dips=dips,
                             arc_length=w.arc_length, taper=w.taper, flow_steps=w.flow_steps)
    certificates = {
        str(k): certify_subellipticity(pair, k, n_side=w.n_side, lambda0=w.lambda0, cap=w.lambda_cap)
        for k in (1, 2)
    }
    payload = {**pair.to_dict(), "certificates": {k: c.to_dict() for k, c in certificates.items()}}
    path = _output_path(config, args, "weights")
    _write_json(path, payload)
    logger.info(f"[OK] weights written to {path}")
    for certificate in certificates.values():
        certificate.require()


def cmd_report(config: RunConfig, args: argparse.Namespace, env: LabEnvironment) -> None:
    out = config.output
    paths = {name: out.path(name) for name in
             ("trace", "spectrum", "sweep", "decay", "reduction", "ratio", "weights")}
    summary = report(paths, decay_k=config.numerics.decay_k)
    path = _output_path(config, args, "summary")
    _write_json(path, summary)
    logger.info(f"[OK] summary written to {path}")


COMMANDS = {
    "model": cmd_model,
    "simulate": cmd_simulate,
    "spectrum": cmd_spectrum,
    "resolvent": cmd_resolvent,
    "decay": cmd_decay,
    "reduction": cmd_reduction,
    "carleman": cmd_carleman,
    "weights": cmd_weights,
    "report": cmd_report,
}


# --- report ---

def _read_csv(path: Path, columns: Sequence[str], allow_empty: bool = False) -> Optional[pd.DataFrame]:
    if not path.exists():
        return None
    try:
        frame = pd.read_csv(path)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise ReportInputError(f"{path}: unreadable CSV ({e})")
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ReportInputError(f"{path}: missing columns {missing}")
    if frame.empty and not allow_empty:
        raise ReportInputError(f"{path}: no data rows")
    return frame


def _read_json(path: Path) -> Optional[Dict[str, Any]]:
    if not path.exists():
        return None
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ReportInputError(f"{path}: invalid JSON ({e})")


def _finite(value: float) -> Optional[float]:
    return float(value) if math.isfinite(value) else None


def report(paths: Mapping[str, Path], decay_k: int = 1) -> Dict[str, Any]:
    """
    Summarize whichever outputs exist; a missing file gives a null section.

    Raises:
        ReportInputError: an input exists but is empty or malformed.
    """
    summary: Dict[str, Any] = {}

    trace_frame = _read_csv(Path(paths["trace"]), ["t", "energy", "cumulative_dissipation"]) \
        if "trace" in paths else None
    if trace_frame is None:
        summary["energy"] = None
        summary["decay_fit"] = None
    else:
        trace = EnergyTrace.from_frame(trace_frame)
        e0 = float(trace.energy[0])
        summary["energy"] = {
            "rows": int(len(trace.t)),
            "E0": e0,
            "E_final": float(trace.energy[-1]),
            "monotone": bool(trace.is_monotone()),
            # already relative to E0
            "identity_residual": float(trace.identity_residual.max()),
        }
        try:
            summary["decay_fit"] = fit_decay(trace, decay_k).to_dict()
        except LabValidationError as e:
            logger.warning(f"[WARN] report: decay fit skipped ({e})")
            summary["decay_fit"] = None

    spectrum_frame = _read_csv(Path(paths["spectrum"]), ["real", "imag"]) if "spectrum" in paths else None
    summary["spectrum"] = None if spectrum_frame is None else {
        "count": int(len(spectrum_frame)),
        "max_real": float(spectrum_frame["real"].max()),
        "min_real": float(spectrum_frame["real"].min()),
        "max_abs_imag": float(spectrum_frame["imag"].abs().max()),
    }

    sweep = _read_csv(Path(paths["sweep"]), ["mu", "norm", "iterations", "residual"]) if "sweep" in paths else None
    if sweep is None:
        summary["resolvent"] = None
    else:
        samples = [ResolventSample(mu=float(r.mu), norm=float(r.norm), iterations=int(r.iterations),
                                   residual=float(r.residual)) for r in sweep.itertuples()]
        envelope = fit_envelope(samples)
        summary["resolvent"] = {
            "points": len(samples),
            "singular_points": sum(1 for s in samples if s.is_singular),
            "C_a": envelope.C_a if envelope else None,
            "C_b": envelope.C_b if envelope else None,
            "max_log_norm": _finite(max(s.log_norm for s in samples)),
        }

    decay = _read_csv(Path(paths["decay"]), ["mode", "rate"]) if "decay" in paths else None
    summary["mode_decay"] = None if decay is None else {
        "modes": [int(m) for m in decay["mode"]],
        "rates": [float(r) for r in decay["rate"]],
        "monotone": bool(is_decay_monotone(list(decay["rate"]))),
    }

    ratio = _read_csv(Path(paths["ratio"]), ["h", "ratio"]) if "ratio" in paths else None
    summary["carleman"] = None if ratio is None else {
        "h": [float(h) for h in ratio["h"]],
        "min_ratio": float(ratio["ratio"].min()),
        "max_ratio": float(ratio["ratio"].max()),
        "spread": float(ratio["ratio"].max() / ratio["ratio"].min()) if ratio["ratio"].min() > 0 else None,
    }

    reduction = _read_json(Path(paths["reduction"])) if "reduction" in paths else None
    summary["reduction"] = None if reduction is None else {
        "mu": reduction.get("mu"),
        "measured_order": reduction.get("measured_order"),
        "key_lemma_ratio": (reduction.get("fine") or {}).get("key_lemma_ratio"),
    }

    weights = _read_json(Path(paths["weights"])) if "weights" in paths else None
    summary["weights"] = None if weights is None else {
        "critical_points": len(weights.get("critical_points_psi1", [])),
        "epsilon": weights.get("epsilon"),
        "certificates": weights.get("certificates"),
    }
    return summary


# --- entry point ---

def _write_diagnostic(config: Optional[RunConfig], args: Optional[argparse.Namespace],
                      error: Exception) -> Optional[Path]:
    directory = Path(config.output.dir) if config else Path("results")
    name = config.output.diagnostic if config else "diagnostic.json"
    path = directory / name
    payload = {
        "command": getattr(args, "command", None),
        "error": type(error).__name__,
        "message": str(error),
        "details": getattr(error, "details", {}),
    }
    try:
        _write_json(path, payload)
    except OSError as e:
        logger.error(f"[ERROR] could not write diagnostic file {path}: {e}")
        return None
    return path


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, dispatch, and map failures to exit codes 1 (validation) and 2 (numerical)."""
    config: Optional[RunConfig] = None
    args: Optional[argparse.Namespace] = None
    try:
        env = services.init_services()
        setup_logging(env)
        args = build_parser().parse_args(argv)
        config = _resolve_config(args)
        logger.info("=" * 70)
        logger.info(f"KV-PLATE-LAB {args.command.upper()} (seed={config.seed})")
        logger.info("=" * 70)
        COMMANDS[args.command](config, args, env)
        logger.info("=" * 70)
        logger.info(f"[OK] {args.command} finished")
        logger.info("=" * 70)
        return 0
    except SystemExit as e:
        # --help
        return int(e.code or 0)
    except LabValidationError as e:
        logger.error(f"[ERROR] {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1
    except LabNumericalError as e:
        logger.error(f"[ERROR] numerical failure: {e}", exc_info=True)
        path = _write_diagnostic(config, args, e)
        print(f"numerical failure: {e} (diagnostic: {path})", file=sys.stderr)
        return 2
    except Exception as e:
        logger.error(f"[ERROR] unexpected failure: {e}", exc_info=True)
        path = _write_diagnostic(config, args, e)
        print(f"failure: {e} (diagnostic: {path})", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
