# src/cli/commands.py
"""命令行前端：build / evolve / audit / sweep / oracle / generate / schema。

退出码：0 成功且审计全部通过，1 语义失败（审计未通过、无稳态等），2 输入错误。
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from src import __version__
from src.cli.schema import (
    ExplicitAuditFile,
    ModeRow,
    ModelFile,
    Provenance,
    ReportFile,
    complex_out,
    matrix_out,
)
from src.gds.dynamics import evolve_trajectory, is_hurwitz
from src.gds.model import (
    decoherence_matrix,
    drift_matrix,
    fluctuation_dissipation_check,
    lemma1_check,
    noise_from_matrices,
    require_bona_fide,
)
from src.oracle.fock import OracleConfig, run_oracle
from src.thermal.analysis import heff_commutes, theorem1_audit, thermal_covariance
from src.thermal.qdbc import (
    build_lindblad_vectors,
    build_noise,
    diffusive_noise,
    limit_regimes,
    qome_coefficients,
    random_qdbc_spec,
    verify_congruence,
    verify_eigenoperators,
)
from src.utils.config import Tolerances, load_tolerances
from src.utils.errors import (
    ConfigError,
    CutoffBudgetError,
    GdsError,
    NotBonaFideError,
    NoStationaryStateError,
    NotPositiveDefiniteError,
    NotSymmetricError,
    ShapeError,
)
from src.utils.linalg import max_abs
from src.utils.logger import RunLogger

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT = 2

CSV_VERSION = 1
INPUT_ERRORS = (
    ValidationError,
    ShapeError,
    NotSymmetricError,
    NotPositiveDefiniteError,
    CutoffBudgetError,
    ConfigError,
    FileNotFoundError,
    json.JSONDecodeError,
)


class InputError(GdsError):
    """Command-line usage that passed argparse but is invalid."""


def _positive_float(text: str) -> float:
    value = float(text)
    if not (math.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _read_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def load_model(path) -> ModelFile:
    return ModelFile.model_validate(_read_json(path))


def _new_report(command: str, args: dict, tol: Tolerances, seed: Optional[int] = None) -> ReportFile:
    return ReportFile(
        command=command,
        arguments={k: str(v) for k, v in args.items()},
        provenance=Provenance(tolerances=tol.model_dump(), seed=seed),
    )


def _write_report(report: ReportFile, out: Optional[str], run_log: RunLogger) -> None:
    text = report.model_dump_json(indent=2)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
        run_log.log_output(out)
    else:
        print(text)


def _verdict(report: ReportFile, run_log: RunLogger, name: str, residual: float, tol: float) -> bool:
    v = report.add_verdict(name, residual, tol)
    run_log.log_verdict(name, v.passed, v.residual)
    return v.passed


def _csv_header(kind: str, columns: Sequence[str]) -> str:
    return f"# gds_thermo {__version__} {kind} v{CSV_VERSION}\n" + ",".join(columns)


def _noise_for(model: ModelFile):
    """Noise matrices of the model: explicit vectors, a limiting regime, or the exact QDBC construction."""
    vecs = model.lindblad_array()
    if vecs is not None:
        return decoherence_matrix(vecs, n=model.n, hbar=model.hbar), vecs
    spec = model.qdbc_spec()
    if model.regime == "diffusive":
        return diffusive_noise(spec), np.zeros((0, 2 * model.n))
    if model.regime in ("high", "low"):
        lim = limit_regimes(spec, model.regime)
        return noise_from_matrices(lim.D, lim.C, model.hbar), np.zeros((0, 2 * model.n))
    return build_noise(spec), build_lindblad_vectors(spec).vectors


def _mode_rows(coeffs) -> List[ModeRow]:
    return [
        ModeRow(omega=w, nbar=nb, gamma=g, loss_rate=lo, gain_rate=ga)
        for w, nb, g, lo, ga in zip(coeffs.omega, coeffs.nbar, coeffs.gamma, coeffs.loss_rate, coeffs.gain_rate)
    ]


def cmd_build(args, tol: Tolerances, run_log: RunLogger) -> int:
    model = load_model(args.model)
    run_log.log_model(model)
    spec = model.qdbc_spec()
    noise = build_noise(spec)
    lset = build_lindblad_vectors(spec)
    coeffs = qome_coefficients(spec)

    report = _new_report("build", vars(args), tol)
    audit = theorem1_audit(noise, spec.thermal, tol=tol.audit)
    _verdict(report, run_log, "thermal_commutation", audit.max_residual, audit.tol)
    rebuilt = decoherence_matrix(lset.vectors, hbar=spec.hbar)
    _verdict(report, run_log, "lindblad_reconstruction", max(max_abs(rebuilt.D - noise.D), max_abs(rebuilt.C - noise.C)), 1e-10 * max(1.0, max_abs(noise.D)))
    cong = verify_congruence(noise, spec.thermal)
    _verdict(report, run_log, "congruence", cong.max_defect, tol.audit)
    eig = verify_eigenoperators(lset, spec.thermal)
    _verdict(report, run_log, "eigenoperators", max(eig.max_residual, eig.ratio_defect), max(eig.tol, tol.audit))
    fd = fluctuation_dissipation_check(noise)
    _verdict(report, run_log, "fluctuation_dissipation", max(0.0, -fd.min_eigenvalue), fd.tol)

    report.modes = _mode_rows(coeffs)
    report.residuals.update({"min_eig_D_plus_i_hbar_C": fd.min_eigenvalue, "lemma1_det_C": lemma1_check(noise).det_C})
    report.outputs = {
        "D": matrix_out(noise.D),
        "C": matrix_out(noise.C),
        "lindblad_vectors": complex_out(lset.vectors),
        "V_th": matrix_out(thermal_covariance(spec.thermal).V_th),
    }
    _write_report(report, args.out, run_log)
    return EXIT_OK if report.all_passed else EXIT_FAILED


def _initial_covariance(choice: str, model: ModelFile) -> np.ndarray:
    dim = 2 * model.n
    if choice == "vacuum":
        return 0.5 * np.eye(dim)
    if choice == "thermal":
        return thermal_covariance(model.thermal_spec()).V_th
    V0 = np.asarray(_read_json(choice), dtype=float)
    if V0.shape != (dim, dim):
        raise ShapeError(f"V0 must be {dim}x{dim}, got {V0.shape}")
    try:
        return require_bona_fide(V0, "V0")
    except NotBonaFideError as e:
        raise InputError(str(e)) from e


def cmd_evolve(args, tol: Tolerances, run_log: RunLogger) -> int:
    model = load_model(args.model)
    run_log.log_model(model)
    noise, vecs = _noise_for(model)
    gds = model.gds_spec(vecs)
    A = drift_matrix(gds, noise).A
    ok, abscissa = is_hurwitz(A, tol.hurwitz)
    if not ok and not args.allow_nonstationary:
        raise NoStationaryStateError(abscissa)

    V0 = _initial_covariance(args.v0, model)
    mean0 = np.zeros(2 * model.n) if args.mean0 is None else np.asarray(json.loads(args.mean0), dtype=float)
    times = np.linspace(0.0, args.tmax, args.samples)
    traj = evolve_trajectory(A, gds.xi_prime, noise.D, mean0, V0, times, hbar=model.hbar, dt=args.dt)

    dim = 2 * model.n
    iu = np.triu_indices(dim)
    labels = [f"q{j + 1}" for j in range(model.n)] + [f"p{j + 1}" for j in range(model.n)]
    columns = ["t"] + [f"mean_{x}" for x in labels] + [f"V_{labels[i]}_{labels[j]}" for i, j in zip(*iu)]
    columns.append("min_symplectic_eigenvalue")
    rows = np.column_stack([traj.times, traj.means, traj.covariances[:, iu[0], iu[1]], traj.min_symplectic_eigenvalues()])
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(args.out, rows, delimiter=",", fmt="%.17g", header=_csv_header("trajectory", columns), comments="")
    run_log.log_output(args.out)
    run_log.log_info(f"abscissa {abscissa:.6g}, final min symplectic eigenvalue {rows[-1, -1]:.12g}")
    return EXIT_OK


def cmd_audit(args, tol: Tolerances, run_log: RunLogger) -> int:
    raw = _read_json(args.model)
    report = _new_report("audit", vars(args), tol)
    if "D" in raw:
        explicit = ExplicitAuditFile.model_validate(raw)
        noise = explicit.noise()
        audit = theorem1_audit(noise, np.asarray(explicit.V), tol=tol.audit)
        thermal = None
    else:
        model = ModelFile.model_validate(raw)
        run_log.log_model(model)
        noise, _ = _noise_for(model)
        thermal = model.thermal_spec()
        audit = theorem1_audit(noise, thermal, tol=tol.audit)

    _verdict(report, run_log, "thermal_commutation", audit.max_residual, audit.tol)
    report.residuals.update(
        {
            "comm_JD_JC": audit.comm_D_C,
            "comm_JV_JD": audit.comm_V_D,
            "comm_JV_JC": audit.comm_V_C,
            "lyapunov_form": audit.lyapunov_residual,
            "closed_form": audit.closed_form_residual,
        }
    )
    report.notes.extend(audit.notes)
    for note in audit.notes:
        run_log.log_warning(note)

    if thermal is not None:
        cong = verify_congruence(noise, thermal)
        _verdict(report, run_log, "congruence", cong.max_defect, tol.audit)
        if model.regime in (None, "thermal"):
            lset = model.lindblad_set() or build_lindblad_vectors(model.qdbc_spec())
            eig = verify_eigenoperators(lset, thermal)
            _verdict(report, run_log, "eigenoperators", max(eig.max_residual, eig.ratio_defect), max(eig.tol, tol.audit))
        if model.B_prime is not None:
            passed, norm = heff_commutes(model.B, model.B_prime, tol.audit)
            _verdict(report, run_log, "effective_hamiltonian_commutes", norm, tol.audit * max(1.0, max_abs(model.B)))
    _write_report(report, args.out, run_log)
    return EXIT_OK if report.all_passed else EXIT_FAILED


def _sweep_row(spec, beta: float) -> List[float]:
    point = spec.at_beta(beta)
    k = thermal_covariance(point.thermal).k
    noise = build_noise(point)
    high = limit_regimes(point, "high", warn=False).diagnostics["V_rel_error"]
    low = limit_regimes(point, "low", warn=False).diagnostics["V_error"]
    return [beta, *k, float(np.linalg.norm(noise.D, 2)), float(np.linalg.norm(noise.C, 2)), high, low]


def cmd_sweep(args, tol: Tolerances, run_log: RunLogger) -> int:
    model = load_model(args.model)
    run_log.log_model(model)
    lo, hi = args.beta_range
    if not (0 < lo < hi):
        raise InputError(f"beta range must satisfy 0 < min < max, got {lo}, {hi}")
    betas = np.geomspace(lo, hi, args.points)
    spec = model.qdbc_spec()
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        rows = list(pool.map(lambda b: _sweep_row(spec, float(b)), betas))
    columns = ["beta"] + [f"k_{j + 1}" for j in range(model.n)] + ["norm_D", "norm_C", "high_T_rel_error", "low_T_error"]
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(args.out, np.array(rows), delimiter=",", fmt="%.17g", header=_csv_header("sweep", columns), comments="")
    run_log.log_output(args.out)
    return EXIT_OK


def cmd_oracle(args, tol: Tolerances, run_log: RunLogger) -> int:
    model = load_model(args.model)
    run_log.log_model(model)
    if model.n == 2 and not args.experimental:
        raise InputError("two-mode oracle runs require --experimental")
    config = OracleConfig(N=args.cutoff, T=args.tmax, dt=args.dt, tol=tol.oracle_moment, trace_tol=tol.trace_drift, positivity_tol=tol.positivity)
    spec = model.qdbc_spec()
    result = run_oracle(
        spec,
        config,
        alpha=args.alpha,
        lindblad_set=model.lindblad_set(),
        B_prime=model.B_prime,
        xi_prime=model.xi_prime,
    )
    report = _new_report("oracle", vars(args), tol)
    if result.cutoff_below_rule:
        report.notes.append("cutoff below rule of thumb")
        run_log.log_warning(f"cutoff below rule of thumb (N = {args.cutoff})")
    _verdict(report, run_log, "moment_deviation", result.max_moment_deviation, config.tol)
    _verdict(report, run_log, "gibbs_residual", result.gibbs_residual, tol.gibbs_residual)
    _verdict(report, run_log, "gns_detailed_balance", result.gns_defect, tol.gns_defect)
    report.residuals.update(
        {
            "max_moment_deviation": result.max_moment_deviation,
            "gibbs_residual": result.gibbs_residual,
            "gns_defect": result.gns_defect,
        }
    )
    _write_report(report, args.out, run_log)
    return EXIT_OK if report.all_passed else EXIT_FAILED


def cmd_generate(args, tol: Tolerances, run_log: RunLogger) -> int:
    rng = np.random.default_rng(args.seed)
    spec = random_qdbc_spec(args.modes, rng)
    model = ModelFile(n=spec.n, hbar=spec.hbar, B=matrix_out(spec.thermal.B), beta=spec.beta, gamma=spec.gamma.tolist())
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(model.model_dump_json(indent=2, exclude_none=True), encoding="utf-8")
    run_log.log_info(f"random model with seed {args.seed}")
    run_log.log_output(args.out)
    return EXIT_OK


def cmd_schema(args, tol: Tolerances, run_log: RunLogger) -> int:
    print(json.dumps(ModelFile.model_json_schema(), indent=2))
    return EXIT_OK


COMMANDS = {
    "build": cmd_build,
    "evolve": cmd_evolve,
    "audit": cmd_audit,
    "sweep": cmd_sweep,
    "oracle": cmd_oracle,
    "generate": cmd_generate,
    "schema": cmd_schema,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gds_thermo", description="Gaussian dynamical semigroups: build, evolve and audit thermalization")
    parser.add_argument("--log-dir", default="logs", help="directory for run logs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="QDBC noise matrices, Lindblad vectors and QOME coefficients")
    p.add_argument("model")
    p.add_argument("--out", default=None, help="report JSON (stdout if omitted)")

    p = sub.add_parser("evolve", help="mean and covariance trajectory as CSV")
    p.add_argument("model")
    p.add_argument("--v0", default="vacuum", help="'vacuum', 'thermal' or a JSON file with a 2n x 2n matrix")
    p.add_argument("--mean0", default=None, help="initial mean as a JSON list")
    p.add_argument("--tmax", type=_positive_float, default=60.0)
    p.add_argument("--dt", type=_positive_float, default=1e-3)
    p.add_argument("--samples", type=_positive_int, default=101)
    p.add_argument("--allow-nonstationary", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("audit", help="commutation, congruence and eigenoperator audits")
    p.add_argument("model", help="model JSON or explicit {n, hbar, D, C, V} JSON")
    p.add_argument("--out", default=None)

    p = sub.add_parser("sweep", help="per-beta thermal table with limit residuals")
    p.add_argument("model")
    p.add_argument("--beta-range", nargs=2, type=_positive_float, default=(1e-3, 50.0), metavar=("MIN", "MAX"))
    p.add_argument("--points", type=_positive_int, default=50)
    p.add_argument("--jobs", type=_positive_int, default=4)
    p.add_argument("--out", required=True)

    p = sub.add_parser("oracle", help="compare against the truncated Fock master equation")
    p.add_argument("model")
    p.add_argument("--cutoff", type=_positive_int, default=40)
    p.add_argument("--tmax", type=_positive_float, default=10.0)
    p.add_argument("--dt", type=_positive_float, default=2e-3)
    p.add_argument("--alpha", type=complex, default=1.0, help="coherent amplitude of the initial state")
    p.add_argument("--experimental", action="store_true", help="allow n = 2")
    p.add_argument("--out", default=None)

    p = sub.add_parser("generate", help="write a random QDBC model file")
    p.add_argument("--modes", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    sub.add_parser("schema", help="print the model JSON schema")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    run_log = RunLogger(log_dir=str(Path(args.log_dir) / f"{args.command}_runs"), prefix=args.command)
    try:
        run_log.log_environment()
        run_log.log_command(args.command, vars(args))
        tol = load_tolerances()
        run_log.log_debug(f"tolerances: {tol.model_dump()}")
        return COMMANDS[args.command](args, tol, run_log)
    except INPUT_ERRORS + (InputError,) as e:
        run_log.log_error(f"input error: {e}")
        return EXIT_INPUT
    except (GdsError, ValueError) as e:
        run_log.log_error(str(e), exc_info=True)
        return EXIT_FAILED
    finally:
        run_log.close()


if __name__ == "__main__":
    sys.exit(main())
