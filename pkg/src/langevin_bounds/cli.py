"""Command line front end.

Every subcommand reads a JSON config, validates it against a strict
schema, runs the computation and writes sorted-key JSON and plain CSV
into the output directory. Exit codes: 0 success, 1 bound violation,
2 configuration error, 3 numeric precondition failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from itertools import product
from pathlib import Path
from typing import Any, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import BoundViolation, ConsistencyError, PreconditionError
from .kernel import ChainConfig, simulate_coupled
from .lyapunov import certificate_C1, certificate_C2, certificate_C3, verify_drift_mc
from .minorize import xi
from .model import DriftSpec, MixtureSpec, ProjectionSpec, StepMapSpec, classify_kappa, drift_from_dict
from .normal import norm_cdf
from .rates import (
    PsiSpec,
    asymptotic_and_competitor_rates,
    assemble_report,
    eps_inf,
    theorem8_constants,
)

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_PRECONDITION = 0, 1, 2, 3
SUBCOMMANDS = ("rates", "couple", "mixture", "compare", "verify-drift")


# --------------------------------------------------------------------------
# Config schemas
# --------------------------------------------------------------------------


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BuiltinModel(Strict):
    name: Literal["linear", "gaussian-mixture", "double-well"]
    params: dict[str, float] = Field(default_factory=dict)


class ConstantsModel(Strict):
    L: Optional[float] = None
    m: Optional[float] = None
    m_b: Optional[float] = None
    c1: Optional[tuple[float, float]] = None
    c2: Optional[tuple[float, float]] = None
    c3: Optional[tuple[float, float, float, float]] = None


class DriftModel(Strict):
    dim: int = Field(ge=1)
    builtin: Optional[BuiltinModel] = None
    constants: ConstantsModel = Field(default_factory=ConstantsModel)


class StepModel(Strict):
    scheme: Literal["euler", "tamed", "approx"] = "euler"
    gamma: float = Field(gt=0)
    gamma_bar: Optional[float] = None
    cutoff: Optional[int] = None
    alpha: Optional[float] = None


class ProjectionModel(Strict):
    variant: Literal["identity", "ball", "box", "soft_threshold"] = "identity"
    radius: Optional[float] = None
    lo: Optional[list[float]] = None
    hi: Optional[list[float]] = None
    tau: Optional[float] = None


class ProblemModel(Strict):
    drift: DriftModel
    step: StepModel
    projection: ProjectionModel = Field(default_factory=ProjectionModel)

    def build(self) -> tuple[DriftSpec, StepMapSpec, ProjectionSpec]:
        drift = drift_from_dict(self.drift.model_dump(exclude_none=True))
        step = StepMapSpec(**self.step.model_dump(exclude_none=True))
        p = self.projection
        proj = ProjectionSpec(
            p.variant, p.radius, None if p.lo is None else tuple(p.lo),
            None if p.hi is None else tuple(p.hi), p.tau,
        )
        return drift, step, proj


class RatesConfig(Strict):
    problem: ProblemModel
    certificate: Literal["C1", "C2", "C3"] = "C1"
    ell: Optional[int] = Field(default=None, ge=1)
    m3: Optional[float] = None
    p_alpha: list[tuple[int, float]] = Field(default_factory=lambda: [(1, 2.0), (2, 3.0)])


class CoupleConfig(Strict):
    problem: ProblemModel
    x0: list[float]
    y0: list[float]
    n_steps: int = Field(ge=1)
    replicas: int = Field(default=100000, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)


class MixtureConfig(Strict):
    sigma: float = Field(default=2.0, gt=0)
    m: list[float] = Field(default_factory=lambda: [6.0, 10.0])
    gamma: float = Field(default=0.1, gt=0)
    n: int = Field(default=10000, ge=20)
    x0: float = 0.0
    replicas: int = Field(default=10**6, ge=1000)
    bins: int = Field(default=400, ge=10)
    reference: Literal["diffusion", "mixture"] = "diffusion"
    seed: int = Field(default=0, ge=0, lt=2**64)


class CompareConfig(Strict):
    m: list[float]
    m_plus: list[float]
    L: list[float]
    R: list[float]
    mode: Literal["B3", "B4"] = "B3"
    gamma_bar: float = Field(default=0.0, ge=0)


class ValidateModel(Strict):
    x0: list[float]
    y0: list[float]
    n_steps: int = Field(ge=1)
    replicas: int = Field(default=100000, ge=1)
    slack: float = 3.0


class VerifyConfig(Strict):
    problem: ProblemModel
    certificate: Literal["C1", "C2", "C3"] = "C1"
    n_outer: int = Field(default=512, ge=2)
    n_inner: int = Field(default=4096, ge=2)
    m3: Optional[float] = None
    seed: int = Field(default=0, ge=0, lt=2**64)
    validate_bound: Optional[ValidateModel] = None


SCHEMAS = {
    "rates": RatesConfig,
    "couple": CoupleConfig,
    "mixture": MixtureConfig,
    "compare": CompareConfig,
    "verify-drift": VerifyConfig,
}


# --------------------------------------------------------------------------
# Output helpers
# --------------------------------------------------------------------------


def jsonable(obj: Any) -> Any:
    """Plain JSON types; non-finite floats become the strings ``inf``, ``-inf`` and ``nan``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if obj is None or isinstance(obj, str):
        return obj
    if callable(obj):
        return getattr(obj, "__name__", "callable")
    return str(obj)


def dump_json(obj: Any) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n"


def dump_csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def _certificate(kind: str, drift: DriftSpec, gamma_bar: float, m3: float | None):
    if kind == "C1":
        return certificate_C1(drift, gamma_bar)
    if kind == "C2":
        return certificate_C2(drift, gamma_bar)
    return certificate_C3(drift, gamma_bar, m3=m3)


def run_rates(cfg: RatesConfig, args, out: Path) -> int:
    drift, step, _ = cfg.problem.build()
    report = assemble_report(
        drift, float(step.gamma_bar), certificate=cfg.certificate, ell=cfg.ell,
        p_alpha=[tuple(p) for p in cfg.p_alpha], gamma=step.gamma, m3=cfg.m3,
    )
    _write(out, "rates.json", dump_json(report))
    return EXIT_OK


def run_couple(cfg: CoupleConfig, args, out: Path) -> int:
    drift, step, proj = cfg.problem.build()
    replicas = args.replicas or cfg.replicas
    seed = cfg.seed if args.seed is None else args.seed
    chain = ChainConfig(drift, step, proj, n_steps=cfg.n_steps, n_replicas=replicas, seed=seed)
    run = simulate_coupled(chain, cfg.x0, cfg.y0, threads=args.threads)
    dist = float(np.linalg.norm(np.asarray(cfg.x0) - np.asarray(cfg.y0)))
    try:
        profile = classify_kappa(drift, step)
    except PreconditionError:
        profile = None
    rows = []
    for k in range(cfg.n_steps + 1):
        bound = ""
        if profile is not None and k > 0 and proj.variant == "identity":
            v = xi(profile, step.gamma, n=k)
            bound = 1.0 - 2.0 * norm_cdf(-dist / (2.0 * math.sqrt(v))) if dist > 0 else 0.0
        rows.append((k, float(run.fraction[k]), float(run.stderr[k]), bound))
    _write(out, "couple.csv", dump_csv(("k", "non_coalesced_fraction", "stderr", "bound"), rows))
    summary = {"replicas": replicas, "seed": seed, "final_not_coalesced": float(run.fraction[-1]),
               "distance": dist, "kappa_class": None if profile is None else profile.sign_class}
    _write(out, "couple.json", dump_json(summary))
    return EXIT_OK


def run_mixture(cfg: MixtureConfig, args, out: Path) -> int:
    from .empirics import mixture_csv_rows, run_mixture_experiment

    replicas = args.replicas or cfg.replicas
    seed = cfg.seed if args.seed is None else args.seed
    specs = [MixtureSpec(cfg.sigma, m) for m in cfg.m]
    results = run_mixture_experiment(
        specs, gamma=cfg.gamma, n=cfg.n, x0=cfg.x0, replicas=replicas, seed=seed,
        bins=cfg.bins, threads=args.threads, reference=cfg.reference,
    )
    _write(out, "mixture.csv", dump_csv(("m", "n", "tv", "stderr"), mixture_csv_rows(results)))
    _write(out, "mixture.json", dump_json({"replicas": replicas, "seed": seed,
                                           "results": [r.summary() for r in results]}))
    return EXIT_OK


COMPARE_COLUMNS = ("ours", "eberle_majka_tv", "eberle_majka_w1", "majka_mijatovic_szpruch", "eberle", "luo_wang")


def run_compare(cfg: CompareConfig, args, out: Path) -> int:
    rows = []
    for m, mp, L, R in product(cfg.m, cfg.m_plus, cfg.L, cfg.R):
        r = asymptotic_and_competitor_rates(m, mp, L, R, cfg.mode, cfg.gamma_bar)
        loglog = r["log_log_inv"]
        beta = r["beta"]
        bound = r["log_inv_bounds"]
        rows.append((m, mp, L, R, *[loglog[c] for c in COMPARE_COLUMNS], *[beta[c] for c in COMPARE_COLUMNS],
                     bound.get("continuous", "")))
    header = ("m", "m_plus", "L", "R", *[f"loglog_{c}" for c in COMPARE_COLUMNS],
              *[f"beta_{c}" for c in COMPARE_COLUMNS], "ours_log_inv_bound")
    _write(out, "compare.csv", dump_csv(header, rows))
    return EXIT_OK


def run_verify(cfg: VerifyConfig, args, out: Path) -> int:
    from .empirics import validate_bound

    drift, step, proj = cfg.problem.build()
    seed = cfg.seed if args.seed is None else args.seed
    gbar = float(step.gamma_bar)
    cert = _certificate(cfg.certificate, drift, gbar, cfg.m3)
    chain = ChainConfig(drift, step, proj, n_steps=1, n_replicas=1, seed=seed)
    audit = verify_drift_mc(cert, chain, n_outer=cfg.n_outer, n_inner=cfg.n_inner, seed=seed)
    doc: dict[str, Any] = {"audit": {
        "certificate": audit.certificate, "status": audit.status, "worst_margin": audit.worst_margin,
        "stderr": audit.stderr, "n_violations": audit.n_violations, "n_pairs": audit.n_pairs,
        "resolution": audit.resolution, "details": audit.details,
    }}
    code = EXIT_VIOLATION if audit.status == "violation" else EXIT_OK
    if cfg.validate_bound is not None:
        v = cfg.validate_bound
        profile = classify_kappa(drift, step)
        ell = max(1, math.ceil(cert.diameter**2))
        e = eps_inf(PsiSpec("b3", ell, profile, radius=cert.diameter), gbar, cert.diameter)
        report = theorem8_constants(cert, e.value, ell, gbar)
        vchain = ChainConfig(drift, step, proj, n_steps=v.n_steps, n_replicas=args.replicas or v.replicas, seed=seed)
        check = validate_bound(vchain, cert, report, v.x0, v.y0, slack=v.slack, threads=args.threads)
        doc["validate_bound"] = {
            "ok": check.ok, "worst_margin": check.worst_margin, "worst_step": check.worst_step,
            "control_violated": check.control_violated, "control_first_step": check.control_first_step,
            "rates": report.as_dict(),
        }
        rows = list(zip(check.steps.tolist(), check.empirical.tolist(), check.stderr.tolist(), check.bound.tolist()))
        _write(out, "validate.csv", dump_csv(("k", "empirical", "stderr", "bound"), rows))
        if not check.ok:
            code = EXIT_VIOLATION
    _write(out, "verify.json", dump_json(doc))
    return code


RUNNERS = {
    "rates": run_rates,
    "couple": run_couple,
    "mixture": run_mixture,
    "compare": run_compare,
    "verify-drift": run_verify,
}


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="langevin-bounds", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--replicas", type=int, default=None, help="override the replica budget")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
    return parser


def _field_path(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("config error: --seed must be a 64-bit unsigned integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.replicas is not None and args.replicas < 1:
        print("config error: --replicas must be positive", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("config error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        doc = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = SCHEMAS[args.subcommand].model_validate(doc)
    except ValidationError as exc:
        print(f"config error: {_field_path(exc)}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return RUNNERS[args.subcommand](cfg, args, args.out)
    except PreconditionError as exc:
        print(f"precondition error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except BoundViolation as exc:
        print(f"bound violation at step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except ConsistencyError as exc:
        print(f"precondition error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ValueError, TypeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
