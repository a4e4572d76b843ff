"""Command-line interface.

``riskderiv <command> [options]``; every command prints one report to
standard output, JSON by default (stable, key-sorted) or a plain table with
``--format text``.

Exit status: 0 on success, 1 on bad input (unknown flag, missing file,
dimension mismatch, invalid value), 2 when a numerical failure is raised or
a result is flagged unreliable (tie point, solver not converged).
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .config import DEFAULT_TOLERANCES
from .continuous import (
    convexity_check,
    es_tail_integral,
    generic_gradient_identity,
    homogeneity_identity,
    tail_gradient_identity,
)
from .discrete import second_derivative_probe
from .estimators import risk_report
from .exceptions import NumericalFailure, RiskDerivError
from .heavy_tail import (
    DEFAULT_LADDER,
    es_var_ratio_ladder,
    hill_estimator,
    second_moment_ratio_ladder,
    tail_correlation_ladder,
)
from .kernels import KernelSpec
from .measures import ExpectedShortfall, ValueAtRisk, expected_shortfall, value_at_risk
from .oracles import EllipticalModel, HeavyTailModel, sample
from .portfolio import MeanRiskProblem, SolverOptions, markowitz_weights, solve_mean_es
from .scenarios import ScenarioMatrix, load_scenarios, save_scenarios

THREADS_ENV = "RISKDERIV_THREADS"
MODELS = ("gaussian", "student_t", "pareto", "iid_pareto", "mvt")


class InputError(Exception):
    """Bad command-line input; reported with exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


# ------------------------------------------------------------------ parsing


def _floats(text: str, what: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",") if v != ""]
    except ValueError:
        raise InputError(f"{what}: cannot parse {text!r} as comma-separated numbers") from None
    if not vals:
        raise InputError(f"{what}: empty list")
    return np.array(vals)


def _matrix(text: str, what: str) -> np.ndarray:
    rows = [_floats(r, what) for r in text.split(";") if r.strip()]
    if len({r.size for r in rows}) != 1:
        raise InputError(f"{what}: rows have different lengths")
    return np.vstack(rows)


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InputError(f"{THREADS_ENV}={raw!r} is not an integer") from None


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="random seed for sampled models (default 0)")
    p.add_argument("--alpha", type=float, default=0.95, help="confidence level in (0,1)")
    p.add_argument("--bandwidth", type=float, default=None,
                   help="kernel bandwidth multiplier (or the bandwidth itself with --bandwidth-rule manual)")
    p.add_argument("--bandwidth-rule", choices=("scale_n_pow_minus_fifth", "manual"),
                   default="scale_n_pow_minus_fifth")
    p.add_argument("--kernel", choices=("gaussian", "epanechnikov"), default="gaussian")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--threads", type=int, default=None, help=f"sampler threads (default ${THREADS_ENV} or 1)")


def _data(p, weights=True):
    p.add_argument("--scenarios", help="scenario file (CSV or JSON)")
    p.add_argument("--prob-column", action="store_true",
                   help="last CSV column holds probabilities (needed when the file has no header)")
    p.add_argument("--model", choices=MODELS, help="sample scenarios from a model instead of a file")
    p.add_argument("--n", type=int, default=100000, help="sample size for --model")
    p.add_argument("--d", type=int, default=2, help="number of assets for --model")
    p.add_argument("--mu", help="model means, comma-separated")
    p.add_argument("--cov", help="model covariance, rows separated by ';'")
    p.add_argument("--nu", type=float, default=6.0, help="Student-t degrees of freedom")
    p.add_argument("--kappa", type=float, default=3.0, help="tail index for Pareto / multivariate t models")
    p.add_argument("--scales", help="heavy-tail scales, comma-separated")
    p.add_argument("--corr", type=float, default=0.0, help="multivariate t base correlation")
    if weights:
        p.add_argument("--weights", help="portfolio weights, comma-separated (default all ones)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="riskderiv", description="Risk measures and their derivatives on portfolio losses.")
    parser.add_argument("--version", action="version", version=f"riskderiv {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("risk", help="VaR and ES of the portfolio loss")
    _common(p), _data(p)

    p = sub.add_parser("grad", help="gradient of VaR or ES")
    _common(p), _data(p)
    p.add_argument("--measure", choices=("var", "es"), default="es")
    p.add_argument("--mode", choices=("discrete", "kernel"), default="discrete")

    p = sub.add_parser("hessian", help="ES Hessian (kernel) or finite-difference probe (discrete)")
    _common(p), _data(p)
    p.add_argument("--mode", choices=("kernel", "discrete"), default="kernel")
    p.add_argument("--step", type=float, default=1e-4, help="finite-difference step for --mode discrete")

    p = sub.add_parser("allocate", help="Euler allocation x_i * d rho / d x_i")
    _common(p), _data(p)
    p.add_argument("--measure", choices=("var", "es"), default="es")
    p.add_argument("--mode", choices=("discrete", "kernel"), default="discrete")

    p = sub.add_parser("convexity", help="PSD check of the assembled Hessian representation")
    _common(p), _data(p)
    p.add_argument("--measure", choices=("var", "es"), default="es")
    p.add_argument("--t", type=float, default=0.0, help="level of H(x) = L(x) - rho(x)")

    p = sub.add_parser("identity", help="residuals of the gradient identities")
    _common(p), _data(p)
    p.add_argument("--measure", choices=("var", "es"), default="es")
    p.add_argument("--which", choices=("all", "generic", "tail", "homogeneity", "es-tail"), default="all")
    p.add_argument("--t", type=float, default=0.0, help="level t for the generic and homogeneity identities")
    p.add_argument("--fd-step", type=float, default=None, help="finite-difference step (default 1e-3(1+|x_i|))")

    p = sub.add_parser("tail", help="tail index and limit-ratio ladders")
    _common(p), _data(p)
    p.add_argument("--ratio", choices=("es-var", "second-moment", "correlation", "hill"), default="es-var")
    p.add_argument("--alphas", help=f"comma-separated ladder (default {','.join(map(str, DEFAULT_LADDER))})")
    p.add_argument("--k-order", type=int, default=None, help="Hill order statistics (default floor(n^0.6))")
    p.add_argument("--tol", type=float, default=None, help="relative tolerance for the last ladder point")

    p = sub.add_parser("optimize", help="minimum-ES portfolio with mean and budget constraints")
    _common(p), _data(p, weights=False)
    p.add_argument("--target", type=float, required=True, help="required portfolio mean loss x'mu")
    p.add_argument("--path", choices=("analytic", "sample"), default=None,
                   help="analytic needs a gaussian/student_t model; default analytic for those, else sample")
    p.add_argument("--gtol", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=10000)

    p = sub.add_parser("sample", help="draw scenarios from a model")
    _common(p), _data(p, weights=False)
    p.add_argument("--out", help="write the sample to this file (.csv or .json)")
    return parser


# ----------------------------------------------------------------- helpers


def _kernel(a) -> KernelSpec:
    try:
        return KernelSpec(a.bandwidth, a.kernel, a.bandwidth_rule)
    except ValueError as exc:
        raise InputError(f"--bandwidth: {exc}") from None


def _model(a):
    d = a.d
    if a.model in ("gaussian", "student_t"):
        mu = np.zeros(d) if a.mu is None else _floats(a.mu, "--mu")
        d = mu.size
        cov = np.eye(d) if a.cov is None else _matrix(a.cov, "--cov")
        if cov.shape != (d, d):
            raise InputError(f"--cov: expected a {d}x{d} matrix, got {cov.shape[0]}x{cov.shape[1]}")
        return EllipticalModel(mu, cov, a.model, a.nu if a.model == "student_t" else None)
    scales = np.ones(d) if a.scales is None else _floats(a.scales, "--scales")
    kind = {"pareto": "comonotonic_pareto", "iid_pareto": "iid_pareto", "mvt": "multivariate_student_t"}[a.model]
    return HeavyTailModel(kind, a.kappa, scales, a.corr)


def _scenarios(a, threads):
    if a.scenarios is not None:
        if a.model is not None:
            raise InputError("give either --scenarios or --model, not both")
        if not os.path.exists(a.scenarios):
            raise InputError(f"--scenarios: file not found: {a.scenarios}")
        try:
            return load_scenarios(a.scenarios, prob_column=True if a.prob_column else None), None
        except (ValueError, RiskDerivError) as exc:
            raise InputError(f"--scenarios {a.scenarios}: {exc}") from None
    if a.model is None:
        raise InputError("one of --scenarios or --model is required")
    model = _model(a)
    return ScenarioMatrix(sample(model, a.n, a.seed, threads)), model


def _weights(a, d):
    if getattr(a, "weights", None) is None:
        return np.ones(d)
    w = _floats(a.weights, "--weights")
    if w.size != d:
        raise InputError(f"--weights: got {w.size} weights for {d} assets")
    return w


def _measure(name, alpha):
    return ValueAtRisk(alpha) if name == "var" else ExpectedShortfall(alpha)


def _meta(a, S, threads, **extra):
    meta = {
        "command": a.command,
        "version": __version__,
        "seed": a.seed,
        "alpha": a.alpha,
        "n": None if S is None else S.n,
        "d": None if S is None else S.d,
        "source": a.scenarios if getattr(a, "scenarios", None) else getattr(a, "model", None),
        "kernel": {"kernel": a.kernel, "bandwidth": a.bandwidth, "rule": a.bandwidth_rule},
        "tolerances": DEFAULT_TOLERANCES.as_dict(),
        "threads": threads,
    }
    meta.update(extra)
    return meta


def _bandwidth(k, S, w):
    return k.resolve(S.losses @ w, None if S.is_uniform else S.probs)


# ---------------------------------------------------------------- commands


def cmd_risk(a, threads):
    S, _ = _scenarios(a, threads)
    w = _weights(a, S.d)
    return {"var": value_at_risk(S, w, a.alpha), "es": expected_shortfall(S, w, a.alpha), "x": w.tolist(),
            "meta": _meta(a, S, threads)}, 0


def cmd_grad(a, threads):
    S, _ = _scenarios(a, threads)
    w = _weights(a, S.d)
    k = _kernel(a)
    r = risk_report(S, w, a.alpha, a.measure, a.mode, k)
    bw = _bandwidth(k, S, w) if a.mode == "kernel" else None
    return {"measure": a.measure, "mode": a.mode, "value": r.value, "gradient": r.gradient.tolist(),
            "x": w.tolist(), "meta": _meta(a, S, threads, bandwidth=bw)}, 0


def cmd_allocate(a, threads):
    S, _ = _scenarios(a, threads)
    w = _weights(a, S.d)
    k = _kernel(a)
    r = risk_report(S, w, a.alpha, a.measure, a.mode, k)
    bw = _bandwidth(k, S, w) if a.mode == "kernel" else None
    return {"measure": a.measure, "mode": a.mode, "value": r.value, "components": r.allocation.tolist(),
            "total": float(r.allocation.sum()), "euler_gap": r.euler_gap, "x": w.tolist(),
            "meta": _meta(a, S, threads, bandwidth=bw)}, 0


def cmd_hessian(a, threads):
    S, _ = _scenarios(a, threads)
    w = _weights(a, S.d)
    if a.mode == "discrete":
        probe = second_derivative_probe(S, w, a.alpha, a.step)
        return {"mode": "discrete", "var_hessian": probe.var_hessian.tolist(),
                "es_hessian": probe.es_hessian.tolist(), "max_abs": probe.max_abs, "tie_point": probe.tie_point,
                "reliable": probe.reliable, "meta": _meta(a, S, threads, step=a.step)}, (0 if probe.reliable else 2)
    k = _kernel(a)
    r = risk_report(S, w, a.alpha, "es", "kernel", k)
    eig = np.linalg.eigvalsh(r.hessian)
    return {"mode": "kernel", "es_hessian": r.hessian.tolist(), "eigenvalues": eig.tolist(),
            "meta": _meta(a, S, threads, bandwidth=_bandwidth(k, S, w))}, 0


def cmd_convexity(a, threads):
    S, _ = _scenarios(a, threads)
    w = _weights(a, S.d)
    k = _kernel(a)
    rep = convexity_check(S, w, _measure(a.measure, a.alpha), a.t, k)
    out = rep.to_dict()
    out["meta"] = _meta(a, S, threads, bandwidth=rep.components["bandwidth"])
    return out, 0


def cmd_identity(a, threads):
    S, _ = _scenarios(a, threads)
    w = _weights(a, S.d)
    k = _kernel(a)
    m = _measure(a.measure, a.alpha)
    out = {}
    which = a.which
    if which in ("all", "generic"):
        out["generic"] = generic_gradient_identity(S, w, m, a.t, k, a.fd_step).to_dict()
    if which in ("all", "tail"):
        out["tail"] = tail_gradient_identity(S, w, m, a.t, a.fd_step).to_dict()
    if which in ("all", "homogeneity"):
        out["homogeneity"] = homogeneity_identity(S, w, m, a.t, k, a.fd_step).to_dict()
    if which in ("all", "es-tail"):
        r = es_tail_integral(S, w, a.alpha, fd_step=a.fd_step)
        out["es_tail"] = r.to_dict()
        out["es_tail"]["integral_term_relative"] = float(
            np.linalg.norm(r.terms["integral_term"]) / np.linalg.norm(r.gradient))
    out["measure"] = a.measure
    out["meta"] = _meta(a, S, threads, bandwidth=_bandwidth(k, S, w), t=a.t, fd_step=a.fd_step)
    return out, 0


def cmd_tail(a, threads):
    alphas = DEFAULT_LADDER if a.alphas is None else tuple(_floats(a.alphas, "--alphas"))
    k = _kernel(a)
    S = None
    if a.scenarios is not None:
        S, _ = _scenarios(a, threads)
        source, d = S, S.d
    elif a.model is not None:
        source = _model(a)
        d = source.d
    else:
        raise InputError("one of --scenarios or --model is required")
    w = _weights(a, d)
    n = a.n
    if a.ratio == "hill":
        if S is None:
            S = ScenarioMatrix(sample(source, n, a.seed, threads))
        est = hill_estimator(S.losses @ w, a.k_order)
        return {"hill": est.to_dict(), "x": w.tolist(), "meta": _meta(a, S, threads)}, 0
    tol = {}
    if a.tol is not None:
        tol = {"tol": a.tol}
    if a.ratio == "es-var":
        lad = es_var_ratio_ladder(source, w, alphas, n=n, seed=a.seed, k=k, n_jobs=threads, **tol)
    elif a.ratio == "second-moment":
        if not isinstance(source, HeavyTailModel):
            raise InputError("--ratio second-moment needs a heavy-tail --model (pareto, iid_pareto, mvt)")
        lad = second_moment_ratio_ladder(source, w, alphas, n=n, seed=a.seed, k=k, n_jobs=threads, **tol)
    else:
        lad = tail_correlation_ladder(source, w, alphas, n=n, seed=a.seed, n_jobs=threads, **tol)
    out = {"ladder": lad.to_dict(), "x": w.tolist()}
    out["meta"] = _meta(a, S, threads, n_model=n if S is None else None)
    return out, 0


def cmd_optimize(a, threads):
    path = a.path
    model = None
    if a.model in ("gaussian", "student_t") and path != "sample":
        model = _model(a)
        path = "analytic"
    elif path == "analytic":
        raise InputError("--path analytic needs --model gaussian or --model student_t")
    S = None
    if path == "analytic":
        source = model
        d = model.d
        mu = model.mu
    else:
        S, model = _scenarios(a, threads)
        source = S
        d = S.d
        if isinstance(model, EllipticalModel):
            mu = model.mu
        elif a.mu is not None:
            mu = _floats(a.mu, "--mu")
        else:
            mu = S.mean()
    if mu.size != d:
        raise InputError(f"--mu: got {mu.size} values for {d} assets")
    problem = MeanRiskProblem(mu, a.target)
    res = solve_mean_es(problem, source, a.alpha, SolverOptions(gtol=a.gtol, max_iter=a.max_iter))
    out = res.to_dict()
    if isinstance(model, EllipticalModel):
        out["markowitz"] = markowitz_weights(problem, model.sigma).tolist()
    out["mu"] = mu.tolist()
    out["target"] = a.target
    out["meta"] = _meta(a, S, threads)
    return out, (0 if res.converged else 2)


def cmd_sample(a, threads):
    if a.model is None:
        raise InputError("--model is required")
    S, _ = _scenarios(a, threads)
    if a.out:
        save_scenarios(S, a.out)
    return {"n": S.n, "d": S.d, "mean": S.mean().tolist(), "out": a.out,
            "head": S.losses[:5].tolist(), "meta": _meta(a, S, threads)}, 0


COMMANDS = {
    "risk": cmd_risk,
    "grad": cmd_grad,
    "hessian": cmd_hessian,
    "allocate": cmd_allocate,
    "convexity": cmd_convexity,
    "identity": cmd_identity,
    "tail": cmd_tail,
    "optimize": cmd_optimize,
    "sample": cmd_sample,
}


# ------------------------------------------------------------------ output


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _text(obj, prefix="") -> list[str]:
    lines = []
    for key in sorted(obj):
        val = obj[key]
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            lines.extend(_text(val, name + "."))
        elif isinstance(val, list) and val and isinstance(val[0], list):
            lines.append(f"{name}:")
            for row in val:
                lines.append("    " + "  ".join(f"{v:>12.6g}" if isinstance(v, float) else f"{v!s:>12}" for v in row))
        elif isinstance(val, list):
            lines.append(f"{name:<32} " + "  ".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in val))
        elif isinstance(val, float):
            lines.append(f"{name:<32} {val:.10g}")
        else:
            lines.append(f"{name:<32} {val}")
    return lines


def render(report: dict, fmt: str) -> str:
    report = _clean(report)
    if fmt == "json":
        return json.dumps(report, sort_keys=True, allow_nan=False)
    return "\n".join(_text(report))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        if a.command is None:
            parser.print_help(sys.stderr)
            return 1
        threads = a.threads if a.threads is not None else _default_threads()
        if threads < 1:
            raise InputError("--threads must be >= 1")
        report, code = COMMANDS[a.command](a, threads)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RiskDerivError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(render(report, a.format))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
