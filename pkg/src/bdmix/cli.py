"""Command-line front end.

Subcommands
-----------
stationary   exact stationary law on a truncation window
transient    chi/TV decay trace from an initial law
gap          window-refined spectral gap plus closed-form lower bound
drift        build and verify the regime drift certificate
certify      full Poincare pipeline, validated against the spectral gap
bounds       finite-time statistics bounds against evolved numerics
sweep        rate bounds vs gap oracle over an (n, alpha) grid

Exit codes: 0 success, 2 bad flags or preconditions, 3 a bound failed its
oracle comparison, 4 a numerical procedure did not converge.

Output is CSV (default) or JSON with floats at 17 significant digits, LF
line endings, deterministic for fixed flags.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .bdchain import (
    RegimeSpec,
    StateDistribution,
    build_mmn,
    choose_truncation,
    dirac,
    stationary,
    uniform,
)
from .lyapunov import certify_drift, sub_hw_certificate, super_hw_certificate
from .poincare import (
    canonical_path_constant,
    constant_b_certificate,
    singleton_certificate,
    stitched_certificate,
    sub_hw_poincare,
)
from .regimes import theorem1_rate
from .spectral import ConvergenceError, spectral_gap
from .stats import (
    idle_prob_bound,
    mean_queue_envelope,
    mgf_steady_bound,
    tail_bound,
    tail_threshold,
    variance_bound_check,
)
from .transient import chi, decay_trace, evolve

_TABLE1_NS = (110, 500, 2000)
_TABLE1_ALPHAS = (0.25, 0.5, 0.75, 1.0)
_TAIL_LEVELS = (1.0, 2.0, 4.0)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _emit(rows: list[dict], header: list[str], args) -> None:
    if args.format == "json":
        flags = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
        payload = {
            "rows": rows,
            "meta": {"version": __version__, "seed": args.seed, "flags": flags},
        }
        text = json.dumps(payload, indent=2) + "\n"
    else:
        lines = [",".join(header)]
        lines.extend(",".join(_fmt(row[h]) for h in header) for row in rows)
        text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _build_spec(args) -> RegimeSpec:
    if args.n is None:
        raise ValueError("--n is required")
    if args.alpha is not None and args.lam is not None:
        raise ValueError("--alpha and --lambda are mutually exclusive")
    if args.alpha is not None:
        return RegimeSpec.from_alpha(args.n, args.alpha, args.mu)
    if args.lam is not None:
        return RegimeSpec.from_lambda(args.n, args.lam, args.mu)
    raise ValueError("one of --alpha or --lambda is required")


def _build_chain(args, spec: RegimeSpec):
    q_max = args.qmax if args.qmax is not None else choose_truncation(spec, args.mass_tol)
    return build_mmn(spec, q_max)


def _parse_t_grid(text: str) -> list[float]:
    try:
        lo, hi, step = (float(p) for p in text.split(":"))
    except ValueError:
        raise ValueError(f"--t-grid must be lo:hi:step, got {text!r}") from None
    if step <= 0.0 or hi < lo:
        raise ValueError(f"--t-grid needs step > 0 and hi >= lo, got {text!r}")
    return [float(t) for t in np.arange(lo, hi + 0.5 * step, step)]


def _parse_init(text: str, q_max: int) -> StateDistribution:
    kind, _, rest = text.partition(":")
    if kind == "dirac":
        return dirac(int(rest), q_max)
    if kind == "uniform":
        lo, hi = (int(p) for p in rest.split(","))
        return uniform(lo, hi, q_max)
    raise ValueError(f"--init must be dirac:<q> or uniform:<lo>,<hi>, got {text!r}")


def cmd_stationary(args) -> int:
    spec = _build_spec(args)
    chain = _build_chain(args, spec)
    nu = stationary(chain)
    rows = [
        {"q": q, "prob": float(nu.probs[q]), "log_prob": float(nu.log_probs[q])}
        for q in range(chain.q_max + 1)
    ]
    _emit(rows, ["q", "prob", "log_prob"], args)
    return 0


def cmd_transient(args) -> int:
    spec = _build_spec(args)
    chain = _build_chain(args, spec)
    pi0 = _parse_init(args.init, chain.q_max)
    grid = _parse_t_grid(args.t_grid)
    rows = decay_trace(chain, pi0, grid, tol=args.tol if args.tol is not None else 1e-12)
    _emit(rows, ["t", "chi", "chi_square", "tv", "mass_deficit"], args)
    return 0


def cmd_gap(args) -> int:
    spec = _build_spec(args)
    chain = _build_chain(args, spec)
    res = spectral_gap(chain)
    rows = [
        {
            "n": spec.n,
            "alpha": spec.alpha,
            "lambda": spec.lam,
            "mu": spec.mu,
            "gap": res.gap,
            "beta_hat_lb": res.beta_hat_lb,
            "q_max_used": res.q_max_used,
            "residual": res.residual,
            "converged": res.converged,
        }
    ]
    _emit(
        rows,
        ["n", "alpha", "lambda", "mu", "gap", "beta_hat_lb", "q_max_used", "residual", "converged"],
        args,
    )
    return 0


def _drift_certificate(spec: RegimeSpec):
    if spec.alpha is None:
        raise ValueError("drift certificates need n >= 2")
    if spec.alpha > 0.5:
        return super_hw_certificate(spec)
    return sub_hw_certificate(spec)


def cmd_drift(args) -> int:
    spec = _build_spec(args)
    cert = _drift_certificate(spec)
    chain = _build_chain(args, spec)
    rep = certify_drift(chain, cert, tol=args.tol if args.tol is not None else 1e-9)
    rows = [
        {
            "regime": cert.V.regime_tag,
            "n": spec.n,
            "alpha": spec.alpha,
            "gamma": cert.gamma,
            "K_lo": cert.K[0],
            "K_hi": cert.K[-1],
            "B_max": cert.B_max,
            "slack": rep["slack"],
            "pass": rep["pass"],
        }
    ]
    _emit(
        rows,
        ["regime", "n", "alpha", "gamma", "K_lo", "K_hi", "B_max", "slack", "pass"],
        args,
    )
    return 0 if rep["pass"] else 3


def _poincare_certificate(spec: RegimeSpec):
    if spec.alpha is None:
        gamma = spec.mu * (1.0 - math.sqrt(spec.lam / spec.mu)) ** 2
        return singleton_certificate(gamma)
    if 0.5 < spec.alpha < 1.0 and spec.n >= 110:
        return stitched_certificate(spec)
    if spec.alpha < 0.5:
        return sub_hw_poincare(spec)
    cert = super_hw_certificate(spec)
    chain = build_mmn(spec, q_max=spec.n + 10)
    local = canonical_path_constant(chain, cert.K)
    return constant_b_certificate(cert.gamma, cert.B_max, local.c_local)


def cmd_certify(args) -> int:
    spec = _build_spec(args)
    pc = _poincare_certificate(spec)
    chain = _build_chain(args, spec)
    gap = spectral_gap(chain).gap
    valid = pc.mixing_rate <= gap + 1e-9
    rows = [
        {
            "method": pc.provenance,
            "n": spec.n,
            "alpha": spec.alpha,
            "c_p": pc.c_p,
            "mixing_rate": pc.mixing_rate,
            "gap_oracle": gap,
            "valid": valid,
        }
    ]
    _emit(rows, ["method", "n", "alpha", "c_p", "mixing_rate", "gap_oracle", "valid"], args)
    return 0 if valid else 3


def cmd_bounds(args) -> int:
    spec = _build_spec(args)
    chain = _build_chain(args, spec)
    pi0 = _parse_init(args.init, chain.q_max)
    grid = _parse_t_grid(args.t_grid)
    nu = stationary(chain)
    chi0 = chi(pi0, nu)
    qs = np.arange(chain.q_max + 1, dtype=float)
    nu_mean = float(np.dot(nu.probs, qs))
    rows = []

    def add(t, quantity, bound, numerical, direction, in_range=True):
        valid = numerical <= bound + 1e-12 if direction == "upper" else numerical >= bound - 1e-12
        rows.append(
            {
                "n": spec.n,
                "alpha": spec.alpha,
                "t": t,
                "quantity": quantity,
                "bound": bound,
                "numerical": numerical,
                "direction": direction,
                "valid": valid,
                "in_validity_range": in_range,
            }
        )

    cur, prev_t = pi0, 0.0
    evolve_tol = args.tol if args.tol is not None else 1e-12
    for t in grid:
        cur = evolve(chain, cur, t - prev_t, tol=evolve_tol)
        prev_t = t
        mean_t = float(np.dot(cur.probs, qs))
        add(t, "mean", mean_queue_envelope(spec, t, chi0), abs(mean_t - nu_mean), "upper")
        for x in _TAIL_LEVELS:
            thr = tail_threshold(spec, x)
            num = float(cur.probs[qs > thr].sum()) + cur.tail_mass
            add(t, f"tail_x{x:g}", tail_bound(spec, t, x, chi0), num, "upper")
        if spec.alpha is not None and abs(spec.alpha - 0.5) > 1e-12:
            rep = idle_prob_bound(spec, t, chi0)
            idle_num = float(cur.probs[: spec.n].sum())
            add(t, "idle", rep["value"], idle_num, rep["direction"], rep["in_validity_range"])
    mg = mgf_steady_bound(spec, args.delta, enforce_validity=False)
    add(grid[0], "mgf_steady", mg["bound"], mg["value"], "upper", mg["in_validity_range"])
    vb = variance_bound_check(spec, mass_tol=args.mass_tol)
    add(grid[0], "variance", vb["bound"], vb["variance"], "upper")
    _emit(
        rows,
        ["n", "alpha", "t", "quantity", "bound", "numerical", "direction", "valid", "in_validity_range"],
        args,
    )
    return 0 if all(r["valid"] for r in rows) else 3


def _sweep_cell(n: int, alpha: float, mu: float, mass_tol: float) -> dict:
    spec = RegimeSpec.from_alpha(n, alpha, mu)
    tb = theorem1_rate(spec)
    chain = build_mmn(spec, choose_truncation(spec, mass_tol))
    gap = spectral_gap(chain).gap
    return {
        "n": n,
        "alpha": alpha,
        "regime": tb.regime,
        "bound_rate": tb.rate,
        "constant": tb.constant,
        "gap_oracle": gap,
        "ratio": tb.rate / gap,
        "valid": tb.rate <= gap + 1e-9,
    }


def cmd_sweep(args) -> int:
    if args.table1:
        ns = list(args.ns) if args.ns else list(_TABLE1_NS)
        alphas = list(args.alphas) if args.alphas else list(_TABLE1_ALPHAS)
    else:
        if not args.ns or not args.alphas:
            raise ValueError("provide --table1 or both --ns and --alphas")
        ns, alphas = list(args.ns), list(args.alphas)
    cells = sorted((n, a) for n in ns for a in alphas)
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as ex:
            rows = list(
                ex.map(lambda c: _sweep_cell(c[0], c[1], args.mu, args.mass_tol), cells)
            )
    else:
        rows = [_sweep_cell(n, a, args.mu, args.mass_tol) for n, a in cells]
    _emit(
        rows,
        ["n", "alpha", "regime", "bound_rate", "constant", "gap_oracle", "ratio", "valid"],
        args,
    )
    return 0 if all(r["valid"] for r in rows) else 3


def _float_list(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p]


def _int_list(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=None, help="number of servers")
    p.add_argument("--alpha", type=float, default=None, help="load exponent: lam = mu(n - n^(1-alpha))")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="arrival rate")
    p.add_argument("--mu", type=float, default=1.0, help="per-server service rate")
    p.add_argument("--qmax", type=int, default=None, help="truncation window (default: auto)")
    p.add_argument("--mass-tol", type=float, default=1e-12, help="stationary mass outside the auto window")
    p.add_argument(
        "--tol",
        type=float,
        default=None,
        help="numerical tolerance (default: 1e-12 for evolution, 1e-9 for drift certification)",
    )
    p.add_argument("--t-grid", default="0:10:1", help="time grid lo:hi:step")
    p.add_argument("--init", default="dirac:0", help="initial law: dirac:<q> or uniform:<lo>,<hi>")
    p.add_argument("--delta", type=float, default=0.5, help="MGF bound tilt parameter")
    p.add_argument("--seed", type=int, default=0, help="seed recorded in JSON meta")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for sweeps")


def _make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bdmix", description="mixing-rate certificates for many-server queues"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("stationary", cmd_stationary),
        ("transient", cmd_transient),
        ("gap", cmd_gap),
        ("drift", cmd_drift),
        ("certify", cmd_certify),
        ("bounds", cmd_bounds),
        ("sweep", cmd_sweep),
    ):
        p = sub.add_parser(name)
        _add_common(p)
        if name == "sweep":
            p.add_argument("--alphas", type=_float_list, default=None, help="comma-separated alpha grid")
            p.add_argument("--ns", type=_int_list, default=None, help="comma-separated n grid")
            p.add_argument("--table1", action="store_true", help="default desk-scale grid")
        p.set_defaults(func=fn)
    return parser


def _fail(exc: Exception, code: int) -> int:
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(record), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _make_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConvergenceError as exc:
        return _fail(exc, 4)
    except ValueError as exc:
        return _fail(exc, 2)


if __name__ == "__main__":
    sys.exit(main())
