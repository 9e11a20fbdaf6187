"""Command-line front end.

Every subcommand prints one JSON envelope on stdout::

    {"command": ..., "config": ..., "result": ..., "runtime_ms": ...}

Exit status is 0 on success, 2 when the configuration is invalid (the
envelope carries an ``errors`` list) and 3 on numeric failures.
Stochastic commands require ``--seed``; work is split into fixed-size
seeded blocks, so output does not depend on ``--threads``.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .conditional_law import RegimeConfig, choose_regime, g_k_log_density_paths, sample_g_k_paths
from .distributions import load_family, validate_family
from .edgeworth import edgeworth_coefficients, edgeworth_density
from .errors import ConfigError, NonFiniteLogDensity, TiltcondError
from .formats import json_dumps, write_csv, write_paths_csv, write_paths_tcnd
from .importance_sampling import build_gbar, is_weights, naive_hits, weights_report
from .oracle import (
    ConditionalOracle,
    gaussian_conditional_log_density,
    standardized_sum_density,
    tv_distance,
    tv_from_log_ratios,
)
from .parallel import block_rng, run_blocks
from .tilting import aggregate_moments, mean_tilt_function, solve_mean_tilt

__all__ = ["main", "RunConfig", "COMMANDS"]

REQUIRED = object()


# ---------------------------------------------------------------------------
# parameter schema
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Param:
    name: str
    kind: str  # str | int | float | bool | range_i | range_f | grid | floats
    default: Any = REQUIRED
    choices: tuple | None = None
    help: str = ""

    @property
    def flag(self) -> str:
        return "--" + self.name.replace("_", "-")


def _split(value, n_parts: tuple[int, ...], name: str) -> list[str]:
    if isinstance(value, str):
        parts = value.split(":")
    elif isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        raise ValueError(f"{name}: expected 'a:b' or a list")
    if len(parts) not in n_parts:
        raise ValueError(f"{name}: expected {' or '.join(map(str, n_parts))} ':'-separated values")
    return parts


def _as_int(v) -> int:
    if isinstance(v, bool):
        raise ValueError("expected an integer")
    if isinstance(v, float):
        if not v.is_integer():
            raise ValueError(f"expected an integer, got {v}")
        return int(v)
    return int(v)


def _as_float(v) -> float:
    if isinstance(v, bool):
        raise ValueError("expected a number")
    return float(v)


def _coerce(p: Param, v):
    if p.kind == "str":
        if not isinstance(v, str):
            raise ValueError("expected a string")
        out = v
    elif p.kind == "int":
        out = _as_int(v)
    elif p.kind == "float":
        out = _as_float(v)
    elif p.kind == "bool":
        if isinstance(v, str):
            if v.lower() not in ("true", "false", "1", "0"):
                raise ValueError("expected true/false")
            out = v.lower() in ("true", "1")
        else:
            out = bool(v)
    elif p.kind == "range_i":
        out = [_as_int(x) for x in _split(v, (2,), p.name)]
    elif p.kind == "range_f":
        out = [_as_float(x) for x in _split(v, (2,), p.name)]
    elif p.kind == "grid":
        out = [_as_float(x) for x in _split(v, (3,), p.name)]
    elif p.kind == "floats":
        items = v.split(",") if isinstance(v, str) else list(v)
        out = [_as_float(x) for x in items]
    else:  # pragma: no cover - schema typo
        raise ValueError(f"unknown kind {p.kind}")
    if p.choices is not None and out not in p.choices:
        raise ValueError(f"must be one of {', '.join(map(str, p.choices))}")
    return out


FAMILY = Param("family", "str", help="family config JSON")
N = Param("n", "int", help="number of summands")
A = Param("a", "float", help="conditioning level: S_{1,n} = n a")
K = Param("k", "int", help="prefix length")
REGIME = [
    Param("regime", "str", "auto", ("auto", "small", "large", "small_k", "large_k"), "approximation regime"),
    Param("rho", "float", 0.3, help="small-k exponent"),
    Param("tau", "float", 6.5, help="large-k log exponent"),
]
SEED = Param("seed", "int", help="master seed (mandatory)")

SCHEMAS: dict[str, list[Param]] = {
    "validate": [
        FAMILY,
        Param("compact", "range_f", help="theta interval lo:hi"),
        Param("grid_size", "int", 21, help="theta grid points"),
        Param("variance_floor", "float", 1e-6, help="variance lower bound"),
    ],
    "solve-tilt": [
        FAMILY,
        Param("range", "range_i", help="index range p:q"),
        Param("target", "float", help="target mean"),
        Param("warm_start", "float", 0.0, help="initial theta"),
    ],
    "edgeworth": [
        FAMILY,
        Param("n", "int", None, help="use indices 1..n"),
        Param("range", "range_i", None, help="index range p:q (overrides --n)"),
        Param("theta", "float", 0.0, help="tilt applied to every component"),
        Param("order", "int", 3, (3, 4, 5), "expansion order"),
        Param("grid", "grid", [-6.0, 6.0, 0.01], help="x grid lo:hi:step"),
        Param("out", "str", None, help="CSV output path"),
    ],
    "gk-density": [FAMILY, N, A, K, *REGIME,
                   Param("y", "floats", help="comma-separated y_1..y_k"),
                   Param("oracle", "bool", False, help="also evaluate the exact conditional density")],
    "gk-sample": [FAMILY, N, A, K, *REGIME,
                  Param("paths", "int", 1000, help="number of paths"),
                  SEED,
                  Param("out", "str", None, help="output path"),
                  Param("format", "str", "csv", ("csv", "tcnd"), "output format")],
    "tv": [FAMILY, N, A, K, *REGIME,
           Param("samples", "int", 100000, help="Monte Carlo sample size"),
           SEED,
           Param("method", "str", "auto", ("auto", "grid", "monte_carlo"), "TV estimator"),
           Param("oracle", "str", "auto", ("auto", "gaussian", "grid"), "exact-law route")],
    "is-run": [FAMILY, N, A, K, *REGIME,
               Param("samples", "int", 10000, help="proposal draws per replication"),
               SEED,
               Param("replications", "int", 1, help="independent replications"),
               Param("naive", "bool", True, help="also run the naive Monte Carlo baseline")],
}

STOCHASTIC = {"gk-sample", "tv", "is-run"}


@dataclass(frozen=True)
class RunConfig:
    """Validated parameters of one subcommand invocation."""

    command: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"command": self.command, **self.params}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        command = d.pop("command", None)
        if command not in SCHEMAS:
            raise ConfigError(f"unknown command {command!r}",
                              [{"field": "command", "message": f"must be one of {', '.join(SCHEMAS)}"}])
        schema = SCHEMAS[command]
        names = {p.name for p in schema}
        errors = [{"field": key, "message": "unknown parameter"} for key in d if key not in names]
        params = {}
        for p in schema:
            raw = d.get(p.name)
            if raw is None:
                if p.default is REQUIRED:
                    errors.append({"field": p.name, "message": f"{p.flag} is required"})
                    continue
                params[p.name] = p.default
                continue
            try:
                params[p.name] = _coerce(p, raw)
            except (TypeError, ValueError) as exc:
                errors.append({"field": p.name, "message": str(exc)})
        if not errors:
            errors = _check_ranges(command, params)
        if errors:
            raise ConfigError(f"invalid {command} configuration", errors)
        return cls(command, params)


def _check_ranges(command: str, p: dict) -> list[dict]:
    errs = []

    def need(cond, name, msg):
        if not cond:
            errs.append({"field": name, "message": msg})

    if "n" in p and p["n"] is not None:
        need(p["n"] >= 1, "n", "must be >= 1")
    if "k" in p:
        # is-run accepts k = 0: the single-stage tilted proposal
        zero_ok = command == "is-run" and p["k"] == 0
        need(zero_ok or 1 <= p["k"] <= p["n"] - 2, "k", "must satisfy 1 <= k <= n-2")
    if "rho" in p:
        need(0 < p["rho"] < 0.5, "rho", "must lie in (0, 1/2)")
        need(p["tau"] > 6, "tau", "must exceed 6")
    for name in ("paths", "samples", "replications", "grid_size"):
        if name in p:
            need(p[name] >= 1, name, "must be >= 1")
    if "seed" in p:
        need(p["seed"] >= 0, "seed", "must be non-negative")
    if "range" in p and p["range"] is not None:
        need(1 <= p["range"][0] <= p["range"][1], "range", "need 1 <= p <= q")
    if command == "edgeworth":
        need(p["n"] is not None or p["range"] is not None, "n", "give --n or --range")
        lo, hi, step = p["grid"]
        need(step > 0 and hi >= lo, "grid", "need lo <= hi and step > 0")
    if command == "validate":
        need(p["compact"][0] <= p["compact"][1], "compact", "need lo <= hi")
    if command == "gk-density":
        need(len(p["y"]) == p["k"], "y", f"need exactly k={p['k']} values")
    return errs


# ---------------------------------------------------------------------------
# handlers
# ---------------------------------------------------------------------------

def _regime(p: dict) -> RegimeConfig:
    return RegimeConfig(mode=p["regime"], rho=p["rho"], tau=p["tau"])


def _regime_info(p: dict) -> dict:
    cfg = _regime(p)
    if p["k"] < 1:
        return {"regime": "none", "in_theory": True}
    choice = choose_regime(p["n"], p["k"], cfg)
    return {"regime": choice.regime, "in_theory": choice.in_theory}


def _family(p: dict, n: int | None = None):
    fam = load_family(p["family"])
    if n is not None and n > len(fam):
        raise ConfigError(f"family has {len(fam)} components, need n={n}",
                          [{"field": "n", "message": f"family has only {len(fam)} components"}])
    return fam


def cmd_validate(p: dict, threads: int) -> dict:
    fam = _family(p)
    return validate_family(fam, tuple(p["compact"]), p["grid_size"], p["variance_floor"]).to_dict()


def cmd_solve_tilt(p: dict, threads: int) -> dict:
    fam = _family(p)
    rng_ = tuple(p["range"])
    sol = solve_mean_tilt(fam, rng_, p["target"], warm_start=p["warm_start"])
    mbar, slope = mean_tilt_function(fam, rng_[0], rng_[1], sol.theta)
    out = sol.to_dict()
    out["mbar"] = float(mbar)
    out["mean_variance"] = float(slope)
    out["moments"] = aggregate_moments(fam, sol.theta, rng_).to_dict()
    return out


def _grid_points(lo: float, hi: float, step: float) -> np.ndarray:
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def cmd_edgeworth(p: dict, threads: int) -> dict:
    rng_ = tuple(p["range"]) if p["range"] is not None else (1, p["n"])
    fam = _family(p, rng_[1])
    moments = aggregate_moments(fam, p["theta"], rng_)
    x = _grid_points(*p["grid"])
    approx = np.asarray(edgeworth_density(moments, p["order"], x))
    try:
        exact, method = standardized_sum_density(fam, rng_, p["theta"], x)
    except TiltcondError:
        exact, method = None, "unavailable"
    result = {
        "range": list(rng_),
        "order": p["order"],
        "coefficients": edgeworth_coefficients(moments).to_dict(),
        "moments": moments.to_dict(),
        "points": int(x.size),
        "exact_method": method,
    }
    if exact is not None:
        err = np.abs(approx - exact)
        result["sup_abs_error"] = float(err.max())
    if p["out"]:
        if exact is None:
            write_csv(p["out"], ["x", "expansion"], [x, approx])
        else:
            write_csv(p["out"], ["x", "expansion", "exact", "abs_error"], [x, approx, exact, err])
        result["out"] = p["out"]
    return result


def _exact_log_density(fam, p: dict, route: str) -> Callable:
    n, a, k = p["n"], p["a"], p["k"]
    if route in ("auto", "gaussian") and fam.head(n).is_gaussian:
        return lambda Y: gaussian_conditional_log_density(fam, n, a, k, Y)
    if route == "gaussian":
        raise ConfigError("oracle=gaussian needs an all-Gaussian family",
                          [{"field": "oracle", "message": "family is not all Gaussian"}])
    return ConditionalOracle(fam, n, a, k).log_density


def cmd_gk_density(p: dict, threads: int) -> dict:
    fam = _family(p, p["n"])
    y = np.array(p["y"])[None, :]
    out = _regime_info(p)
    out["log_density"] = float(g_k_log_density_paths(fam, p["n"], p["a"], p["k"], y, _regime(p))[0])
    if p["oracle"]:
        out["exact_log_density"] = float(_exact_log_density(fam, p, "auto")(y)[0])
    return out


def cmd_gk_sample(p: dict, threads: int) -> dict:
    fam = _family(p, p["n"])
    n, a, k = p["n"], p["a"], p["k"]
    cfg = _regime(p)
    blocks = run_blocks(lambda size, rng: sample_g_k_paths(fam, n, a, k, size, rng, cfg),
                        p["paths"], p["seed"], threads)
    paths = np.vstack([b.paths for b in blocks])
    logd = np.concatenate([b.log_density for b in blocks])
    tilts = np.vstack([b.tilts for b in blocks])
    out = _regime_info(p)
    out.update({
        "paths": int(paths.shape[0]),
        "mean_log_density": float(logd.mean()),
        "mean_y1": float(paths[:, 0].mean()),
        "max_abs_tilt_p99": float(np.percentile(np.abs(tilts).max(axis=1), 99)),
    })
    if p["out"]:
        if p["format"] == "csv":
            write_paths_csv(p["out"], paths, tilts[:, -1])
        else:
            write_paths_tcnd(p["out"], n, paths, tilts[:, -1])
        out["out"] = p["out"]
    return out


def cmd_tv(p: dict, threads: int) -> dict:
    fam = _family(p, p["n"])
    n, a, k = p["n"], p["a"], p["k"]
    cfg = _regime(p)
    true_ld = _exact_log_density(fam, p, p["oracle"])
    method = p["method"]
    if method == "auto":
        method = "grid" if k <= 2 else "monte_carlo"
    out = _regime_info(p)
    if method == "grid":
        est = tv_distance(true_ld, lambda Y: g_k_log_density_paths(fam, n, a, k, Y, cfg),
                          lambda m, rng: sample_g_k_paths(fam, n, a, k, m, rng, cfg).paths,
                          min(p["samples"], 10000), block_rng(p["seed"], 0), method="grid")
    else:
        def block(size, rng):
            s = sample_g_k_paths(fam, n, a, k, size, rng, cfg)
            return true_ld(s.paths) - s.log_density

        delta = np.concatenate(run_blocks(block, p["samples"], p["seed"], threads))
        if not np.all(np.isfinite(delta)):
            raise NonFiniteLogDensity(f"{np.count_nonzero(~np.isfinite(delta))} samples with non-finite log-ratio")
        est = tv_from_log_ratios(delta)
    out.update(est.to_dict())
    return out


def cmd_is_run(p: dict, threads: int) -> dict:
    fam = _family(p, p["n"])
    n, a, k = p["n"], p["a"], p["k"]
    proposal = build_gbar(fam, n, a, k, _regime(p))
    reports, naive = [], []
    for r in range(p["replications"]):
        parts = run_blocks(lambda size, rng: is_weights(fam, n, a, proposal, size, rng),
                           p["samples"], p["seed"], threads, stream=(0, r))
        w = np.concatenate([q[0] for q in parts])
        hit = np.concatenate([q[1] for q in parts])
        reports.append(weights_report(w, hit))
        if p["naive"]:
            hits = np.concatenate(run_blocks(lambda size, rng: naive_hits(fam, n, a, size, rng),
                                             p["samples"], p["seed"], threads, stream=(1, r)))
            naive.append({"estimate": float(hits.mean()),
                          "variance": float(hits.var(ddof=1)) if hits.size > 1 else 0.0,
                          "hit_count": int(hits.sum())})
    est = np.array([r.estimate for r in reports])
    R = len(reports)
    summary = {
        "mean_estimate": float(est.mean()),
        "combined_std_error": float(math.sqrt(sum(r.std_error ** 2 for r in reports)) / R),
        "mean_weight_variance": float(np.mean([r.variance_of_weights for r in reports])),
    }
    if R > 1:
        summary["replication_std_error"] = float(est.std(ddof=1) / math.sqrt(R))
    out = _regime_info(p)
    out.update({"summary": summary, "replications": [r.to_dict() for r in reports]})
    if naive:
        out["naive"] = naive
        out["summary"]["naive_mean_estimate"] = float(np.mean([q["estimate"] for q in naive]))
    return out


COMMANDS: dict[str, Callable[[dict, int], dict]] = {
    "validate": cmd_validate,
    "solve-tilt": cmd_solve_tilt,
    "edgeworth": cmd_edgeworth,
    "gk-density": cmd_gk_density,
    "gk-sample": cmd_gk_sample,
    "tv": cmd_tv,
    "is-run": cmd_is_run,
}

HELP = {
    "validate": "check the standing assumptions on a family",
    "solve-tilt": "solve mbar_{p,q}(theta) = target",
    "edgeworth": "Edgeworth expansion of a standardized sum",
    "gk-density": "log-density of G_k at a point",
    "gk-sample": "sample paths from G_k",
    "tv": "total-variation distance between the conditional law and G_k",
    "is-run": "importance-sampling estimate of P(S_{1,n} >= n a)",
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message, [{"field": None, "message": message}])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tiltcond", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, schema in SCHEMAS.items():
        sp = sub.add_parser(name, help=HELP[name], description=HELP[name])
        for p in schema:
            extra = " (required)" if p.default is REQUIRED else ""
            sp.add_argument(p.flag, dest=p.name, default=None, help=p.help + extra)
        sp.add_argument("--config", dest="_config", default=None,
                        help="JSON file with parameters; explicit flags override it")
        sp.add_argument("--threads", dest="_threads", type=int, default=1,
                        help="worker threads (results do not depend on it)")
    return parser


_RANGE_FLAGS = {"--grid", "--range", "--compact", "--y"}
_NEGATIVE = re.compile(r"^-[\d.]")


def _join_negative_values(argv: list[str]) -> list[str]:
    """Let ``--grid -6:6:0.01`` through argparse, which would read it as a flag."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in _RANGE_FLAGS and i + 1 < len(argv) and _NEGATIVE.match(argv[i + 1]):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if ns._config:
        try:
            with open(ns._config) as fh:
                values = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {ns._config}: {exc}",
                              [{"field": "config", "message": str(exc)}]) from exc
        if values.get("command", ns.command) != ns.command:
            raise ConfigError("config file is for a different command",
                              [{"field": "command", "message": f"expected {ns.command}"}])
    for p in SCHEMAS[ns.command]:
        v = getattr(ns, p.name)
        if v is not None:
            values[p.name] = v
    values["command"] = ns.command
    return RunConfig.from_dict(values)


def _emit(envelope: dict, stream=None) -> None:
    stream = stream or sys.stdout
    stream.write(json_dumps(envelope) + "\n")
    stream.flush()


def main(argv: list[str] | None = None) -> int:
    argv = _join_negative_values(list(sys.argv[1:] if argv is None else argv))
    command = None
    config_echo = None
    t0 = time.perf_counter()
    try:
        ns = build_parser().parse_args(argv)
        command = ns.command
        if command is None:
            raise ConfigError("a subcommand is required",
                              [{"field": "command", "message": f"one of {', '.join(SCHEMAS)}"}])
        if ns._threads < 1:
            raise ConfigError("--threads must be >= 1", [{"field": "threads", "message": "must be >= 1"}])
        config = config_from_args(ns)
        config_echo = config.to_dict()
        result = COMMANDS[command](config.params, ns._threads)
    except ConfigError as exc:
        _emit({"command": command, "config": config_echo, "error": exc.to_dict(),
               "runtime_ms": (time.perf_counter() - t0) * 1e3})
        return 2
    except TiltcondError as exc:
        _emit({"command": command, "config": config_echo, "error": exc.to_dict(),
               "runtime_ms": (time.perf_counter() - t0) * 1e3})
        return 3
    _emit({"command": command, "config": config_echo, "result": result,
           "runtime_ms": (time.perf_counter() - t0) * 1e3})
    return 0


if __name__ == "__main__":
    sys.exit(main())
