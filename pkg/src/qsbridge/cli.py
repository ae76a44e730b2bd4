"""``qsb`` command-line interface.

Every subcommand reads a JSON config (or, for ``metrics``, two point files),
writes plain CSV/JSON tables into ``--out`` and is a pure function of its
inputs and ``--seed``. Failures exit nonzero with a JSON error on stderr.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .bridge import (
    BridgeKind,
    BridgeProblem,
    Gaussian,
    InfeasibleBridgeError,
    continuity_residual,
    hje_residual,
    riccati_residual,
)
from .datasets import moons, swiss_roll_2d
from .gmm import GaussianMixture, bohm_mixture
from .metrics import MAX_EXACT_EMD, emd_samples, moment_check, subsample, w2_gaussian
from .mfg import (
    BUILTIN_ENVIRONMENTS,
    Environment,
    MfgConfig,
    builtin_environment,
    collision_fraction,
    optimize,
    sample_paths,
)
from .wavepacket import TrainConfig, fit_wavepacket_bridge, mixture_marginal, propagate_samples, write_paths_csv

DEFAULT_SEED = 42
RESIDUAL_TOL = 1e-4
RESIDUAL_POINTS = 5

log = logging.getLogger("qsbridge.cli")


class VerificationFailed(RuntimeError):
    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


def _seed(args, cfg: dict | None = None) -> int:
    if args.seed is not None:
        return args.seed
    if cfg and "seed" in cfg:
        return int(cfg["seed"])
    return DEFAULT_SEED


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _need_config(args) -> str:
    if args.config is None:
        raise io.ConfigError("--config is required for this command")
    return args.config


def _upper(M: np.ndarray) -> np.ndarray:
    return M[np.triu_indices(M.shape[0])]


# -- bridge -------------------------------------------------------------------

BRIDGE_SCHEMA = {
    "type": "object",
    "required": ["g0", "g1"],
    "properties": {
        "g0": io.GAUSSIAN,
        "g1": io.GAUSSIAN,
        "beta": {"oneOf": [{"type": "number", "minimum": 0}, {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}]},
        "kind": {"enum": [k.value for k in BridgeKind]},
        "t_grid": {"oneOf": [io.VECTOR, {"type": "integer", "minimum": 2}]},
        "seed": {"type": "integer", "minimum": 0},
    },
}


def cmd_bridge(args) -> None:
    cfg = io.load_config(_need_config(args), BRIDGE_SCHEMA)
    g0, g1 = Gaussian.from_dict(cfg["g0"]), Gaussian.from_dict(cfg["g1"])
    betas = cfg.get("beta", 0.0)
    betas = [float(b) for b in (betas if isinstance(betas, list) else [betas])]
    kind = BridgeKind(cfg.get("kind", "quantum"))
    grid = cfg.get("t_grid", 101)
    ts = np.linspace(0.0, 1.0, grid) if isinstance(grid, int) else np.asarray(grid, dtype=np.float64)
    if np.any(ts < 0) or np.any(ts > 1):
        raise io.ConfigError("times must lie in [0, 1]", "$.t_grid")
    problems = [BridgeProblem(g0, g1, b, kind) for b in betas]
    if args.verify and kind is BridgeKind.CLASSICAL_SB:
        raise VerificationFailed("residual verification needs a gradient drift; classical_sb has none",
                                 kind=kind.value)
    out = _out_dir(args)
    n = g0.dim
    header = ["beta", "t"] + [f"mean{i}" for i in range(n)] + [
        f"cov{i}{j}" for i, j in zip(*np.triu_indices(n))]
    rows = []
    for p in problems:
        covs = p.cov_batch(ts)
        for t, C in zip(ts, covs):
            rows.append([p.beta, t, *p.mean(t), *_upper(C)])
    io.write_table(out / "marginals.csv", header, rows)
    if not args.verify:
        return
    rng = np.random.default_rng(_seed(args, cfg))
    h = 1e-4
    res_rows = []
    for p in problems:
        for t in ts:
            if not (h <= t <= 1.0 - h):
                continue
            xs = p.mean(t) + rng.standard_normal((RESIDUAL_POINTS, n)) @ np.linalg.cholesky(p.cov(t)).T
            cont = max(continuity_residual(p, x, t) for x in xs)
            hje = max(hje_residual(p, x, t) for x in xs)
            res_rows.append([p.beta, t, cont, hje, riccati_residual(p, t)])
    io.write_table(out / "residuals.csv", ["beta", "t", "continuity", "hje", "riccati"], res_rows)
    worst = max((max(r[2:]) for r in res_rows), default=0.0)
    if worst >= RESIDUAL_TOL:
        raise VerificationFailed("residual above tolerance", worst=worst, tol=RESIDUAL_TOL)


# -- bohm ---------------------------------------------------------------------

BOHM_SCHEMA = {
    "type": "object",
    "required": ["beta", "grid"],
    "properties": {
        "mixture": io.MIXTURE,
        "mixture_file": {"type": "string"},
        "beta": {"type": "number", "minimum": 0},
        "grid": {
            "type": "object",
            "required": ["lo", "hi", "n"],
            "properties": {"lo": io.VECTOR, "hi": io.VECTOR,
                           "n": {"oneOf": [{"type": "integer", "minimum": 1},
                                           {"type": "array", "items": {"type": "integer", "minimum": 1}}]}},
        },
        "clamp": {"type": "number"},
        "mixing_term": {"type": "boolean"},
    },
    "oneOf": [{"required": ["mixture"]}, {"required": ["mixture_file"]}],
}


def _load_mixture(cfg: dict, base: Path) -> GaussianMixture:
    if "mixture" in cfg:
        data, where = cfg["mixture"], "$.mixture"
    else:
        path = base / cfg["mixture_file"]
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise io.ConfigError(f"invalid mixture JSON in {path}: {exc.msg}", "$.mixture_file") from None
        io.validate(data, io.MIXTURE)
        where = "$.mixture_file"
    try:
        return GaussianMixture.from_dict(data)
    except (ValueError, KeyError) as exc:
        raise io.ConfigError(f"malformed mixture: {exc}", where) from None


def cmd_bohm(args) -> None:
    cfg_path = _need_config(args)
    cfg = io.load_config(cfg_path, BOHM_SCHEMA)
    mix = _load_mixture(cfg, Path(cfg_path).parent)
    d = mix.dim
    grid = cfg["grid"]
    lo, hi = np.asarray(grid["lo"], float), np.asarray(grid["hi"], float)
    counts = grid["n"] if isinstance(grid["n"], list) else [grid["n"]] * d
    if not (len(lo) == len(hi) == len(counts) == d):
        raise io.ConfigError(f"grid lo/hi/n must have length {d}", "$.grid")
    axes = [np.linspace(a, b, k) for a, b, k in zip(lo, hi, counts)]
    X = np.array(list(itertools.product(*axes)), dtype=np.float64)
    Q = bohm_mixture(mix, float(cfg["beta"]), X, mixing_term=cfg.get("mixing_term", True))
    if "clamp" in cfg:
        Q = np.maximum(Q, float(cfg["clamp"]))
    out = _out_dir(args)
    io.write_table(out / "bohm_grid.csv", [f"x{i}" for i in range(d)] + ["Q"],
                   np.column_stack([X, Q]))


# -- wavepacket ---------------------------------------------------------------

_SAMPLES = {
    "oneOf": [
        {"type": "string"},
        {"type": "object", "required": ["dataset", "n"],
         "properties": {"dataset": {"enum": ["moons", "swiss_roll"]},
                        "n": {"type": "integer", "minimum": 4},
                        "seed": {"type": "integer", "minimum": 0}}},
    ]
}

WAVEPACKET_SCHEMA = {
    "type": "object",
    "required": ["pi0", "pi1"],
    "properties": {
        "pi0": _SAMPLES,
        "pi1": _SAMPLES,
        "train": {"type": "object"},
        "holdout": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "t_values": io.VECTOR,
        "n_steps": {"type": "integer", "minimum": 1},
        "n_paths": {"type": "integer", "minimum": 0},
        "eval_max": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
    },
}


def _load_samples(spec, base: Path) -> np.ndarray:
    if isinstance(spec, str):
        return io.read_points(base / spec)
    gen = moons if spec["dataset"] == "moons" else swiss_roll_2d
    return gen(spec["n"], random_state=spec.get("seed", 0))


def _split(X: np.ndarray, frac: float, rng) -> tuple[np.ndarray, np.ndarray]:
    idx = rng.permutation(len(X))
    k = int(round(len(X) * (1.0 - frac)))
    if k < 1 or k >= len(X):
        raise io.ConfigError(f"holdout fraction {frac} leaves an empty split of {len(X)} samples", "$.holdout")
    return X[np.sort(idx[:k])], X[np.sort(idx[k:])]


def _paired_emd(X, Y, cap: int, rng) -> float:
    m = min(len(X), len(Y), cap)
    return emd_samples(subsample(X, m, rng), subsample(Y, m, rng))


def cmd_wavepacket(args) -> None:
    cfg_path = _need_config(args)
    cfg = io.load_config(cfg_path, WAVEPACKET_SCHEMA)
    base = Path(cfg_path).parent
    seed = _seed(args, cfg)
    X0 = _load_samples(cfg["pi0"], base)
    X1 = _load_samples(cfg["pi1"], base)
    if X0.shape[1] != X1.shape[1]:
        raise io.ConfigError(f"pi0 and pi1 dimensions differ: {X0.shape[1]} vs {X1.shape[1]}")
    train = dict(cfg.get("train", {}))
    train["seed"] = seed
    unknown = set(train) - set(TrainConfig.__dataclass_fields__)
    if unknown:
        raise io.ConfigError(f"unknown training fields {sorted(unknown)}", "$.train")
    tcfg = TrainConfig(**train)
    ss_split, ss_eval, ss_paths = np.random.SeedSequence(seed).spawn(3)
    rng_split = np.random.default_rng(ss_split)
    frac = cfg.get("holdout", 0.5)
    tr0, te0 = _split(X0, frac, rng_split)
    tr1, te1 = _split(X1, frac, rng_split)

    result = fit_wavepacket_bridge(tr0, tr1, tcfg)
    bridge = result.bridge
    out = _out_dir(args)
    (out / "bridge.json").write_text(bridge.to_json() + "\n")
    for t in cfg.get("t_values", [0.0, 0.5, 1.0]):
        (out / f"marginal_t{t:g}.json").write_text(mixture_marginal(bridge, float(t)).to_json() + "\n")

    n_steps = cfg.get("n_steps", 20)
    grid = np.linspace(0.0, 1.0, n_steps + 1)
    rng_eval = np.random.default_rng(ss_eval)
    cap = cfg.get("eval_max", MAX_EXACT_EMD)
    moved = propagate_samples(bridge, te0, grid, rng_eval)[-1]
    report = {
        "n_components": bridge.n_components,
        "beta": bridge.beta,
        "emd_t0": _paired_emd(te0, te1, cap, rng_eval),
        "emd_t1": _paired_emd(moved, te1, cap, rng_eval),
        "emd_train_test_pi1": _paired_emd(tr1, te1, cap, rng_eval),
        "outer_iterations": result.n_outer,
        "converged": result.converged,
        "clamped_components": int(np.sum(bridge.component_betas < bridge.beta)),
        "phases": [{"name": n, "log_likelihood": ll}
                   for n, ll in zip(result.phase_names, result.phase_log_likelihoods)],
    }
    io.write_json(out / "report.json", report)
    n_paths = min(cfg.get("n_paths", 100), len(te0))
    if n_paths:
        paths = propagate_samples(bridge, te0[:n_paths], grid, np.random.default_rng(ss_paths))
        write_paths_csv(out / "paths.csv", paths, grid)


# -- mfg ----------------------------------------------------------------------

_ENDPOINT = {"type": "object", "required": ["mean"],
             "properties": {"mean": {"type": "array", "items": io.NUMBER, "minItems": 2, "maxItems": 2},
                            "var": {"oneOf": [{"type": "number", "exclusiveMinimum": 0},
                                              {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                                               "minItems": 2, "maxItems": 2}]}}}

MFG_SCHEMA = {
    "type": "object",
    "properties": {
        "env": {"enum": list(BUILTIN_ENVIRONMENTS)},
        "bounds": {"type": "array", "items": io.NUMBER, "minItems": 4, "maxItems": 4},
        "obstacles": {"type": "array", "items": {
            "type": "object", "required": ["center", "semi_axes"],
            "properties": {"center": {"type": "array", "items": io.NUMBER, "minItems": 2, "maxItems": 2},
                           "semi_axes": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                                         "minItems": 2, "maxItems": 2}}}},
        "start": _ENDPOINT,
        "goal": _ENDPOINT,
        "mfg": {"type": "object"},
        "n_paths": {"type": "integer", "minimum": 0},
    },
}

DEFAULT_ENDPOINT_VAR = 0.05


def _mfg_setup(args, cfg: dict):
    name = args.env or cfg.get("env")
    if name is not None:
        env, start, goal = builtin_environment(name)
    else:
        if "bounds" not in cfg:
            raise io.ConfigError("give --env, an 'env' name or explicit 'bounds'")
        env = Environment.from_dict(cfg)
        start = goal = None
    ends = []
    for key, default in (("start", start), ("goal", goal)):
        spec = cfg.get(key, {})
        mean = spec.get("mean", default)
        if mean is None:
            raise io.ConfigError(f"'{key}.mean' is required for a custom environment", f"$.{key}")
        var = np.broadcast_to(np.asarray(spec.get("var", DEFAULT_ENDPOINT_VAR), float), (2,))
        ends.append(Gaussian(np.asarray(mean, float), np.diag(var)))
    return env, ends[0], ends[1]


def cmd_mfg(args) -> None:
    cfg = io.load_config(args.config, MFG_SCHEMA) if args.config else {}
    env, p0, p1 = _mfg_setup(args, cfg)
    mcfg_d = dict(cfg.get("mfg", {}))
    mcfg_d["seed"] = _seed(args, mcfg_d)
    try:
        mcfg = MfgConfig.from_dict(mcfg_d)
    except (TypeError, ValueError) as exc:
        raise io.ConfigError(str(exc), "$.mfg") from None
    res = optimize(env, p0, p1, mcfg)
    out = _out_dir(args)
    par = res.params
    var = par.variances
    io.write_table(out / "trajectory.csv", ["i", "t", "mu_x", "mu_y", "var_x", "var_y"],
                   [[i, t, *par.mu[i], *var[i]] for i, t in enumerate(par.t_grid)])
    io.write_table(out / "loss.csv", ["iter", "kinetic", "potential", "penalty", "total"],
                   [[i, *row] for i, row in enumerate(res.history)])
    n_paths = cfg.get("n_paths", 100)
    paths = sample_paths(par, mcfg.beta, max(n_paths, 1), np.random.SeedSequence(mcfg.seed).spawn(4)[3])
    if n_paths:
        write_paths_csv(out / "paths.csv", paths, par.t_grid)
    io.write_table(out / "rrt_path.csv", ["x", "y"], res.plan.path)
    io.write_json(out / "summary.json", {
        "initial_loss": res.initial_loss,
        "final_loss": res.final_loss,
        "collision_fraction": collision_fraction(env, paths),
        "iters": mcfg.iters,
        "lambda_obs": mcfg.lambda_obs,
        "rrt_length": res.plan.cost,
    })


# -- metrics ------------------------------------------------------------------


def cmd_metrics(args) -> None:
    X, Y = io.read_points(args.x), io.read_points(args.y)
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    rng = np.random.default_rng(_seed(args))
    m = min(len(X), len(Y), args.subsample or MAX_EXACT_EMD)
    result = {"n": m, "emd": emd_samples(subsample(X, m, rng), subsample(Y, m, rng))}
    if args.gaussian_fit:
        (mx, cx), (my, cy) = moment_check(X), moment_check(Y)
        result["w2_gaussian"] = w2_gaussian(Gaussian(mx, cx), Gaussian(my, cy))
    text = json.dumps(result, sort_keys=True)
    print(text)
    if args.out:
        (_out_dir(args) / "metrics.json").write_text(text + "\n")


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, default=None,
                        help=f"overrides config seeds (default {DEFAULT_SEED})")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--verify", action="store_true", help="check PDE residuals where supported")
    common.add_argument("--env", choices=BUILTIN_ENVIRONMENTS, help="built-in MFG environment")

    p = argparse.ArgumentParser(prog="qsb", description="Closed-form quantum Schrodinger bridge toolkit.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("bridge", parents=[common], help="Gaussian bridge marginals (and residuals)")
    sub.add_parser("bohm", parents=[common], help="Bohm potential of a mixture on a grid")
    sub.add_parser("wavepacket", parents=[common], help="train a mixture wavepacket bridge")
    sub.add_parser("mfg", parents=[common], help="crowd trajectory optimization")
    m = sub.add_parser("metrics", parents=[common], help="EMD between two point files")
    m.add_argument("x")
    m.add_argument("y")
    m.add_argument("--subsample", type=int, default=None,
                   help=f"cap on points per side (default and maximum {MAX_EXACT_EMD})")
    m.add_argument("--gaussian-fit", action="store_true",
                   help="also report W2 between moment-matched Gaussians")
    return p


COMMANDS = {"bridge": cmd_bridge, "bohm": cmd_bohm, "wavepacket": cmd_wavepacket,
            "mfg": cmd_mfg, "metrics": cmd_metrics}


def _setup_logging() -> None:
    level = os.environ.get("QSB_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _fail(error: str, message: str, code: int, **extra) -> int:
    sys.stderr.write(json.dumps({"error": error, "message": message, **extra}, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "subsample", None) is not None and not 1 <= args.subsample <= MAX_EXACT_EMD:
        return _fail("ConfigError", f"--subsample must lie in [1, {MAX_EXACT_EMD}]", 2)
    try:
        COMMANDS[args.command](args)
    except VerificationFailed as exc:
        return _fail("VerificationFailed", str(exc), 1, **exc.details)
    except InfeasibleBridgeError as exc:
        return _fail("InfeasibleBridgeError", str(exc), 2, beta=exc.beta, beta_max=exc.beta_max)
    except io.ConfigError as exc:
        return _fail("ConfigError", str(exc), 2, path=exc.path)
    except (ValueError, OSError, RuntimeError) as exc:
        return _fail(type(exc).__name__, str(exc), 2)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
