"""Config-driven experiment runner and report emitter.

Configs are flat ``key = value`` text files with one section per
component ([problem], [algorithm], [output]); unknown keys are
rejected. Runs are deterministic for a fixed seed, and by default the
wall-time column is recorded as zero so that emitted CSVs are
byte-identical across repeated runs (set ``record_wall_time = true`` to
measure for real at the cost of reproducible files).
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import numrange
from .drivers import (CPParams, CPState, NesterovParams, NesterovStepper,
                      NonFiniteIterate, LogisticSaddleProblem,
                      TVSaddleProblem, chambolle_pock_step,
                      gradient_operator, run_lbfgs)
from .extrapolate import (DEFAULT_LAMBDA, DEFAULT_WINDOW, IterateWindow,
                          SingularSystem, extrapolate_point, residuals,
                          rna_coefficients)
from .linalg import spectral_norm
from .online import OnlineState, adaptive_nesterov_step
from .problems import (TV_GRAD_NORM_SQ, LogisticProblem, TVDenoiseProblem,
                       load_dataset, noisy_image, synthetic_logistic,
                       synthetic_quadratic)


class ConfigError(Exception):
    """Invalid or unknown configuration content."""


PROBLEM_KINDS = ("quadratic", "logistic", "tv")
BASES = ("gd", "nesterov", "cp", "lbfgs")
MODES = ("none", "offline", "restart", "online", "guarded")

_PROBLEM_KEYS = {
    "kind": str, "d": int, "n": int, "condition": float, "seed": int,
    "mu": float, "h": int, "w": int, "noise": float, "path": str,
}
_ALGORITHM_KEYS = {
    "base": str, "acceleration": str, "window": int, "lambda_rel": float,
    "eta": float, "tau": float, "iterations": int, "seed": int,
    "theta": float, "adaptive": bool, "adaptive_momentum": bool,
    "sigma0": float, "tau0": float, "gamma_rel": float,
}
_OUTPUT_KEYS = {
    "dir": str, "tolerances": str, "record_wall_time": bool,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (see module docstring)."""

    problem: dict
    algorithm: dict
    output: dict

    @property
    def iterations(self):
        return self.algorithm["iterations"]

    @property
    def mode(self):
        return self.algorithm["acceleration"]

    @property
    def tolerances(self):
        raw = self.output.get("tolerances", "")
        return [float(t) for t in raw.split(",") if t.strip()] if raw else []

    def problem_hash(self):
        blob = json.dumps(self.problem, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def config_hash(self):
        blob = json.dumps(
            {"problem": self.problem, "algorithm": self.algorithm},
            sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def _parse_scalar(raw, line_no):
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    if raw in ("true", "false"):
        return raw == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"line {line_no}: cannot parse value {raw!r}") from None


def parse_config_text(text):
    """Parse the flat key = value format into an ExperimentConfig."""
    sections = {"problem": {}, "algorithm": {}, "output": {}}
    current = None
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            name = stripped[1:-1].strip()
            if name not in sections:
                raise ConfigError(f"line {line_no}: unknown section [{name}]")
            current = name
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected key = value")
        if current is None:
            raise ConfigError(f"line {line_no}: key outside of any section")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        sections[current][key] = _parse_scalar(raw, line_no)
    return validate_config(sections["problem"], sections["algorithm"],
                           sections["output"])


def load_config(path, overrides=None):
    with open(path, "r", encoding="utf-8") as fh:
        cfg = parse_config_text(fh.read())
    if overrides:
        prob = dict(cfg.problem)
        alg = dict(cfg.algorithm)
        out = dict(cfg.output)
        for dotted, raw in overrides.items():
            if "." not in dotted:
                raise ConfigError(f"override {dotted!r} must be section.key")
            section, key = dotted.split(".", 1)
            target = {"problem": prob, "algorithm": alg, "output": out}.get(section)
            if target is None:
                raise ConfigError(f"unknown section {section!r} in override")
            target[key] = _parse_scalar(str(raw), 0)
        cfg = validate_config(prob, alg, out)
    return cfg


def _check_keys(section, data, schema):
    for key, value in data.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        want = schema[key]
        if want is float and isinstance(value, int) and not isinstance(value, bool):
            data[key] = float(value)
        elif want is int and isinstance(value, bool):
            raise ConfigError(f"[{section}] {key}: expected {want.__name__}")
        elif not isinstance(data[key], want):
            raise ConfigError(f"[{section}] {key}: expected {want.__name__}")


def validate_config(problem, algorithm, output):
    problem, algorithm, output = dict(problem), dict(algorithm), dict(output)
    _check_keys("problem", problem, _PROBLEM_KEYS)
    _check_keys("algorithm", algorithm, _ALGORITHM_KEYS)
    _check_keys("output", output, _OUTPUT_KEYS)

    kind = problem.get("kind")
    if kind not in PROBLEM_KINDS:
        raise ConfigError(f"problem kind must be one of {PROBLEM_KINDS}")
    problem.setdefault("seed", 0)
    if kind == "quadratic":
        problem.setdefault("d", 20)
        problem.setdefault("condition", 100.0)
    elif kind == "logistic":
        if "path" not in problem:
            problem.setdefault("d", 50)
            problem.setdefault("n", 200)
            problem.setdefault("condition", 1e3)
        problem.setdefault("mu", 0.0)
    else:
        problem.setdefault("h", 64)
        problem.setdefault("w", 64)
        problem.setdefault("noise", 0.1)
        problem.setdefault("mu", 8.0)

    base = algorithm.get("base", "gd")
    mode = algorithm.get("acceleration", "none")
    if base not in BASES:
        raise ConfigError(f"algorithm base must be one of {BASES}")
    if mode not in MODES:
        raise ConfigError(f"acceleration must be one of {MODES}")
    algorithm["base"] = base
    algorithm["acceleration"] = mode
    algorithm.setdefault("iterations", 100)
    algorithm.setdefault("window", DEFAULT_WINDOW)
    algorithm.setdefault("lambda_rel", DEFAULT_LAMBDA)
    algorithm.setdefault("eta", 1.0)
    algorithm.setdefault("seed", 0)
    for key in ("iterations", "window"):
        if algorithm[key] < 1:
            raise ConfigError(f"{key} must be positive")
    for key in ("lambda_rel", "eta"):
        if algorithm[key] < 0:
            raise ConfigError(f"{key} must be nonnegative")
    if mode == "guarded" and base != "nesterov":
        raise ConfigError("guarded acceleration requires base = nesterov")
    if base == "cp" and kind == "quadratic":
        raise ConfigError("cp runs on logistic or tv problems")
    if kind == "tv" and base != "cp":
        raise ConfigError("tv problems run with base = cp")
    if base == "cp" and mode in ("online", "guarded"):
        if problem["kind"] == "tv":
            raise ConfigError("online feedback with adaptive cp is not supported")
    output.setdefault("dir", "bench_out")
    output.setdefault("record_wall_time", False)
    return ExperimentConfig(problem=problem, algorithm=algorithm, output=output)


# ---------------------------------------------------------------------------
# logs


@dataclass
class ConvergenceLog:
    """Per-iteration metrics of one experiment run."""

    name: str
    iters: list = field(default_factory=list)
    f: list = field(default_factory=list)
    resid: list = field(default_factory=list)
    ms: list = field(default_factory=list)
    branch: list | None = None
    aborted: str | None = None

    def append(self, i, f_val, resid, ms, branch=None):
        if self.iters and i <= self.iters[-1]:
            raise ValueError("iteration numbers must increase")
        self.iters.append(int(i))
        self.f.append(float(f_val))
        self.resid.append(float(resid))
        self.ms.append(float(ms))
        if branch is not None:
            if self.branch is None:
                self.branch = []
            self.branch.append(int(branch))

    def csv_text(self):
        cols = "iter,f,resid,ms" + (",branch" if self.branch is not None else "")
        lines = [cols]
        for j in range(len(self.iters)):
            row = f"{self.iters[j]},{self.f[j]:.17g},{self.resid[j]:.17g},{self.ms[j]:.3f}"
            if self.branch is not None:
                row += f",{self.branch[j]}"
            lines.append(row)
        return "\n".join(lines) + "\n"


def write_log_csv(log: ConvergenceLog, path):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(log.csv_text())


def read_log_csv(path, name=None):
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        if header[:4] != ["iter", "f", "resid", "ms"]:
            raise ValueError(f"{path}: unexpected header {header}")
        has_branch = len(header) == 5 and header[4] == "branch"
        log = ConvergenceLog(name=name or str(path))
        for line in fh:
            parts = line.strip().split(",")
            if not parts or parts == [""]:
                continue
            branch = int(parts[4]) if has_branch else None
            log.append(int(parts[0]), float(parts[1]), float(parts[2]),
                       float(parts[3]), branch)
    return log


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    log: ConvergenceLog
    base_log: ConvergenceLog | None = None


# ---------------------------------------------------------------------------
# problem / driver assembly


def build_problem(config: ExperimentConfig):
    p = config.problem
    kind = p["kind"]
    if kind == "quadratic":
        return synthetic_quadratic(p["d"], p["condition"], seed=p["seed"])
    if kind == "logistic":
        if "path" in p:
            return load_dataset(p["path"], mu=p.get("mu", 0.0))
        return synthetic_logistic(p["d"], p["n"], p["condition"], seed=p["seed"])
    return noisy_image(p["seed"], p["h"], p["w"], p["noise"], mu=p["mu"])


def _timer(enabled):
    if not enabled:
        return lambda: 0.0
    t0 = time.perf_counter()
    return lambda: 1e3 * (time.perf_counter() - t0)


def _cp_setup(config, problem):
    alg = config.algorithm
    if isinstance(problem, TVDenoiseProblem):
        saddle = TVSaddleProblem(problem)
        gamma = alg.get("gamma_rel", 0.2) * problem.mu
        tau0 = alg.get("tau0", 0.02)
        sigma0 = alg.get("sigma0", 4.0 / (tau0 * TV_GRAD_NORM_SQ))
        adaptive_momentum = alg.get("adaptive_momentum", False)
        if adaptive_momentum:
            op_norm = float(np.sqrt(TV_GRAD_NORM_SQ))
            sigma0 = alg.get("sigma0", 1.0 / op_norm)
            tau0 = alg.get("tau0", 1.0 / op_norm)
            gamma = alg.get("gamma_rel", 0.7) * problem.mu
        params = CPParams(sigma=sigma0, tau_step=tau0,
                          theta=alg.get("theta", 0.0), gamma=gamma,
                          adaptive=alg.get("adaptive", True),
                          adaptive_momentum=adaptive_momentum)
        y0 = np.zeros(problem.noisy.shape + (2,))
        x0 = problem.noisy.copy()
        state = CPState.cold_start(y0, x0)
        return saddle, params, state
    if isinstance(problem, LogisticProblem):
        saddle = LogisticSaddleProblem(problem.data, problem.labels, problem.mu)
        op_norm = spectral_norm(problem.data)
        sigma0 = alg.get("sigma0", 1.0 / op_norm)
        tau0 = alg.get("tau0", 1.0 / op_norm)
        params = CPParams(sigma=sigma0, tau_step=tau0,
                          theta=alg.get("theta", 0.0),
                          adaptive=alg.get("adaptive", False))
        n, d = problem.data.shape
        state = CPState.cold_start(np.zeros(n), np.zeros(d))
        return saddle, params, state
    raise ConfigError("cp base expects a logistic or tv problem")


def _cp_metrics(saddle, problem, state, prev_stack):
    stack = state.stacked()
    resid = float(np.linalg.norm(stack - prev_stack))
    f_val = saddle.primal_value(state.x) if hasattr(saddle, "primal_value") \
        else problem.value(state.x)
    return f_val, resid


def run_experiment(config: ExperimentConfig, problem=None):
    """Execute one experiment; deterministic for a fixed config.

    Modes: none (plain driver), offline (extrapolate on the side without
    feeding back), restart (feed the extrapolation back every N
    iterations), online (feed back every iteration), guarded (adaptive
    momentum with the descent guard).
    """
    problem = problem if problem is not None else build_problem(config)
    mode = config.mode
    base = config.algorithm["base"]
    name = f"{base}+{mode}"
    try:
        if base == "cp":
            return _run_cp_experiment(config, problem, name)
        if base == "lbfgs":
            return _run_lbfgs_experiment(config, problem, name)
        if mode == "guarded":
            return _run_guarded_experiment(config, problem, name)
        return _run_first_order_experiment(config, problem, name)
    except NonFiniteIterate:
        raise


def _grad_metrics(problem, x):
    g = problem.gradient(x)
    return problem.value(x), float(np.linalg.norm(g))


def _run_first_order_experiment(config, problem, name):
    alg = config.algorithm
    record_time = config.output.get("record_wall_time", False)
    k = alg["iterations"]
    cap = alg["window"]
    lam = alg["lambda_rel"]
    eta = alg["eta"]
    mode = config.mode
    base = alg["base"]
    op = gradient_operator(problem, 1.0 / problem.L)
    stepper = None
    if base == "nesterov":
        stepper = NesterovStepper(NesterovParams.from_constants(problem.L, problem.mu))

    log = ConvergenceLog(name=name)
    base_log = ConvergenceLog(name=f"{base}+none") if mode == "offline" else None
    window = IterateWindow(cap)
    y = np.zeros(problem.dimension)
    x_prev_stepper = None
    since_restart = 0
    for i in range(1, k + 1):
        elapsed = _timer(record_time)
        x = op.apply(y)
        if not np.all(np.isfinite(x)):
            _abort(log, "non-finite iterate", i)
        window.push(x, y)
        if mode == "online":
            R = residuals(window)
            try:
                coeffs = rna_coefficients(R, lam, eta=eta)
            except SingularSystem:
                coeffs = rna_coefficients(R, 10 * max(lam, DEFAULT_LAMBDA), eta=eta)
            y = extrapolate_point(window, coeffs)
            tracked = y
        elif mode == "restart":
            since_restart += 1
            if since_restart >= cap:
                R = residuals(window)
                try:
                    coeffs = rna_coefficients(R, lam, eta=eta)
                except SingularSystem:
                    coeffs = rna_coefficients(R, 10 * max(lam, DEFAULT_LAMBDA), eta=eta)
                y = extrapolate_point(window, coeffs)
                window = IterateWindow(cap)
                if stepper is not None:
                    stepper = NesterovStepper(stepper.params)
                since_restart = 0
            else:
                if stepper is not None:
                    y, _ = stepper.combine(i, x, y)
                else:
                    y = x
            tracked = y
        else:
            if stepper is not None:
                y, _ = stepper.combine(i, x, y)
            else:
                y = x
            if mode == "offline":
                R = residuals(window)
                try:
                    coeffs = rna_coefficients(R, lam, eta=eta)
                    tracked = extrapolate_point(window, coeffs)
                except SingularSystem:
                    tracked = x
                fb, rb = _grad_metrics(problem, x)
                base_log.append(i, fb, rb, 0.0)
                fe, re_ = _grad_metrics(problem, tracked)
                # the offline estimate is whichever current candidate is better
                if fb < fe:
                    fe, re_ = fb, rb
                log.append(i, fe, re_, elapsed())
                continue
            tracked = x
        f_val, resid = _grad_metrics(problem, tracked)
        log.append(i, f_val, resid, elapsed())
    return ExperimentResult(config=config, log=log, base_log=base_log)


def _run_guarded_experiment(config, problem, name):
    alg = config.algorithm
    record_time = config.output.get("record_wall_time", False)
    params = NesterovParams.from_constants(problem.L, problem.mu)
    state = OnlineState.start(np.zeros(problem.dimension),
                              capacity=alg["window"],
                              lambda_rel=alg["lambda_rel"], eta=alg["eta"])
    log = ConvergenceLog(name=name)
    for i in range(1, alg["iterations"] + 1):
        elapsed = _timer(record_time)
        y, diag = adaptive_nesterov_step(state, params, problem)
        if not np.all(np.isfinite(y)):
            _abort(log, "non-finite iterate", i)
        f_val, resid = _grad_metrics(problem, y)
        log.append(i, f_val, resid, elapsed(), branch=diag["accepted"])
    return ExperimentResult(config=config, log=log)


def _run_lbfgs_experiment(config, problem, name):
    alg = config.algorithm
    record_time = config.output.get("record_wall_time", False)
    from .drivers import LBFGSState, lbfgs_baseline_step

    x = np.zeros(problem.dimension)
    state = LBFGSState(x=x, grad=problem.gradient(x))
    log = ConvergenceLog(name=name)
    for i in range(1, alg["iterations"] + 1):
        elapsed = _timer(record_time)
        state = lbfgs_baseline_step(state, problem, memory=alg["window"])
        if state.converged:
            break
        f_val, resid = _grad_metrics(problem, state.x)
        log.append(i, f_val, resid, elapsed())
    return ExperimentResult(config=config, log=log)


def _run_cp_experiment(config, problem, name):
    alg = config.algorithm
    record_time = config.output.get("record_wall_time", False)
    mode = config.mode
    saddle, params, state = _cp_setup(config, problem)
    cap = alg["window"]
    lam = alg["lambda_rel"]
    eta = alg["eta"]
    window = IterateWindow(cap)
    log = ConvergenceLog(name=name)
    base_log = ConvergenceLog(name="cp+none") if mode == "offline" else None
    prev = state.stacked()
    shapes = (state.y.shape, state.x.shape)
    for i in range(1, alg["iterations"] + 1):
        elapsed = _timer(record_time)
        new_state, params = chambolle_pock_step(state, params, saddle)
        stack = new_state.stacked()
        if not np.all(np.isfinite(stack)):
            _abort(log, "non-finite iterate", i)
        window.push(stack, prev)
        f_base = saddle.primal_value(new_state.x)
        resid = float(np.linalg.norm(stack - prev))
        if mode == "offline":
            try:
                coeffs = rna_coefficients(residuals(window), lam, eta=eta)
                z = extrapolate_point(window, coeffs)
                x_extr = z[state.y.size:].reshape(shapes[1])
                f_extr = saddle.primal_value(x_extr)
            except SingularSystem:
                f_extr = f_base
            base_log.append(i, f_base, resid, 0.0)
            log.append(i, min(f_extr, f_base), resid, elapsed())
        elif mode == "online":
            try:
                coeffs = rna_coefficients(residuals(window), lam, eta=eta)
                z = extrapolate_point(window, coeffs)
            except SingularSystem:
                z = stack
            y_part = z[:state.y.size].reshape(shapes[0])
            x_part = z[state.y.size:].reshape(shapes[1])
            new_state = CPState(y=y_part, x=x_part, x_bar=x_part)
            stack = new_state.stacked()
            log.append(i, saddle.primal_value(new_state.x), resid, elapsed())
        else:
            log.append(i, f_base, resid, elapsed())
        prev = stack
        state = new_state
    return ExperimentResult(config=config, log=log, base_log=base_log)


def _abort(log, reason, i):
    log.aborted = f"{reason} at iteration {i}"
    raise NonFiniteIterate(log.aborted)


# ---------------------------------------------------------------------------
# reference optima and tables

_OPT_CACHE: dict = {}


def reference_optimum(config: ExperimentConfig, problem=None, factor=5):
    """High-accuracy objective reference: a run ``factor`` times longer
    than the configured budget, cached per problem hash."""
    key = config.problem_hash()
    if key in _OPT_CACHE:
        return _OPT_CACHE[key]
    problem = problem if problem is not None else build_problem(config)
    iters = factor * config.iterations
    if config.problem["kind"] == "tv":
        ref_alg = dict(config.algorithm)
        ref_alg.update({"acceleration": "none", "iterations": iters})
        ref_cfg = replace(config, algorithm=ref_alg)
        result = _run_cp_experiment(ref_cfg, problem, "reference")
        value = min(result.log.f)
    else:
        state, _ = run_lbfgs(problem, np.zeros(problem.dimension),
                             min(iters, 2000), tol=1e-14)
        value = problem.value(state.x)
    _OPT_CACHE[key] = value
    return value


def tolerance_table(logs, tolerances, opt_value=None, margin=0.0):
    """First iteration at which each log reaches f - opt <= eps.

    ``logs`` maps names to ConvergenceLog. Without an explicit
    optimal-value estimate the best value across all runs (minus
    ``margin``) is used. Cells are None when the accuracy is never
    reached.
    """
    if isinstance(logs, dict):
        items = list(logs.items())
    else:
        items = [(log.name, log) for log in logs]
    if opt_value is None:
        opt_value = min(min(log.f) for _, log in items) - margin
    table = {}
    for name, log in items:
        for eps in tolerances:
            hit = None
            for i, f_val in zip(log.iters, log.f):
                if f_val - opt_value <= eps:
                    hit = i
                    break
            table[(name, eps)] = hit
    return table


def format_table(table, tolerances, names):
    """Markdown table with N/A for unreached accuracies."""
    header = "| algorithm | " + " | ".join(f"eps={t:g}" for t in tolerances) + " |"
    sep = "|" + "---|" * (len(tolerances) + 1)
    lines = [header, sep]
    for name in names:
        cells = []
        for eps in tolerances:
            hit = table.get((name, eps))
            cells.append("N/A" if hit is None else str(hit))
        lines.append(f"| {name} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def emit_reports(results, boundaries, out_dir):
    """Write convergence CSVs, boundary CSVs and a summary table.

    Filenames derive from the config hash so re-running the same
    configuration overwrites its own files deterministically.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    written = []
    for result in results:
        fname = f"run_{result.config.config_hash()}.csv"
        path = os.path.join(out_dir, fname)
        write_log_csv(result.log, path)
        written.append(path)
        if result.base_log is not None:
            bpath = os.path.join(out_dir, f"run_{result.config.config_hash()}_base.csv")
            write_log_csv(result.base_log, bpath)
            written.append(bpath)
    for name, boundary in (boundaries or {}).items():
        path = os.path.join(out_dir, f"range_{name}.csv")
        numrange.write_boundary_csv(boundary, path)
        written.append(path)
    summary = os.path.join(out_dir, "summary.md")
    with open(summary, "w", encoding="ascii") as fh:
        fh.write("| run | iterations | final f | final resid |\n")
        fh.write("|---|---|---|---|\n")
        for result in results:
            log = result.log
            if log.iters:
                fh.write(f"| {log.name} ({result.config.config_hash()}) | "
                         f"{log.iters[-1]} | {log.f[-1]:.6e} | {log.resid[-1]:.6e} |\n")
            else:
                fh.write(f"| {log.name} ({result.config.config_hash()}) | 0 | N/A | N/A |\n")
    written.append(summary)
    return written
