"""Scenario files: parsing, schema checks, execution and report emission.

A scenario is a TOML file with the sections ``scenario``, ``coefficients``,
``switching`` (optional), ``class`` (optional), ``domain``, ``controls``,
``validation``, ``output`` and an array of ``experiments``.  Unknown keys
are errors.  See the README for the field reference.
"""
from __future__ import annotations

import dataclasses
import json
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from . import harness
from .analytics import Ball
from .engine import SimControls, simulate_switched, write_trace
from .io_utils import atomic_write_csv, atomic_write_json, dumps_json
from .operator_model import ClassParamsError, SamplingSpec, validate_class
from .presets import ConstQ, build_preset
from .rng import RngStream, derive_seed

BUNDLED_DIR = Path(__file__).parent / "scenarios"
REPORT_NAME = "report.json"
META_NAME = "run_meta.json"

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_INVALID = 2


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario file."""


class ValidationFailure(RuntimeError):
    """The coefficients fail the class conditions."""

    def __init__(self, message: str, report: Optional[dict] = None):
        super().__init__(message)
        self.report = report


_CONTROL_KEYS = {"dt", "delta", "max_time", "boundary_policy", "theta3", "block_size"}

_SECTIONS = {
    "scenario": {"id": None, "seed": None, "d": None, "levels": None},
    "coefficients": {"preset": None, "params": {}},
    "switching": {"Q": None, "c0": None},
    "class": None,  # ClassParams fields, checked separately
    "domain": {"center": None, "radius": 1.0},
    "controls": {"n": 100_000, **{k: None for k in _CONTROL_KEYS}},
    "validation": {"override": False, "n_points": 10_000},
    "output": {"dir": None, "trace_max_paths": 0},
    "experiments": None,
}

_CLASS_KEYS = {"theta1", "theta2", "theta3", "theta4", "theta5", "gamma", "beta", "c1", "c0", "vartheta", "holder_c"}

# per-kind options with defaults; "n" and "controls" are accepted everywhere
_KINDS = {
    "exit_time": {"start": None, "level": 0, "mode": "full", "oracle": None},
    "preswitch_identity": {"start": None, "level": 0, "alphas": [0.0, 1.0], "phi": None, "rate": None,
                           "in_domain": False},
    "representation": {"start": None, "levels": None, "phi": None, "nodes_per_radius": 2, "n_lattice": None},
    "levy_exit": {"start": None, "level": 0, "h": None, "nodes_per_radius": 24},
    "operator_norm": {"radii": [0.25, 0.5, 1.0], "phi": None, "probe_fraction": 0.5, "terms": 4,
                      "nodes_per_radius": 2},
    "exit_moment": {"radii": [0.1, 0.15, 0.2, 0.3], "level": 0, "start_fractions": [0.0], "oracle": None},
    "green_sandwich": {"radii": [0.15, 0.3], "level": 0, "start_fraction": 0.0, "bins_per_radius": 8,
                       "max_pairs": 14, "expect_unity": False},
    "harnack": {"radii": [0.1, 0.2], "phi": None, "rho": 0.125},
    "holder": {"phi": None, "separations": None},
    "scaling": {"lam": 0.5, "start": None, "level": 0},
    "analytics": {"radius": 1.0, "sweeps": 2, "lam": 0.5, "n_pairs": 1000},
    "combinatorics": {"s": 0.1, "theta5": None},
}

_CHOICES = {
    "exit_time": {"mode": ("full", "pre-switch"), "oracle": (None, "brownian")},
}

_TOLERANCES = {
    "exit_time": {"z", "stderr_max"},
    "preswitch_identity": {"z"},
    "representation": {"z"},
    "levy_exit": {"z"},
    "operator_norm": {"gq_max", "rho_hat_max"},
    "exit_moment": {"r2_min", "c_rel", "oracle_z"},
    "green_sandwich": {"unity_z", "stability"},
    "harnack": {"bound", "slack_z", "stability_factor", "noise_z"},
    "holder": {"slope_min", "slope_max", "min_pairs", "signif_z"},
    "scaling": {"z_max"},
    "analytics": {"stability", "scaling"},
    "combinatorics": {"h_max"},
}

_PHI_TYPES = {
    "constant": (harness.ConstantData, {"value"}),
    "linear": (harness.LinearBoundaryData, {"offset", "slope", "axis", "levels"}),
    "half_space": (harness.HalfSpaceIndicator, {"axis"}),
}


def _check_keys(table: dict, allowed, where: str):
    if not isinstance(table, dict):
        raise ScenarioError(f"{where}: expected a table")
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ScenarioError(f"{where}: unknown key(s) {unknown}; allowed: {sorted(allowed)}")


def build_phi(spec: Optional[dict], where: str = "phi"):
    """Boundary data from ``{type = "linear" | "constant" | "half_space", ...}``."""
    if spec is None:
        return harness.ConstantData(1.0)
    _check_keys(spec, {"type"} | set().union(*(keys for _, keys in _PHI_TYPES.values())), where)
    kind = spec.get("type", "constant")
    if kind not in _PHI_TYPES:
        raise ScenarioError(f"{where}: unknown type '{kind}'; known: {sorted(_PHI_TYPES)}")
    cls, keys = _PHI_TYPES[kind]
    kw = {k: v for k, v in spec.items() if k != "type"}
    _check_keys(kw, keys, where)
    if "levels" in kw and kw["levels"] is not None:
        kw["levels"] = tuple(int(v) for v in kw["levels"])
    return cls(**kw)


@dataclass
class Experiment:
    id: str
    kind: str
    options: dict
    n: Optional[int] = None
    controls: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"id": self.id, "kind": self.kind, **self.options, "n": self.n, "tolerances": dict(self.tolerances)}
        if self.controls:
            out["controls"] = dict(self.controls)
        return out


@dataclass
class Scenario:
    """Fully resolved scenario; ``to_dict`` round-trips through ``from_dict``."""

    id: str
    seed: int
    d: int
    levels: int
    preset: str
    params: dict
    switching: dict
    class_overrides: dict
    domain: Ball
    n: int
    controls: dict
    validation: dict
    output: dict
    experiments: list

    @classmethod
    def from_dict(cls, raw: dict) -> "Scenario":
        _check_keys(raw, _SECTIONS, "top level")
        for name, keys in _SECTIONS.items():
            if keys is not None and name in raw:
                _check_keys(raw[name], keys, f"[{name}]")
        sc = raw.get("scenario")
        if sc is None:
            raise ScenarioError("[scenario] section is required")
        for key in ("id", "seed", "d"):
            if sc.get(key) is None:
                raise ScenarioError(f"[scenario] {key} is required")
        seed = sc["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ScenarioError("[scenario] seed must be a non-negative integer")
        d = int(sc["d"])
        co = raw.get("coefficients") or {}
        if not co.get("preset"):
            raise ScenarioError("[coefficients] preset is required")
        params = dict(co.get("params") or {})
        sw = {k: v for k, v in (raw.get("switching") or {}).items() if v is not None}
        klass = dict(raw.get("class") or {})
        _check_keys(klass, _CLASS_KEYS, "[class]")
        dom = raw.get("domain") or {}
        radius = float(dom.get("radius", 1.0))
        center = dom.get("center") or [0.0] * d
        if len(center) != d:
            raise ScenarioError(f"[domain] center must have {d} coordinates")
        try:
            ball = Ball(tuple(float(v) for v in center), radius)
        except ValueError as exc:
            raise ScenarioError(f"[domain] {exc}") from None
        ctl = dict(raw.get("controls") or {})
        n = int(ctl.pop("n", 100_000))
        ctl = {k: v for k, v in ctl.items() if v is not None}
        try:
            SimControls(**ctl)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"[controls] {exc}") from None
        val = {**_SECTIONS["validation"], **(raw.get("validation") or {})}
        out = {**_SECTIONS["output"], **(raw.get("output") or {})}
        exps = []
        seen = set()
        for k, e in enumerate(raw.get("experiments") or []):
            exps.append(_parse_experiment(e, k, seen))
        if not exps:
            raise ScenarioError("at least one [[experiments]] entry is required")
        levels = sc.get("levels")
        return cls(str(sc["id"]), int(seed), d, None if levels is None else int(levels), str(co["preset"]), params,
                   sw, klass, ball, n, ctl, val, out, exps)

    def to_dict(self) -> dict:
        return {
            "scenario": {"id": self.id, "seed": self.seed, "d": self.d, "levels": self.levels},
            "coefficients": {"preset": self.preset, "params": dict(self.params)},
            "switching": dict(self.switching),
            "class": dict(self.class_overrides),
            "domain": {"center": [float(v) for v in self.domain.center], "radius": float(self.domain.radius)},
            "controls": {"n": self.n, **self.controls},
            "validation": dict(self.validation),
            "output": dict(self.output),
            "experiments": [e.to_dict() for e in self.experiments],
        }

    def with_seed(self, seed: int) -> "Scenario":
        return dataclasses.replace(self, seed=int(seed))

    def build(self):
        """Coefficients and class constants; raises ValidationFailure on bad constants."""
        try:
            coeffs, params = build_preset(self.preset, self.d, **self.params)
            if self.switching:
                coeffs, params = _apply_switching(coeffs, params, self.switching)
            if self.class_overrides:
                params = dataclasses.replace(params, **self.class_overrides)
        except ClassParamsError as exc:
            raise ValidationFailure(f"class constants rejected: {exc}") from None
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"[coefficients] {exc}") from None
        if self.levels is not None and self.levels != coeffs.m:
            raise ScenarioError(f"[scenario] levels = {self.levels} but preset '{self.preset}' has {coeffs.m}")
        return coeffs, params


def _parse_experiment(e: dict, k: int, seen: set) -> Experiment:
    where = f"experiments[{k}]"
    if not isinstance(e, dict):
        raise ScenarioError(f"{where}: expected a table")
    kind = e.get("kind")
    if kind not in _KINDS:
        raise ScenarioError(f"{where}: unknown kind '{kind}'; known: {sorted(_KINDS)}")
    allowed = {"id", "kind", "n", "controls", "tolerances"} | set(_KINDS[kind])
    _check_keys(e, allowed, where)
    eid = str(e.get("id") or f"{kind}_{k}")
    if eid in seen:
        raise ScenarioError(f"{where}: duplicate experiment id '{eid}'")
    seen.add(eid)
    tol = dict(e.get("tolerances") or {})
    _check_keys(tol, _TOLERANCES[kind], f"{where}.tolerances")
    for key, v in tol.items():
        if v is not None and not (isinstance(v, (int, float)) and v > 0):
            raise ScenarioError(f"{where}.tolerances.{key} must be positive")
    ctl = dict(e.get("controls") or {})
    _check_keys(ctl, _CONTROL_KEYS, f"{where}.controls")
    opts = {key: e.get(key, default) for key, default in _KINDS[kind].items()}
    for key, allowed_values in _CHOICES.get(kind, {}).items():
        if opts[key] not in allowed_values:
            raise ScenarioError(f"{where}.{key}: expected one of {allowed_values}, got {opts[key]!r}")
    for key in ("phi", "h"):
        if key in opts:
            build_phi(opts[key], f"{where}.{key}")
    n = e.get("n")
    return Experiment(eid, kind, opts, None if n is None else int(n), ctl, tol)


def _apply_switching(coeffs, params, sw: dict):
    q = sw.get("Q")
    if q is not None:
        q = np.asarray(q, dtype=float)
        if q.shape != (coeffs.m, coeffs.m):
            raise ScenarioError(f"[switching] Q must be {coeffs.m}x{coeffs.m}")
        coeffs = dataclasses.replace(coeffs, Q=ConstQ(q), Q_const=q, Q0=q.copy())
        params = dataclasses.replace(params, theta5=max(float(np.max(np.abs(q))), 1e-12))
    if sw.get("c0") is not None:
        params = dataclasses.replace(params, c0=float(sw["c0"]))
    return coeffs, params


# ---------------------------------------------------------------------------
# loading


def resolve_path(path) -> Path:
    """A scenario path, falling back to the bundled scenarios by file name."""
    p = Path(path)
    if p.exists():
        return p
    bundled = BUNDLED_DIR / p.name
    if bundled.exists():
        return bundled
    raise ScenarioError(f"scenario file not found: {path}")


def load_scenario(path) -> Scenario:
    """Parse a TOML scenario, or the ``resolved_scenario`` embedded in a JSON report."""
    p = resolve_path(path)
    text = p.read_text(encoding="utf-8")
    if p.suffix == ".json":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{p}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        raw = raw.get("resolved_scenario", raw)
        raw = _drop_nulls(raw)
    else:
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ScenarioError(f"{p}: {exc}") from None
    return Scenario.from_dict(raw)


def _drop_nulls(obj):
    # JSON null stands for an absent optional key
    if isinstance(obj, dict):
        return {k: _drop_nulls(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, list):
        return [_drop_nulls(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# execution


def run_validation(scenario: Scenario, coeffs, params) -> dict:
    sampling = SamplingSpec.for_domain(scenario.domain, int(scenario.validation["n_points"]))
    rep = validate_class(coeffs, params, sampling, seed=scenario.seed)
    return rep.to_dict()


def _merged_controls(scenario: Scenario, exp: Experiment) -> dict:
    return {**scenario.controls, **exp.controls}


def run_experiment(scenario: Scenario, exp: Experiment, coeffs, params, workers: int = 1) -> harness.ProbeReport:
    o = exp.options
    n = exp.n or scenario.n
    ctl = _merged_controls(scenario, exp)
    seed = derive_seed(scenario.seed, exp.id)
    ball = scenario.domain
    center = ball.c
    common = {"tolerances": exp.tolerances, "scenario_id": scenario.id}

    def start(key="start"):
        return center.copy() if o.get(key) is None else np.asarray(o[key], dtype=float)

    k = exp.kind
    if k == "exit_time":
        return harness.exit_time_report(coeffs, ball, start(), o["level"], o["mode"], o["oracle"], n, ctl, seed,
                                        workers=workers, **common)
    if k == "preswitch_identity":
        return harness.preswitch_report(coeffs, o["level"], start(), o["alphas"], build_phi(o["phi"]), o["rate"],
                                        ball if o["in_domain"] else None, n, ctl, seed, workers=workers, **common)
    if k == "representation":
        return harness.representation_report(coeffs, ball, build_phi(o["phi"]), start(), o["levels"], n, ctl, seed,
                                             o["nodes_per_radius"], o["n_lattice"], workers=workers, **common)
    if k == "levy_exit":
        return harness.levy_exit_report(coeffs, ball, build_phi(o["h"]), o["level"], start(), n, ctl, seed,
                                        o["nodes_per_radius"], workers=workers, **common)
    if k == "operator_norm":
        return harness.operator_norm_report(coeffs, o["radii"], build_phi(o["phi"]), center, o["probe_fraction"],
                                            o["terms"], n, ctl, seed, o["nodes_per_radius"], workers=workers,
                                            **common)
    if k == "exit_moment":
        oracle = o["oracle"]
        oracle_c = 1.0 / coeffs.d if oracle == "brownian" else (None if oracle is None else float(oracle))
        return harness.exit_moment_report(coeffs, o["radii"], o["level"], center, o["start_fractions"], n, ctl, seed,
                                          oracle_c=oracle_c, workers=workers, **common)
    if k == "green_sandwich":
        return harness.green_sandwich_report(coeffs, o["level"], o["radii"], center, o["start_fraction"],
                                             o["bins_per_radius"], o["max_pairs"], n, ctl, seed,
                                             expect_unity=o["expect_unity"], workers=workers, **common)
    if k == "harnack":
        return harness.harnack_report(coeffs, o["radii"], build_phi(o["phi"]), center, o["rho"], n, ctl, seed,
                                      workers=workers, **common)
    if k == "holder":
        return harness.holder_report(coeffs, ball, build_phi(o["phi"]), o["separations"], n, ctl, seed,
                                     workers=workers, **common)
    if k == "scaling":
        return harness.scaling_report(coeffs, o["lam"], ball, start(), o["level"], n, ctl, seed, workers=workers,
                                      **common)
    if k == "analytics":
        return harness.analytics_report(coeffs.d, o["radius"], n, o["sweeps"], o["lam"], o["n_pairs"], seed,
                                        **common)
    if k == "combinatorics":
        return harness.combinatorics_report(coeffs, o["s"], o["theta5"], **common)
    raise ScenarioError(f"unknown experiment kind '{k}'")


@dataclass
class RunResult:
    status: int
    report: dict
    out_dir: Path
    files: list


def default_out_dir(scenario: Scenario, env: Optional[dict] = None) -> Path:
    import os

    env = os.environ if env is None else env
    if scenario.output.get("dir"):
        return Path(scenario.output["dir"])
    base = env.get("SWITCHMC_OUT")
    return Path(base or "switchmc_out") / scenario.id


def run_scenario(
    scenario: Scenario,
    workers: int = 1,
    out_dir=None,
    trace: Optional[int] = None,
    argv: Optional[list] = None,
) -> RunResult:
    """Validate, run every experiment and write report.json, CSV tables and run_meta.json.

    The report body depends only on the resolved scenario; run metadata
    (times, worker count, versions) goes to run_meta.json.
    """
    started = time.time()
    out = Path(out_dir) if out_dir is not None else default_out_dir(scenario)
    coeffs, params = scenario.build()
    validation = run_validation(scenario, coeffs, params)
    body = {
        "package_version": __version__,
        "resolved_scenario": scenario.to_dict(),
        "class_params": params.to_dict(),
        "validation": validation,
        "experiments": [],
    }
    files = []
    if not validation["passed"] and not scenario.validation["override"]:
        failed = [k for k, v in validation["conditions"].items() if not v["passed"]]
        body["passed"] = False
        body["status"] = "validation_failed"
        atomic_write_json(out / REPORT_NAME, body)
        raise ValidationFailure(f"class conditions failed: {', '.join(failed)}", body)
    passed = True
    for exp in scenario.experiments:
        rep = run_experiment(scenario, exp, coeffs, params, workers)
        passed &= rep.passed
        body["experiments"].append({"id": exp.id, "kind": exp.kind, **rep.to_dict()})
        sweep = out / f"{exp.id}.csv"
        atomic_write_csv(sweep, ("radius", "statistic", "value", "stderr", "pass"), rep.csv_rows())
        files.append(sweep)
        for radius, table in rep.grids.items():
            path = out / f"{exp.id}_grid_r{radius}.csv"
            xs = tuple(f"x{k}" for k in range(coeffs.d))
            atomic_write_csv(path, ("bin_index", *xs, "value", "stderr"), table)
            files.append(path)
    body["passed"] = bool(passed)
    body["status"] = "passed" if passed else "tolerance_failed"
    atomic_write_json(out / REPORT_NAME, body)
    files.append(out / REPORT_NAME)
    n_trace = scenario.output.get("trace_max_paths", 0) if trace is None else trace
    if n_trace:
        path = out / "trace.txt"
        write_trace(path, trace_paths(scenario, coeffs, int(n_trace)))
        files.append(path)
    meta = {
        "started_unix": started,
        "finished_unix": time.time(),
        "wall_seconds": time.time() - started,
        "workers": workers,
        "out_dir": str(out),
        "argv": list(argv or []),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "package_version": __version__,
    }
    atomic_write_json(out / META_NAME, meta)
    files.append(out / META_NAME)
    return RunResult(EXIT_OK if passed else EXIT_TOLERANCE, body, out, files)


def trace_paths(scenario: Scenario, coeffs, n_paths: int) -> list:
    """Single-path records from the domain centre at level 0, one stream each."""
    ctl = harness.resolve_controls(scenario.domain, scenario.controls)
    seed = derive_seed(scenario.seed, "trace")
    start = (scenario.domain.c.copy(), 0)
    return [simulate_switched(coeffs, scenario.domain, start, ctl, RngStream(seed, k)) for k in range(n_paths)]


def report_body_bytes(report: dict) -> bytes:
    return dumps_json(report).encode("utf-8")
