"""Config-driven experiment runner with checksummed manifests.

A run turns an :class:`ExperimentConfig` (JSON, versioned schema) into CSV/JSON
artifacts plus ``manifest.json`` in the output directory.  Runs are
deterministic given the config; only ``wall_time`` differs between repeats.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from decaylab import __version__

SCHEMA_VERSION = 1
SCENARIOS = ("theta-check", "cutoff", "kernel-verify", "resolvent-sweep", "born-series", "lap-check",
             "wave-decay")
OUT_ENV = "DECAYLAB_OUT"


class ConfigError(ValueError):
    """Config does not match the scenario schema."""


class ScenarioError(RuntimeError):
    """A module error raised inside a scenario pipeline."""

    def __init__(self, scenario, exc):
        super().__init__(f"{scenario}: {type(exc).__name__}: {exc}")
        self.scenario = scenario
        self.cause = exc


_DEFAULTS = {
    "theta-check": {"r_max": 200.0, "n_r": 400},
    "cutoff": {"k_max": 12},
    "kernel-verify": {"d": 3, "k_max": 6, "lams": [0.25, 0.5, 1.0], "r_min": 0.1, "r_max": 50.0, "n_r": 200},
    "resolvent-sweep": {"lams": [1.0, 2.0], "ells": [0, 1], "ks": [0, 1, 2], "mode": "radiation", "eps": 0.0},
    "born-series": {"z": 1.0, "offsets": [-0.05, 0.05], "tol": 1e-7},
    "lap-check": {"lam": 1.0, "eps": [1e-1, 1e-2, 1e-3, 1e-4], "s": 1.0},
    "wave-decay": {"T": 280.0, "n_t": 561, "delta": 0.5, "center": 2.0, "width": 1.0, "amplitude": 1.0,
                   "s_min": 0.4},
}

_GRID_DEFAULT = {"geometry": "radial", "n": 400, "R": 40.0, "d": 3, "a": 0.0}
# long traces need the wall far away (reflection returns at t ~ 2R)
_SCENARIO_GRID = {"wave-decay": {"n": 3000, "R": 400.0}}
_PROFILE_DEFAULT = {"kind": "exp_power", "s": 0.5, "beta": 0.0, "c": 1.0, "C": 1.0}
_POT_DEFAULT = {"kind": "exponential", "v_amp": 0.5, "b_amp": 0.4, "case": "a"}


@dataclass
class ExperimentConfig:
    scenario: str
    profile: dict = field(default_factory=lambda: dict(_PROFILE_DEFAULT))
    grid: dict = field(default_factory=dict)
    potential: dict = field(default_factory=lambda: dict(_POT_DEFAULT))
    sweep: dict = field(default_factory=dict)
    seed: int = 0
    out_dir: str = "runs"
    schema: int = SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.schema != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema version {self.schema}")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")
        for name in ("profile", "grid", "potential", "sweep"):
            if not isinstance(getattr(self, name), dict):
                raise ConfigError(f"{name} must be a mapping")
        unknown = set(self.sweep) - set(_DEFAULTS[self.scenario])
        if unknown:
            raise ConfigError(f"unknown sweep keys for {self.scenario}: {sorted(unknown)}")
        if self.profile.get("kind", "exp_power") not in ("exp_power", "exp_power_log"):
            raise ConfigError("profile kind must be exp_power or exp_power_log")

    def params(self):
        """Sweep parameters with scenario defaults filled in."""
        p = copy.deepcopy(_DEFAULTS[self.scenario])
        p.update(self.sweep)
        return p

    def to_dict(self):
        return {"schema": self.schema, "scenario": self.scenario, "profile": self.profile, "grid": self.grid,
                "potential": self.potential, "sweep": self.sweep, "seed": self.seed, "out_dir": self.out_dir}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        allowed = {"schema", "scenario", "profile", "grid", "potential", "sweep", "seed", "out_dir"}
        extra = set(d) - allowed
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "scenario" not in d:
            raise ConfigError("missing scenario")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")

    def content_hash(self):
        """sha256 of the canonical JSON (key order independent; out_dir excluded)."""
        d = self.to_dict()
        d.pop("out_dir")
        canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    scenario: str
    config_hash: str
    version: str
    wall_time: float
    checks: dict
    artifacts: dict  # file name (relative to the run dir) -> sha256
    summary: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(self.checks.values())

    def to_dict(self):
        return {"scenario": self.scenario, "config_hash": self.config_hash, "version": self.version,
                "wall_time": self.wall_time, "checks": self.checks, "artifacts": self.artifacts,
                "summary": self.summary, "passed": self.passed}

    def write(self, run_dir):
        Path(run_dir, "manifest.json").write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, path):
        d = json.loads(Path(path).read_text())
        d.pop("passed", None)
        return cls(**d)

    def verify(self, run_dir):
        """Every listed artifact exists with a matching checksum."""
        for name, digest in self.artifacts.items():
            p = Path(run_dir, name)
            if not p.is_file() or sha256_file(p) != digest:
                return False
        return True


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def _profile(cfg):
    from decaylab import gevrey

    p = {**_PROFILE_DEFAULT, **cfg.profile}
    if p["kind"] == "exp_power_log" or p.get("beta", 0.0):
        return gevrey.ThetaProfile.exp_power_log(p["s"], p["beta"], p["c"], p["C"])
    return gevrey.ThetaProfile.exp_power(p["s"], p["c"], p["C"])


def _operator(cfg):
    from decaylab.operators import Grid, PotentialSpec, build_operator

    g = {**_GRID_DEFAULT, **_SCENARIO_GRID.get(cfg.scenario, {}), **cfg.grid}
    grid = Grid(g["geometry"], int(g["n"]), float(g["R"]), int(g["d"]), float(g["a"]))
    prof = _profile(cfg)
    p = {**_POT_DEFAULT, **cfg.potential}
    kind = p["kind"]
    if kind == "free":
        pot = PotentialSpec.free(prof, p.get("case", "a"))
    elif kind == "exponential":
        pot = PotentialSpec.exponential(prof, p.get("v_amp", 0.5), p.get("b_amp", 0.0), p.get("b_center", 2.0),
                                        p.get("b_width", 1.0), p.get("case", "a"))
    elif kind == "well":
        pot = PotentialSpec.well(prof, p["depth"], p.get("width", 1.0), p.get("case", "a"))
    else:
        raise ConfigError(f"unknown potential kind {kind!r}")
    return build_operator(grid, pot)


# ---------------------------------------------------------------------------
# scenarios: each returns (checks, summary) and writes files into run_dir
# ---------------------------------------------------------------------------


def _theta_check(cfg, run_dir):
    from decaylab import gevrey

    p = cfg.params()
    prof = _profile(cfg)
    r = np.linspace(0.0, p["r_max"], int(p["n_r"]))
    rep = gevrey.check_theta_conditions(prof, r)
    _write_json(run_dir / "theta.json", {"profile": prof.to_record(), **rep.to_record()})
    return {"theta_conditions": not rep.violation}, {"C_tilde": rep.C_tilde, "best_C1": rep.best_C1,
                                                     "best_C2": rep.best_C2}


def _cutoff(cfg, run_dir):
    from decaylab import gevrey

    p = cfg.params()
    s = float(cfg.profile.get("s", 0.5))
    cut = gevrey.build_cutoff(s)
    rows = []
    for k in range(int(p["k_max"]) + 1):
        sup = gevrey.zeta_derivative_sup(cut, k)
        rows.append((k, sup, sup ** (1 / (k + 1)) / math.exp(math.lgamma(k + 1) / s / (k + 1))))
    _write_csv(run_dir / "cutoff_derivs.csv", ["k", "sup_abs_deriv", "normalised"], rows)
    _write_json(run_dir / "cutoff.json", cut.to_record())
    norm = np.array([r[2] for r in rows])
    return {"finite": bool(np.all(np.isfinite(norm)))}, {"a": cut.a, "I": cut.I,
                                                          "ratio": float(norm.max() / norm.min())}


def _kernel_verify(cfg, run_dir):
    from decaylab import freekernel

    p = cfg.params()
    r = np.geomspace(p["r_min"], p["r_max"], int(p["n_r"]))
    rep = freekernel.kernel_deriv_bound_check(int(p["d"]), int(p["k_max"]), p["lams"], r)
    _write_csv(run_dir / "kernel_constants.csv", ["k", "C_k"], list(enumerate(rep.constants)))
    freekernel.dump_kernel_csv(run_dir / "kernel.csv", int(p["d"]), p["lams"][-1], r)
    return {"deriv_bound": rep.ok}, {"max_C": rep.constant}


def _resolvent_sweep(cfg, run_dir):
    from decaylab import operators as O

    p = cfg.params()
    op = _operator(cfg)
    rows = []
    for lam in p["lams"]:
        for ell in p["ells"]:
            for k in p["ks"]:
                eps = p["eps"] or None
                r = O.weighted_resolvent_deriv_norm(op, lam, ell, k, mode=p["mode"], eps=eps, seed=cfg.seed,
                                                    method="lanczos")
                rows.append({"lambda": float(lam), "eps": float(p["eps"]), "ell": int(ell), "k": int(k),
                             "log_norm": float(r.log_value), "bc_mode": p["mode"], "case": op.pot.case})
    O.write_sweep_csv(run_dir / "sweep.csv", rows)
    finite = all(math.isfinite(r["log_norm"]) for r in rows)
    return {"finite_norms": finite}, {"n_rows": len(rows)}


def _born_series(cfg, run_dir):
    from decaylab import born

    p = cfg.params()
    op = _operator(cfg)
    z = float(p["z"])
    gamma = born.auto_gamma(op, z)
    rows, worst = [], 0.0
    for off in p["offsets"]:
        lam = z + max(-gamma, min(gamma, off))
        res = born.born_series_assemble(op, lam, z, gamma)
        err = res.compare(born.direct_weighted_resolvent(op, lam))
        worst = max(worst, err)
        rows.append((lam, res.contraction, err))
    _write_csv(run_dir / "born.csv", ["lambda", "contraction", "rel_error"], rows)
    return {"matches_direct": worst <= p["tol"]}, {"gamma": gamma, "max_rel_error": worst}


def _lap_check(cfg, run_dir):
    from decaylab import identities

    p = cfg.params()
    op = _operator(cfg)
    rep = identities.lap_continuity_check(op, p["lam"], p["eps"], p["s"], seed=cfg.seed)
    _write_csv(run_dir / "lap.csv", ["eps", "diff"], list(zip(rep.eps[1:], rep.diffs)))
    return {"holder": rep.holder_ok}, {"theta": rep.theta, "C": rep.C, "limit_error": rep.limit_error}


def _wave_decay(cfg, run_dir):
    from decaylab import gevrey, operators as O, wave

    p = cfg.params()
    op = _operator(cfg)
    dec = O.decompose(op)
    r = op.grid.nodes
    f1 = p["amplitude"] * np.exp(-(((r - p["center"]) / p["width"]) ** 2))
    f2 = np.zeros_like(f1)
    cut = gevrey.build_cutoff(0.5) if p["delta"] > 0 else None
    times = np.linspace(0.0, p["T"], int(p["n_t"]))
    series = wave.propagate(dec, f1, f2, times, p["delta"], cut)
    trace = wave.energy_trace(series, op)
    trace.write_csv(run_dir / "trace.csv")
    prof = _profile(cfg)
    seq = gevrey.WeightSequence.gevrey(prof.s, K=24)
    fit = wave.fit_decay(trace, seq, prof)
    fit.dump_json(run_dir / "fit.json")
    if fit.skipped:
        return {}, {"skipped": fit.skipped}
    mask = trace.times >= 1.0
    env = fit.envelope(seq, trace.times[mask])
    holds = bool(np.all(np.sqrt(trace.E[mask]) <= env * (1 + 1e-9)) or fit.saturated)
    return ({"envelope": holds, "s_hat": bool(fit.s_hat >= p["s_min"])},
            {"c0": fit.c0, "C0": fit.C0, "s_hat": fit.s_hat})


_RUNNERS = {"theta-check": _theta_check, "cutoff": _cutoff, "kernel-verify": _kernel_verify,
            "resolvent-sweep": _resolvent_sweep, "born-series": _born_series, "lap-check": _lap_check,
            "wave-decay": _wave_decay}


def resolve_out_dir(cfg, out=None):
    """``--out`` beats ``DECAYLAB_OUT`` beats the config entry."""
    return Path(out or os.environ.get(OUT_ENV) or cfg.out_dir)


def run_experiment(cfg: ExperimentConfig, out=None) -> RunManifest:
    """Run the scenario into ``<out>/<scenario>-<hash12>/`` and write the manifest."""
    cfg.validate()
    run_dir = resolve_out_dir(cfg, out) / f"{cfg.scenario}-{cfg.content_hash()[:12]}"
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg.save(run_dir / "config.json")
    t0 = time.perf_counter()
    np.random.seed(cfg.seed)
    try:
        checks, summary = _RUNNERS[cfg.scenario](cfg, run_dir)
    except (ConfigError, ScenarioError):
        raise
    except Exception as exc:
        raise ScenarioError(cfg.scenario, exc) from exc
    wall = time.perf_counter() - t0
    files = sorted(p for p in run_dir.iterdir() if p.is_file() and p.name != "manifest.json")
    artifacts = {p.name: sha256_file(p) for p in files}
    summary = {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in summary.items()}
    checks = {k: bool(v) for k, v in checks.items()}
    summary = json.loads(json.dumps(summary, default=_json_default))
    man = RunManifest(cfg.scenario, cfg.content_hash(), __version__, wall, checks, artifacts, summary)
    man.write(run_dir)
    return man


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def collect_manifests(root):
    return sorted(Path(root).rglob("manifest.json"))


def report(root, csv_path=None):
    """Summary rows over every manifest below ``root``; returns (rows, text, all_passed).

    Read-only unless ``csv_path`` is given.
    """
    rows = []
    for mp in collect_manifests(root):
        m = RunManifest.load(mp)
        intact = m.verify(mp.parent)
        failed = [k for k, v in m.checks.items() if not v]
        rows.append({"run": str(mp.parent.relative_to(root)), "scenario": m.scenario,
                     "passed": m.passed and intact, "intact": intact, "failed_checks": ";".join(failed),
                     "wall_time": m.wall_time})
    if csv_path is not None:
        cols = ["run", "scenario", "passed", "intact", "failed_checks", "wall_time"]
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, cols)
            w.writeheader()
            w.writerows(rows)
    width = max([len(r["run"]) for r in rows] + [3])
    lines = [f"{'run':<{width}}  {'scenario':<16} status"]
    for r in rows:
        status = "PASS" if r["passed"] else "FAIL"
        extra = "" if r["intact"] else " (checksum mismatch)"
        if r["failed_checks"]:
            extra += f" [{r['failed_checks']}]"
        lines.append(f"{r['run']:<{width}}  {r['scenario']:<16} {status}{extra}")
    ok = bool(rows) and all(r["passed"] for r in rows)
    return rows, "\n".join(lines), ok
