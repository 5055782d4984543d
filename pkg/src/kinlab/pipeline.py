"""Stage pipeline: certify, build family, run ladder, analyze, decay.

Every stage result is cached under ``<out>/cache`` by a hash of exactly
the inputs it depends on, so changing the analysis block never reruns
the viscous solver.  Cached and fresh results are interchangeable: the
report is rendered from the same serialized form either way.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, block_hash
from .decay import iterate_strips, modulus_times, strip_decay_check, time_modulus
from .entropy import KineticFamily, family_arrays, family_from_arrays
from .errors import InvariantFailure, KinlabError, ReportError
from .kinetic import (
    SIDES,
    KineticField,
    default_battery,
    dissipation_functional,
    initial_energy,
    kinetic_residual,
    strip_balance,
)
from .systems import build_system, certify_nonlinearity
from .viscous import CONSERVATION_TOL, RunConfig, RunResult, init_run, riemann_data, uniform_times

log = logging.getLogger(__name__)

STAGES = ("certify", "build-entropies", "run", "analyze", "decay")


@dataclass(frozen=True)
class Table:
    """Columnar table; ``rows`` hold plain Python scalars."""

    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    def as_dict(self) -> dict:
        return {"columns": list(self.columns), "rows": [list(r) for r in self.rows]}

    @classmethod
    def from_dict(cls, d: dict) -> "Table":
        return cls(tuple(d["columns"]), tuple(tuple(r) for r in d["rows"]))


@dataclass
class Bundle:
    """Everything the report writer needs: summaries, tables, checks and hashes."""

    config_name: str
    config_hash: str
    sections: dict = field(default_factory=dict)  # section -> {key: value}
    tables: dict = field(default_factory=dict)  # name -> Table
    checks: dict = field(default_factory=dict)  # name -> bool
    hashes: dict = field(default_factory=dict)  # stage -> hash

    def add(self, stage: str, blob: dict) -> None:
        self.sections.update(blob.get("sections", {}))
        self.tables.update({k: Table.from_dict(v) for k, v in blob.get("tables", {}).items()})
        self.checks.update(blob.get("checks", {}))
        self.hashes[stage] = blob["hash"]


# ----------------------------------------------------------------------------
# cache


class Cache:
    """Flat directory of ``<stage>-<hash>.{json,npz}`` files."""

    def __init__(self, root: Path):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ReportError(f"cannot create cache directory {self.root}: {exc}", stage="cache") from exc

    def path(self, stage: str, key: str, ext: str) -> Path:
        return self.root / f"{stage}-{key}.{ext}"

    def get_json(self, stage: str, key: str) -> dict | None:
        p = self.path(stage, key, "json")
        return json.loads(p.read_text()) if p.exists() else None

    def put_json(self, stage: str, key: str, blob: dict) -> dict:
        p = self.path(stage, key, "json")
        tmp = p.with_suffix(".tmp")
        tmp.write_text(json.dumps(blob, sort_keys=True, indent=1, default=_plain))
        tmp.replace(p)
        return json.loads(p.read_text())


def _plain(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def _table(columns, rows) -> dict:
    return {"columns": list(columns), "rows": [[_plain(v) if not isinstance(v, (str, int, float, bool)) else v for v in r] for r in rows]}


# ----------------------------------------------------------------------------
# context shared by the stages


class Pipeline:
    """Run the stages of one experiment with caching.

    Parameters
    ----------
    cfg : ExperimentConfig
    out : path, optional
        Output directory (defaults to ``cfg.output_dir``); the cache lives
        in its ``cache`` subdirectory.
    """

    def __init__(self, cfg: ExperimentConfig, out: str | Path | None = None):
        self.cfg = cfg
        self.out = Path(out if out is not None else cfg.output_dir)
        self.cache = Cache(self.out / "cache")
        self.system = build_system(cfg.system.name, cfg.system.params)
        self.bundle = Bundle(cfg.name, cfg.config_hash())
        self._family: KineticFamily | None = None
        self._runs: dict[tuple[float, float], RunResult] = {}

    # -- hashes ---------------------------------------------------------------

    def _system_key(self) -> dict:
        return {"system": asdict(self.cfg.system), "version": __version__}

    def family_hash(self) -> str:
        return block_hash({**self._system_key(), "n_xi": self.cfg.entropy.n_xi, "grid": self.cfg.entropy_grid})

    def run_keys(self) -> list[tuple[float, float]]:
        """``(amplitude, epsilon)`` pairs: the viscosity ladder at the reference
        amplitude plus the amplitude ladder at the finest viscosity."""
        r = self.cfg.run
        fine = min(r.epsilons)
        keys = [(r.reference, e) for e in sorted(r.epsilons, reverse=True)]
        keys += [(A, fine) for A in r.amplitudes if A != r.reference]
        return keys

    def run_hash(self, A: float, eps: float) -> str:
        r, a = self.cfg.run, self.cfg.analysis
        d = {
            **self._system_key(),
            "data": [r.far_field_wz, r.shape, r.component, A, r.half_width, r.center, self.cfg.seed],
            "epsilon": eps,
            "T": r.T,
            "snapshots": r.snapshots,
            "cfl": r.cfl,
            "dx_per_epsilon": self.cfg.dx_per_epsilon,
            "modulus": [a.base_times, a.tau0, a.levels],
        }
        return block_hash(d)

    def _analysis_hash(self, stage: str, extra: dict) -> str:
        return block_hash({"stage": stage, "family": self.family_hash(), "analysis": asdict(self.cfg.analysis), **extra})

    # -- stages ---------------------------------------------------------------

    def certify(self) -> dict:
        key = block_hash({**self._system_key(), "n": self.cfg.entropy_grid})
        blob = self.cache.get_json("certify", key)
        if blob is None:
            cert = certify_nonlinearity(self.system, min(self.cfg.entropy_grid, 129))
            d = cert.as_dict()
            blob = self.cache.put_json(
                "certify",
                key,
                {"hash": key, "sections": {"certificate": {"system": self.system.name, **d}}, "checks": {"certificate_valid": d["valid"]}},
            )
        self.bundle.add("certify", blob)
        if not blob["checks"]["certificate_valid"]:
            raise InvariantFailure(f"nonlinearity certificate invalid: {blob['sections']['certificate']}", stage="certify")
        return blob

    def family(self) -> KineticFamily:
        if self._family is not None:
            return self._family
        self.certify()
        key = self.family_hash()
        npz = self.cache.path("family", key, "npz")
        if npz.exists():
            with np.load(npz) as f:
                fam = family_from_arrays(self.system, {k: f[k] for k in f.files})
        else:
            from .entropy import build_kinetic_family

            fam = _staged("build-entropies", build_kinetic_family, self.system, self.cfg.entropy.n_xi, self.cfg.entropy_grid)
            np.savez(npz, **family_arrays(fam))
        k = fam.constants
        blob = {
            "hash": key,
            "sections": {
                "family": {
                    "n_xi": self.cfg.entropy.n_xi,
                    "grid": self.cfg.entropy_grid,
                    "r_bar": k.r_bar,
                    "c_pos": k.c_pos,
                    "c_mono": k.c_mono,
                }
            },
            "checks": {"local_constants_positive": bool(k.r_bar > 0 and k.c_pos > 0 and k.c_mono > 0)},
        }
        self.bundle.add("build-entropies", blob)
        self._family = fam
        return fam

    def run(self, A: float, eps: float) -> RunResult:
        if (A, eps) in self._runs:
            return self._runs[(A, eps)]
        key = self.run_hash(A, eps)
        npz = self.cache.path("run", key, "npz")
        if npz.exists():
            res = RunResult.load(npz, self.system)
        else:
            res = _staged("run", self._simulate, A, eps)
            res.save(npz)
            res = RunResult.load(npz, self.system)
        self._runs[(A, eps)] = res
        return res

    def _simulate(self, A: float, eps: float) -> RunResult:
        r, a = self.cfg.run, self.cfg.analysis
        data = riemann_data(self.system, r.far_field_wz, A, r.half_width, r.shape, r.component, r.center, self.cfg.seed)
        rc = RunConfig(T=r.T, dx_per_epsilon=self.cfg.dx_per_epsilon, cfl=r.cfl, steps_multiple=r.snapshots)
        run = init_run(self.system, data, eps, rc)
        times = set(uniform_times(r.T, r.snapshots))
        if a.base_times:
            times |= {t for t in modulus_times(a.base_times, a.tau0, a.levels, run.dt) if t <= r.T}
        run.run_to_time(r.T, sorted(times))
        log.info("run A=%g eps=%g: %s", A, eps, run.summary())
        return run.result(uniform_intervals=r.snapshots)

    def runs(self) -> dict:
        rows = []
        checks = {}
        for A, eps in self.run_keys():
            res = self.run(A, eps)
            s = res.summary
            drift = float(s["max_conservation_drift"])
            ok = drift <= CONSERVATION_TOL
            checks[f"conservation[A={A:g},eps={eps:g}]"] = ok
            rows.append([A, eps, res.dx, res.dt, int(s["steps"]), int(res.x.size), res.data.l1_norm, drift, float(s["dissipation_total"])])
            if not ok:
                raise InvariantFailure(f"run A={A:g} eps={eps:g} conservation drift {drift:.3e} > {CONSERVATION_TOL:.0e}", stage="run")
        key = block_hash([self.run_hash(A, e) for A, e in self.run_keys()])
        blob = {
            "hash": key,
            "sections": {"runs": {"count": len(rows), "T": self.cfg.run.T, "shape": self.cfg.run.shape}},
            "tables": {"runs": _table(("amplitude", "epsilon", "dx", "dt", "steps", "cells", "l1_norm", "mass_drift", "dissipation"), rows)},
            "checks": checks,
        }
        self.bundle.add("run", json.loads(json.dumps(blob, default=_plain)))
        return blob

    def analyze(self) -> dict:
        fam = self.family()
        self.runs()
        key = self._analysis_hash("analyze", {"runs": [self.run_hash(A, e) for A, e in self.run_keys()]})
        blob = self.cache.get_json("analyze", key)
        if blob is None:
            blob = self.cache.put_json("analyze", key, _staged("analyze", self._analyze, fam, key))
        self.bundle.add("analyze", blob)
        return blob

    def _battery(self, res: RunResult):
        a = self.cfg.analysis
        return default_battery(
            res,
            span_factor=a.span_factor,
            time_depth=a.time_depth,
            space_depth=a.space_depth,
            xi_depth=a.xi_depth,
            trapezoid_M=a.trapezoid_M,
        )

    def _analyze(self, fam: KineticFamily, key: str) -> dict:
        a, r = self.cfg.analysis, self.cfg.run
        rows, strip_rows = [], []
        per_run = {}
        for A, eps in self.run_keys():
            res = self.run(A, eps)
            bat = self._battery(res)
            fields = [KineticField(fam, res, s, a.sub) for s in SIDES]
            kin = kinetic_residual(fields, bat)
            mu = dissipation_functional(self.system, res, None, bat)
            E0 = initial_energy(res)
            C = kin.mass_proxy / E0 if E0 > 0 else 0.0
            per_run[(A, eps)] = (C, mu.positivity_defect)
            rows.append([A, eps, E0, kin.mass_proxy, C, mu.mass_proxy, mu.positivity_defect, int(kin.pairings.size), bat.battery_id])
            for s in a.strips:
                sb = strip_balance(fields[SIDES.index(s.side)], kin, s.r, s.ell)
                strip_rows.append([A, eps, s.side, s.r, s.ell, sb.f_in, sb.f_out, float(sb.mass_trace.max(initial=0.0)), sb.C_ii, sb.C_iii])
        checks, summary = _analysis_checks(per_run, r, strip_rows)
        return {
            "hash": key,
            "sections": {"analysis": summary},
            "tables": {
                "kinetic": _table(("amplitude", "epsilon", "E0", "kinetic_max", "C_kin", "muE_max", "muE_positivity_defect", "members", "battery"), rows),
                "strip_balance": _table(("amplitude", "epsilon", "side", "r", "ell", "f_in", "f_out", "sup_mass", "C_ii", "C_iii"), strip_rows),
            },
            "checks": checks,
        }

    def decay(self) -> dict:
        fam = self.family()
        self.runs()
        key = self._analysis_hash("decay", {"runs": [self.run_hash(A, e) for A, e in self.run_keys()]})
        blob = self.cache.get_json("decay", key)
        if blob is None:
            blob = self.cache.put_json("decay", key, _staged("decay", self._decay, fam, key))
        self.bundle.add("decay", blob)
        return blob

    def _decay(self, fam: KineticFamily, key: str) -> dict:
        a, r = self.cfg.analysis, self.cfg.run
        fine = min(r.epsilons)
        rows, strip_rows, q_rows, check_rows = [], [], [], []
        checks, summary = {}, {}
        ratios, consts = [], []
        for A in r.amplitudes:
            res = self.run(A, fine)
            fields = {s: KineticField(fam, res, s, a.sub) for s in a.decay_sides}
            rep = iterate_strips(res, fam, sides=a.decay_sides, fields=fields, workers=a.workers)
            d = rep.as_dict()
            rows.append([A, fine, d["l1_norm"], d["l4_integral"], d["l4_tail"], d["tail_exponent"], d["ratio"], d["bound"], d["C_emp"]])
            ratios.append(d["ratio"])
            consts.append(d["C_emp"])
            for side, p in rep.passes.items():
                checks[f"strip_cover[A={A:g},{side}]"] = bool(p.cover_error <= 1e-14 * max(1.0, abs(p.levels[-1]) if p.levels.size else 1.0))
                checks[f"markov_chain[A={A:g},{side}]"] = p.markov_ok
                checks[f"bound_holds[A={A:g},{side}]"] = bool(p.measured <= p.bound * (1 + 1e-9) + 1e-300)
                for s in p.strips:
                    sd = s.as_dict()
                    strip_rows.append([A, side, p.k, s.r, s.ell, s.g4_integral, s.superlevel, s.superlevel_tail, s.C_emp, s.bound_rhs, sd["q_lhs"], sd["q_budget"], sd["q_holds"]])
            for s in a.strips:
                if s.side not in fields:
                    fields[s.side] = KineticField(fam, res, s.side, a.sub)
                sr = strip_decay_check(res, fam, s.r, s.ell, side=s.side, field=fields[s.side])
                check_rows.append([A, s.side, s.r, s.ell, sr.g4_integral, sr.superlevel, sr.C_emp, sr.bound_rhs])
                for t, q in zip(sr.Q_times, sr.Q_trace):
                    q_rows.append([A, s.side, s.r, s.ell, float(t), float(q)])
        pos = [v for v in ratios if v > 0]
        spread = max(pos) / min(pos) if len(pos) > 1 else 1.0
        cpos = [v for v in consts if v > 0]
        summary["ratio_spread"] = spread
        summary["C_emp_spread"] = max(cpos) / min(cpos) if len(cpos) > 1 else 1.0
        checks["decay_ratio_stable_3x"] = bool(spread < 3.0)
        tables = {
            "decay": _table(("amplitude", "epsilon", "l1_norm", "l4_integral", "l4_tail", "tail_exponent", "ratio", "bound", "C_emp"), rows),
            "decay_strips": _table(("amplitude", "side", "k", "r", "ell", "g4_integral", "superlevel", "superlevel_tail", "C_emp", "bound_rhs", "q_lhs", "q_budget", "q_holds"), strip_rows),
        }
        if a.strips:
            tables["strip_checks"] = _table(("amplitude", "side", "r", "ell", "g4_integral", "superlevel", "C_emp", "bound_rhs"), check_rows)
            tables["q_trace"] = _table(("amplitude", "side", "r", "ell", "t", "Q"), q_rows)
        if a.base_times:
            res = self.run(r.reference, fine)
            mod = time_modulus(res, a.base_times, a.modulus_window, a.tau0, a.levels)
            m_rows = []
            l1 = res.data.l1_norm
            for tab in mod:
                for row in tab.rows():
                    m_rows.append([tab.phase, *[float(v) for v in row]])
                tag = f"{tab.phase}@{tab.base_time:.6g}"
                checks[f"modulus_small[{tag}]"] = bool(tab.omega[np.argmin(tab.tau)] < 0.05 * l1) if l1 > 0 else True
                checks[f"modulus_subadditive[{tag}]"] = bool(tab.subadditivity_defect <= 1e-10)
            tables["modulus"] = _table(("phase", "base_time", "tau", "omega", "running_average"), m_rows)
        return {"hash": key, "sections": {"decay": summary}, "tables": tables, "checks": checks}

    def run_all(self, upto: str = "decay") -> Bundle:
        """Execute the stages up to and including ``upto``."""
        if upto not in STAGES:
            raise ValueError(f"unknown stage {upto!r}")
        order = STAGES[: STAGES.index(upto) + 1]
        self.certify()
        if "build-entropies" in order:
            self.family()
        if "run" in order:
            self.runs()
        if "analyze" in order:
            self.analyze()
        if "decay" in order:
            self.decay()
        return self.bundle


def _staged(stage: str, fn, *args, **kw):
    """Call ``fn`` and tag any library error with the stage name."""
    try:
        return fn(*args, **kw)
    except KinlabError as exc:
        if exc.stage is None:
            exc.stage = stage
        raise


def _analysis_checks(per_run: dict, r, strip_rows: list) -> tuple[dict, dict]:
    """Viscosity-ladder and amplitude-ladder comparisons of the analysis constants."""
    checks, summary = {}, {}
    ref = r.reference
    eps_sorted = sorted(r.epsilons, reverse=True)
    C_eps = [per_run[(ref, e)][0] for e in eps_sorted]
    defects = [per_run[(ref, e)][1] for e in eps_sorted]
    pos = [c for c in C_eps if c > 0]
    if len(pos) > 1:
        summary["C_kin_eps_spread"] = max(pos) / min(pos)
        checks["C_kin_eps_within_2x"] = bool(max(pos) / min(pos) < 2.0)
    if len(defects) > 1:
        checks["muE_defect_monotone"] = bool(all(b < a for a, b in zip(defects, defects[1:])))
    fine = min(r.epsilons)
    half = ref / 2
    if (half, fine) in per_run and per_run[(ref, fine)][0] > 0:
        dev = abs(per_run[(half, fine)][0] / per_run[(ref, fine)][0] - 1)
        summary["C_kin_halving_deviation"] = dev
        checks["C_kin_halving_within_25pct"] = bool(dev < 0.25)
    # strip constants across the amplitude ladder (finest viscosity)
    by_strip: dict = {}
    for A, eps, side, rr, ell, *_, cii, ciii in strip_rows:
        if eps == fine:
            by_strip.setdefault((side, rr, ell), []).append((A, cii, ciii))
    for (side, rr, ell), vals in sorted(by_strip.items()):
        if len(vals) < 2:
            continue
        for j, name in ((1, "C_ii"), (2, "C_iii")):
            vs = [v[j] for v in vals]
            m = float(np.mean(vs))
            dev = max(abs(v / m - 1) for v in vs) if m > 0 else 0.0
            checks[f"{name}_linear[{side},r={rr:g},ell={ell:g}]"] = bool(dev <= 0.25)
    return checks, summary


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None, upto: str = "decay") -> Bundle:
    """Run every stage up to ``upto`` with caching and return the report bundle."""
    return Pipeline(cfg, out).run_all(upto)
