"""experiments.py

Sweep harness behind the surviving-density tables, the free-packet baseline
and the collapse study.

Bundle layout (output directory):
- summary.csv     one row per (sigma, gamma) in plan order
- series/*.csv    per-run observable series
- reports/*.json  per-run collapse report and status
- manifest.json   plan echo, resolved config and provenance

Per-run files are named by (sigma, gamma, a, config hash); a rerun with the
same config reuses them instead of propagating again.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import platform
import sys
import threading
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy

from .config import RunConfig, config_hash
from .errors import ConfigError, InvalidParameterError, PlanValidationError, TrapError
from .model import initial_packet
from .observables import CollapseReport, ObservableSeries, detect_collapse
from .propagator import PropagatorConfig, evolve


LOGGER = logging.getLogger("qrtrap.experiments")

HERE = os.path.dirname(os.path.abspath(__file__))
DEFAULT_REFERENCE_PATH = os.path.join(HERE, "..", "datasets", "reference_tables.json")
DEFAULT_PLANS_DIR = os.path.join(HERE, "..", "datasets", "plans")

SUMMARY_COLUMNS = ("sigma", "gamma", "a", "tau_end", "rho_s_final", "collapsed", "tau_collapse", "status")
PLAN_KEYS = {"schema", "version", "name", "description", "sigmas", "gammas", "a", "tau_end", "stop_on_collapse", "config"}


@dataclass(frozen=True)
class SweepPlan:
    sigmas: Tuple[float, ...]
    gammas: Tuple[float, ...]
    a: float = 5.0
    tau_end: float = 1.0
    config: RunConfig = field(default_factory=RunConfig)
    output_dir: str = "results"
    name: str = "sweep"
    stop_on_collapse: bool = True

    def __post_init__(self) -> None:
        if not self.sigmas:
            raise PlanValidationError("plan has no sigma values")
        if not self.gammas:
            raise PlanValidationError("plan has no gamma values")
        if not self.tau_end > 0.0:
            raise PlanValidationError(f"tau_end must be positive, got {self.tau_end!r}")
        if not self.a > 0.0:
            raise PlanValidationError(f"a must be positive, got {self.a!r}")
        if any(s < 0.0 for s in self.sigmas):
            raise PlanValidationError(f"sigma values must be >= 0, got {list(self.sigmas)}")
        pairs = self.pairs()
        if len(set(pairs)) != len(pairs):
            raise PlanValidationError("plan lists a (sigma, gamma) pair more than once")

    def pairs(self) -> List[Tuple[float, float]]:
        return [(s, g) for s in self.sigmas for g in self.gammas]

    def run_config(self) -> RunConfig:
        return replace(self.config, a=self.a, tau_end=self.tau_end)

    def to_mapping(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "sigmas": list(self.sigmas),
            "gammas": list(self.gammas),
            "a": self.a,
            "tau_end": self.tau_end,
            "stop_on_collapse": self.stop_on_collapse,
        }


def load_plan(path: str, base: Optional[RunConfig] = None, output_dir: Optional[str] = None) -> SweepPlan:
    """Read a plan JSON file; the plan's "config" block overrides base."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError as e:
        raise PlanValidationError(f"plan file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise PlanValidationError(f"{path}: invalid JSON ({e})") from e

    if not isinstance(raw, dict):
        raise PlanValidationError(f"{path}: plan must be a JSON object")
    if raw.get("schema") != "qrtrap.plan" or raw.get("version") != 1:
        raise PlanValidationError(f"{path}: expected schema qrtrap.plan version 1")
    unknown = sorted(set(raw) - PLAN_KEYS)
    if unknown:
        raise PlanValidationError(f"{path}: unknown plan keys: {', '.join(unknown)}")

    base = base or RunConfig()
    try:
        config = RunConfig.from_mapping(raw.get("config") or {}, base=base)
    except ConfigError as e:
        raise PlanValidationError(f"{path}: {e.message}") from e

    def numbers(key: str, default: Sequence[float]) -> Tuple[float, ...]:
        values = raw.get(key, list(default))
        if not isinstance(values, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in values):
            raise PlanValidationError(f"{path}: {key} must be a list of numbers")
        return tuple(float(v) for v in values)

    def number(key: str, default: float) -> float:
        value = raw.get(key, default)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise PlanValidationError(f"{path}: {key} must be a number")
        return float(value)

    return SweepPlan(
        sigmas=numbers("sigmas", config.sigmas),
        gammas=numbers("gammas", config.gammas),
        a=number("a", config.a),
        tau_end=number("tau_end", config.tau_end),
        config=config,
        output_dir=output_dir or config.output_dir,
        name=str(raw.get("name") or os.path.splitext(os.path.basename(path))[0]),
        stop_on_collapse=bool(raw.get("stop_on_collapse", True)),
    )


def bundled_plan_path(name: str) -> str:
    """Path of a plan shipped under datasets/plans (name with or without .json)."""
    stem = name[:-5] if name.endswith(".json") else name
    return os.path.abspath(os.path.join(DEFAULT_PLANS_DIR, f"{stem}.json"))


# ===== RESULTS =====


@dataclass(frozen=True)
class RunResult:
    sigma: float
    gamma: float
    a: float
    tau_end: float
    rho_s_final: Optional[float]
    collapsed: bool
    tau_collapse: Optional[float]
    status: str
    trigger: Optional[str] = None
    series_path: Optional[str] = None
    report_path: Optional[str] = None

    def summary_row(self) -> List[str]:
        def num(v: Optional[float]) -> str:
            return "" if v is None else format(v, ".17g")

        return [
            num(self.sigma), num(self.gamma), num(self.a), num(self.tau_end),
            num(self.rho_s_final), "true" if self.collapsed else "false",
            num(self.tau_collapse), self.status,
        ]


@dataclass
class ResultBundle:
    output_dir: str
    results: List[RunResult] = field(default_factory=list)
    summary_path: str = ""
    manifest_path: str = ""

    def rho_s(self, sigma: float, gamma: float) -> Optional[float]:
        for r in self.results:
            if r.sigma == sigma and r.gamma == gamma:
                return r.rho_s_final
        raise KeyError((sigma, gamma))

    def summary_rows(self) -> List[Dict[str, Any]]:
        return [
            {k: getattr(r, k) for k in SUMMARY_COLUMNS}
            for r in self.results
        ]

    def series(self, sigma: float, gamma: float) -> ObservableSeries:
        for r in self.results:
            if r.sigma == sigma and r.gamma == gamma and r.series_path:
                return ObservableSeries.from_csv(r.series_path, sigma=sigma, gamma=gamma)
        raise KeyError((sigma, gamma))


def _run_stem(sigma: float, gamma: float, a: float, digest: str) -> str:
    return f"s{sigma:.6g}_g{gamma:.6g}_a{a:.6g}_{digest}"


def _status_of(series: ObservableSeries) -> str:
    if series.terminated == "collapse-suspected":
        return "collapse-terminated"
    if series.terminated == "numerical-blowup":
        return "error: NUMERICAL_BLOWUP"
    return "ok"


def _run_point(
    config_map: Dict[str, Any],
    sigma: float,
    gamma: float,
    output_dir: str,
    stop_on_collapse: bool,
) -> Dict[str, Any]:
    """One sweep point; top-level so it can cross a process boundary."""
    config = RunConfig.from_mapping(config_map)
    stem = _run_stem(sigma, gamma, config.a, config_hash(config))
    if not stop_on_collapse:
        stem += "_cont"
    series_path = os.path.join(output_dir, "series", stem + ".csv")
    report_path = os.path.join(output_dir, "reports", stem + ".json")

    if os.path.exists(series_path) and os.path.exists(report_path):
        with open(report_path, "r", encoding="utf-8") as f:
            cached = json.load(f)
        LOGGER.warning("Reusing cached run %s", stem)
        return cached

    result: Dict[str, Any] = {
        "sigma": sigma, "gamma": gamma, "a": config.a, "tau_end": config.tau_end,
        "rho_s_final": None, "collapsed": False, "tau_collapse": None,
        "status": "ok", "trigger": None,
        "series_path": series_path, "report_path": report_path,
    }
    try:
        prop = config.propagator_config(sigma=sigma, gamma=gamma)
        series = evolve(
            initial_packet(config.a, prop.grid), prop, config.tau_end,
            sample_every=config.sample_every, stop_on_collapse=stop_on_collapse,
        )
        report = detect_collapse(series, config.thresholds()) if len(series) >= 2 else CollapseReport(False)
        series.to_csv(series_path)
        result.update(
            rho_s_final=series.final_rho_s,
            collapsed=report.collapsed,
            tau_collapse=report.tau_collapse,
            trigger=report.trigger,
            status=_status_of(series),
        )
    except TrapError as e:
        LOGGER.exception("Run sigma=%g gamma=%g failed", sigma, gamma)
        result.update(status=f"error: {e.code}", series_path=None)
    except Exception as e:
        LOGGER.exception("Run sigma=%g gamma=%g failed", sigma, gamma)
        result.update(status=f"error: {type(e).__name__}", series_path=None)

    with open(report_path, "w", encoding="utf-8") as f:
        json.dump(result, f, indent=2)
    return result


class BundleWriter:
    """The only shared sink of a sweep; appends are serialized by a lock."""

    def __init__(self, output_dir: str, plan: SweepPlan, echo: bool = False):
        self.output_dir = output_dir
        self.plan = plan
        self.echo = echo
        self._lock = threading.Lock()
        self._results: Dict[Tuple[float, float], RunResult] = {}
        self.started_utc = datetime.now(timezone.utc).isoformat()
        os.makedirs(os.path.join(output_dir, "series"), exist_ok=True)
        os.makedirs(os.path.join(output_dir, "reports"), exist_ok=True)

    def record(self, raw: Mapping[str, Any]) -> RunResult:
        result = RunResult(**{k: raw.get(k) for k in RunResult.__dataclass_fields__})
        with self._lock:
            self._results[(result.sigma, result.gamma)] = result
            rho = "-" if result.rho_s_final is None else f"{result.rho_s_final:.4f}"
            line = (
                f"[{len(self._results)}/{len(self.plan.pairs())}] sigma={result.sigma:g} "
                f"gamma={result.gamma:g} rho_s={rho} status={result.status}"
            )
            LOGGER.info("%s", line)
            if self.echo:
                print(line, file=sys.stderr, flush=True)
        return result

    def finalize(self) -> ResultBundle:
        with self._lock:
            ordered = [self._results[p] for p in self.plan.pairs() if p in self._results]
        bundle = ResultBundle(output_dir=self.output_dir, results=ordered)
        bundle.summary_path = os.path.join(self.output_dir, "summary.csv")
        bundle.manifest_path = os.path.join(self.output_dir, "manifest.json")

        with open(bundle.summary_path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(SUMMARY_COLUMNS)
            for r in ordered:
                writer.writerow(r.summary_row())

        with open(bundle.manifest_path, "w", encoding="utf-8") as f:
            json.dump(self._manifest(ordered), f, indent=2)
        LOGGER.info("Wrote bundle %s", os.path.abspath(self.output_dir))
        return bundle

    def _manifest(self, ordered: Sequence[RunResult]) -> Dict[str, Any]:
        from . import __version__

        config = self.plan.run_config()
        return {
            "schema": "qrtrap.bundle",
            "version": 1,
            "plan": self.plan.to_mapping(),
            "config": config.to_mapping(),
            "provenance": {
                "config_hash": config_hash(config),
                "code_version": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "started_utc": self.started_utc,
                "finished_utc": datetime.now(timezone.utc).isoformat(),
            },
            "runs": [
                {
                    "sigma": r.sigma,
                    "gamma": r.gamma,
                    "status": r.status,
                    "series": os.path.relpath(r.series_path, self.output_dir) if r.series_path else None,
                    "report": os.path.relpath(r.report_path, self.output_dir) if r.report_path else None,
                }
                for r in ordered
            ],
        }


def run_sweep(plan: SweepPlan, workers: Optional[int] = None, echo: bool = False) -> ResultBundle:
    """One evolve per (sigma, gamma); results merged in plan order.

    With echo set, every finished run prints an [i/n] line to stderr.
    """
    config = plan.run_config()
    workers = int(workers or config.workers)
    writer = BundleWriter(plan.output_dir, plan, echo=echo)
    config_map = config.to_mapping()
    pairs = plan.pairs()

    LOGGER.info("Sweep %s: %d runs, workers=%d, hash=%s", plan.name, len(pairs), workers, config_hash(config))

    if workers <= 1 or len(pairs) == 1:
        for sigma, gamma in pairs:
            writer.record(_run_point(config_map, sigma, gamma, plan.output_dir, plan.stop_on_collapse))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(_run_point, config_map, sigma, gamma, plan.output_dir, plan.stop_on_collapse): (sigma, gamma)
                for sigma, gamma in pairs
            }
            for fut in as_completed(futures):
                sigma, gamma = futures[fut]
                try:
                    writer.record(fut.result())
                except Exception as e:
                    LOGGER.exception("Worker for sigma=%g gamma=%g died", sigma, gamma)
                    writer.record({
                        "sigma": sigma, "gamma": gamma, "a": config.a, "tau_end": config.tau_end,
                        "rho_s_final": None, "collapsed": False, "tau_collapse": None,
                        "status": f"error: {type(e).__name__}",
                    })
    return writer.finalize()


def run_free_baseline(a: float, tau_end: float, config: PropagatorConfig, sample_every: int = 400) -> ObservableSeries:
    """Freely spreading packet (sigma = 0, gamma = 0)."""
    if config.trap.sigma != 0.0 or config.gamma != 0.0:
        raise InvalidParameterError(
            f"free baseline needs sigma = 0 and gamma = 0, got sigma={config.trap.sigma}, gamma={config.gamma}"
        )
    series = evolve(initial_packet(a, config.grid), config, tau_end, sample_every=sample_every)
    LOGGER.info("Free baseline a=%g: rho_s(%g) = %.6g", a, tau_end, series.final_rho_s)
    return series


def run_collapse_study(
    sigma: float,
    gammas: Sequence[float],
    config: RunConfig,
    output_dir: Optional[str] = None,
) -> ResultBundle:
    """Series and collapse reports per gamma, propagating through fixed-point failures."""
    plan = SweepPlan(
        sigmas=(float(sigma),),
        gammas=tuple(float(g) for g in gammas),
        a=config.a,
        tau_end=config.tau_end,
        config=config,
        output_dir=output_dir or config.output_dir,
        name="collapse",
        stop_on_collapse=False,
    )
    return run_sweep(plan)


# ===== SCORING =====


def enhancement_factor(rho_s: float, baseline: float) -> float:
    if not baseline > 0.0:
        raise InvalidParameterError(f"baseline density must be positive, got {baseline!r}")
    return float(rho_s) / float(baseline)


def load_summary(path: str) -> List[Dict[str, Any]]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != SUMMARY_COLUMNS:
            raise PlanValidationError(f"{path}: unexpected summary header {reader.fieldnames}")
        for row in reader:
            rows.append(
                {
                    "sigma": float(row["sigma"]),
                    "gamma": float(row["gamma"]),
                    "a": float(row["a"]),
                    "tau_end": float(row["tau_end"]),
                    "rho_s_final": float(row["rho_s_final"]) if row["rho_s_final"] else None,
                    "collapsed": row["collapsed"] == "true",
                    "tau_collapse": float(row["tau_collapse"]) if row["tau_collapse"] else None,
                    "status": row["status"],
                }
            )
    return rows


def load_reference(path: Optional[str] = None) -> Dict[str, Any]:
    with open(path or DEFAULT_REFERENCE_PATH, "r", encoding="utf-8") as f:
        raw = json.load(f)
    if raw.get("schema") != "qrtrap.reference":
        raise ConfigError(f"{path or DEFAULT_REFERENCE_PATH}: not a reference table file")
    return raw


def reference_entries(reference: Mapping[str, Any]) -> Dict[Tuple[float, float], float]:
    out: Dict[Tuple[float, float], float] = {}
    for table in reference["tables"].values():
        for sigma, row in zip(table["sigmas"], table["rho_s"]):
            for gamma, value in zip(table["gammas"], row):
                out[(float(sigma), float(gamma))] = float(value)
    return out


def _ordering_holds(values: Dict[Tuple[float, float], float]) -> Dict[str, bool]:
    sigmas = sorted({s for s, _ in values})
    gammas = sorted({g for _, g in values})
    # strictly decreasing in gamma at fixed sigma
    in_gamma = all(
        values[(s, g1)] > values[(s, g2)]
        for s in sigmas
        for g1, g2 in zip(gammas, gammas[1:])
        if (s, g1) in values and (s, g2) in values
    )
    # strictly increasing in sigma at fixed gamma
    in_sigma = all(
        values[(s1, g)] < values[(s2, g)]
        for g in gammas
        for s1, s2 in zip(sigmas, sigmas[1:])
        if (s1, g) in values and (s2, g) in values
    )
    return {"gamma": in_gamma, "sigma": in_sigma}


def score_summary(
    summary: Union[str, Sequence[Mapping[str, Any]]],
    reference: Optional[Mapping[str, Any]] = None,
    tolerance: float = 0.02,
) -> Dict[str, Any]:
    """Compare summary rows against the reference tables and the ordering invariants.

    Rows whose run did not finish cleanly (status other than "ok") are listed
    under "unscored" and kept out of both comparisons; an expected entry that
    is unscored fails the score.
    """
    rows = load_summary(summary) if isinstance(summary, str) else list(summary)
    expected = reference_entries(reference or load_reference())

    measured: Dict[Tuple[float, float], float] = {}
    unscored: List[Dict[str, Any]] = []
    for row in rows:
        key = (float(row["sigma"]), float(row["gamma"]))
        status = row.get("status") or "ok"
        if status != "ok":
            unscored.append({"sigma": key[0], "gamma": key[1], "status": status})
            continue
        rho = row.get("rho_s_final")
        if rho is None or (isinstance(rho, float) and math.isnan(rho)):
            continue
        measured[key] = float(rho)

    entries = []
    for key in sorted(measured):
        if key not in expected:
            continue
        delta = measured[key] - expected[key]
        entries.append(
            {
                "sigma": key[0],
                "gamma": key[1],
                "expected": expected[key],
                "actual": measured[key],
                "delta": delta,
                "ok": abs(delta) <= tolerance,
            }
        )

    ordering = _ordering_holds(measured)
    max_delta = max((abs(e["delta"]) for e in entries), default=0.0)
    return {
        "tolerance": tolerance,
        "compared": len(entries),
        "max_abs_delta": max_delta,
        "entries": entries,
        "unscored": unscored,
        "ordering": ordering,
        "in_range": all(0.0 <= v <= 1.0 for v in measured.values()),
        "passed": (
            bool(entries)
            and all(e["ok"] for e in entries)
            and all(ordering.values())
            and not any((u["sigma"], u["gamma"]) in expected for u in unscored)
        ),
    }
