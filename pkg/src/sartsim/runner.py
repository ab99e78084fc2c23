"""Execute scenarios and write their output files.

A run directory holds ``metadata.json`` (seed, PRNG, config echo, version),
``summary.json`` (per-trial summaries plus mean/sd) and, per trial,
``trial_<k>/records.jsonl`` and ``trial_<k>/occupancy.csv``.  Trial ``k``
uses root seed ``seed + k``.  Every file is written to a temporary name and
renamed into place.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .metrics import aggregate_trials, occupancy_trace, summarize
from .scenario import Scenario
from .scheduler import PolicyConfig, SimResult, simulate
from .simcore import prng_metadata
from .workload import ConfigError, build_requests

OUT_ENV = "SARTSIM_OUT"
SUMMARY_KEYS = ("accuracy", "e2e_p50", "e2e_p90", "e2e_p97", "e2e_p99",
                "queuing_p97", "inference_p97", "queuing_mean", "mean_completed_length")


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "sartsim_out"))


def run_trial(scenario: Scenario, trial: int = 0) -> SimResult:
    seed = scenario.seed + trial
    requests = build_requests(seed, scenario.arrival_rate, scenario.horizon_ms,
                              scenario.workload, max_requests=scenario.num_requests)
    return simulate(requests, scenario.policy, scenario.engine, scenario.workload, seed, audit=True)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _occupancy_csv(result: SimResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time_ms", "batch_size", "running_branches", "resident_tokens"])
    for s in occupancy_trace(result.chunks):
        w.writerow([s.time, s.batch_size, s.running_branches, s.resident_tokens])
    return buf.getvalue()


def metadata(scenario: Scenario) -> dict:
    meta = prng_metadata(scenario.seed)
    meta.update({
        "artifact": "sartsim",
        "version": __version__,
        "trial_seeds": [scenario.seed + k for k in range(scenario.trials)],
        "config": scenario.as_dict(),
    })
    return meta


def run_scenario(scenario: Scenario, out_dir=None) -> dict:
    """Run all trials of ``scenario``; write outputs if ``out_dir`` is given.

    Returns ``{"per_trial": [...], "aggregate": {...}}``.
    """
    per_trial = []
    for k in range(scenario.trials):
        result = run_trial(scenario, k)
        summary = summarize(result.records)
        summary["audits"] = result.audits
        per_trial.append(summary)
        if out_dir is not None:
            tdir = Path(out_dir) / f"trial_{k}"
            lines = "".join(_dumps(r.as_dict()) + "\n" for r in result.records)
            _atomic_write(tdir / "records.jsonl", lines)
            _atomic_write(tdir / "occupancy.csv", _occupancy_csv(result))
    out = {"per_trial": per_trial, "aggregate": aggregate_trials(per_trial)}
    if out_dir is not None:
        _atomic_write(Path(out_dir) / "metadata.json", json.dumps(metadata(scenario), indent=2, sort_keys=True) + "\n")
        _atomic_write(Path(out_dir) / "summary.json", json.dumps(out, indent=2, sort_keys=True) + "\n")
    return out


def parse_axis(text: str):
    """``"N=1,2,4,8"`` -> ``("N", [1, 2, 4, 8])``."""
    if "=" not in text:
        raise ConfigError("axis", f"expected NAME=v1,v2,..., got {text!r}")
    name, _, vals = text.partition("=")
    name = name.strip()
    if name not in ("N", "M", "alpha", "beta", "arrival_rate"):
        raise ConfigError("axis", f"cannot sweep {name!r}")
    items = [v.strip() for v in vals.split(",") if v.strip()]
    if not items:
        raise ConfigError("axis", "axis has no values")
    conv = float if name in ("alpha", "arrival_rate") else int
    try:
        return name, [conv(v) for v in items]
    except ValueError as e:
        raise ConfigError("axis", str(e)) from e


def sweep_point(base: Scenario, axis: str, value, policy: str) -> Scenario:
    p = base.policy
    if axis == "arrival_rate":
        pol = PolicyConfig.make(policy, p.N, M=p.M, alpha=p.alpha, beta=p.beta)
        return base.replace(policy=pol, arrival_rate=value, name=f"{policy}_rate{value:g}")
    if axis == "N":
        # M and beta follow N (N // 2) when N is the swept quantity
        pol = PolicyConfig.make(policy, value, alpha=p.alpha)
    else:
        kw = {"M": p.M, "alpha": p.alpha, "beta": p.beta, axis: value}
        pol = PolicyConfig.make(policy, p.N, **kw)
    return base.replace(policy=pol, name=f"{policy}_{axis}{value:g}")


def _run_point(args):
    scenario, out_dir = args
    return run_scenario(scenario, out_dir)


def sweep(base: Scenario, axis: str, values, policies, out_dir=None, jobs: int = 1) -> list[dict]:
    """One scenario per (value, policy), each run for ``base.trials`` trials.

    Writes each point under ``out_dir/<policy>_<axis><value>/`` and a
    ``comparison.csv`` keyed by (policy, axis value).
    """
    if not values:
        raise ConfigError("axis", "axis has no values")
    if not policies:
        raise ConfigError("policies", "no policies given")
    points = []
    for v in values:
        for pol in policies:
            sc = sweep_point(base, axis, v, pol)
            pdir = None if out_dir is None else Path(out_dir) / sc.name
            points.append((pol, v, sc, pdir))
    work = [(sc, pdir) for _, _, sc, pdir in points]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_point, work))
    else:
        results = [_run_point(w) for w in work]

    rows = []
    for (pol, v, sc, _), res in zip(points, results):
        row = {"policy": sc.policy.policy.value, axis: v, "N": sc.policy.N, "M": sc.policy.M,
               "trials": sc.trials}
        agg = res["aggregate"]
        for key in SUMMARY_KEYS:
            row[f"{key}_mean"] = agg[key]["mean"]
            row[f"{key}_sd"] = agg[key]["sd"]
        rows.append(row)
    if out_dir is not None:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        _atomic_write(Path(out_dir) / "comparison.csv", buf.getvalue())
        _atomic_write(Path(out_dir) / "metadata.json",
                      json.dumps({**metadata(base), "axis": axis, "values": list(values),
                                  "policies": list(policies)}, indent=2, sort_keys=True) + "\n")
    return rows
