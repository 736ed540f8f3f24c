"""Scenario files and experiment orchestration (sweeps, seed batches, A/B)."""
from __future__ import annotations

import os
import tempfile
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable

from vodsim.metrics import MetricsReport, emit_csv, mean_report, summary_table
from vodsim.simcore import InvariantViolation, RunConfig, run
from vodsim.topology import LinkClass


class ScenarioError(ValueError):
    pass


SECTIONS = {
    "topology": ["j_lpsgs", "ps_per_lpsg", "clients_per_ps"]
                + [f"delay_{lc.name.lower()}" for lc in LinkClass],
    "workload": ["seed", "duration_min", "max_arrivals", "rate_per_hour", "n_videos",
                 "min_video_min", "max_video_min", "playback_rate", "zipf_exponent",
                 "window_min", "x_min", "x_max", "x_scale", "early_depart_prob",
                 "failure_rate_per_hour", "warmup"],
    "chaining": ["chaining", "lac_d", "g_sec"],
    "capacities": ["c_mms_min", "tr_ratio", "ps_ratio", "cache_ratio"]
                  + [f"cap_{lc.name.lower()}" for lc in LinkClass],
    "sweep": ["sweep", "seeds", "ab_chaining", "baseline"],
    "": ["name", "out"],
}
KEY_SECTION = {k: s for s, keys in SECTIONS.items() for k in keys}
_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_LINK_BY_SUFFIX = {lc.name.lower(): lc for lc in LinkClass}


@dataclass
class Scenario:
    name: str = "default"
    config: RunConfig = field(default_factory=RunConfig)
    sweep_param: str | None = None
    sweep_values: list[float] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)
    ab_chaining: bool = False
    baseline: bool = False
    out_dir: str | None = None

    def seed_list(self) -> list[int]:
        return self.seeds or [self.config.seed]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("on", "true", "yes", "1"):
        return True
    if t in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_seeds(text: str) -> list[int]:
    """`7`, `0..9` (inclusive) or `1,4,9`."""
    text = text.strip()
    if ".." in text:
        a, b = text.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise ValueError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(s) for s in text.split(",") if s.strip()]


def _number(field_name: str, text: str):
    typ = str(_FIELD_TYPES[field_name])
    if "bool" in typ:
        return _bool(text)
    if field_name == "max_arrivals" and text.strip().lower() in ("none", "inf", "unlimited"):
        return None
    if typ.startswith("int"):
        v = float(text)
        if v != int(v):
            raise ValueError(f"{field_name} must be an integer")
        return int(v)
    return float(text)


def _apply(sc: Scenario, cfg: dict, key: str, value: str):
    if key == "name":
        sc.name = value
    elif key == "out":
        sc.out_dir = value
    elif key == "sweep":
        param, _, vals = value.partition(":")
        param = param.strip()
        if param not in _FIELD_TYPES or param in ("capacities", "delays_ms"):
            raise ValueError(f"cannot sweep {param!r}")
        sc.sweep_param = param
        sc.sweep_values = [float(v) for v in vals.split(",") if v.strip()]
        if not sc.sweep_values:
            raise ValueError("sweep needs at least one value")
    elif key == "seeds":
        sc.seeds = parse_seeds(value)
    elif key == "ab_chaining":
        sc.ab_chaining = _bool(value)
    elif key == "baseline":
        v = value.strip().lower()
        if v not in ("no-proxy", "off", "none"):
            raise ValueError(f"unknown baseline {value!r}")
        sc.baseline = v == "no-proxy"
    elif key == "cache_ratio":
        parts = [float(p) for p in value.split(":")]
        if len(parts) != 3 or parts[0] <= 0:
            raise ValueError("cache_ratio must look like 10:4:2")
        cfg["tr_ratio"] = parts[1] / parts[0]
        cfg["ps_ratio"] = parts[2] / parts[0]
    elif key.startswith("cap_"):
        v = float(value)
        if v != int(v):
            raise ValueError("capacities are whole stream counts")
        cfg.setdefault("capacities", dict(RunConfig().capacities))[_LINK_BY_SUFFIX[key[4:]].value] = int(v)
    elif key.startswith("delay_"):
        cfg.setdefault("delays_ms", dict(RunConfig().delays_ms))[_LINK_BY_SUFFIX[key[6:]].value] = float(value)
    else:
        cfg[key] = _number(key, value)


def parse_scenario(source: str | os.PathLike | Iterable[str], overrides: dict | None = None) -> Scenario:
    """Read a `key = value` scenario file; `#` starts a comment and `[section]`
    headers are optional but must match the keys below them.

    Unset keys keep their defaults. `overrides` (already-typed scenario fields or
    RunConfig fields) win over the file.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source) as fh:
            lines = fh.read().splitlines()
    else:
        lines = list(source)
    sc = Scenario()
    cfg: dict = {}
    section = None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if line.startswith("["):
                if not line.endswith("]"):
                    raise ValueError("malformed section header")
                section = line[1:-1].strip().lower()
                if section not in SECTIONS or section == "":
                    raise ValueError(f"unknown section [{section}]")
                continue
            key, sep, value = line.partition("=")
            key = key.strip().lower()
            if not sep or not key:
                raise ValueError("expected `key = value`")
            if key not in KEY_SECTION:
                raise ValueError(f"unknown key {key!r}")
            if section is not None and KEY_SECTION[key] not in (section, ""):
                raise ValueError(f"key {key!r} belongs in [{KEY_SECTION[key]}], not [{section}]")
            _apply(sc, cfg, key, value.strip())
        except (ValueError, KeyError) as exc:
            raise ScenarioError(f"line {lineno}: {raw.strip()!r}: {exc}") from None
    for k, v in (overrides or {}).items():
        if hasattr(sc, k) and k != "config":
            setattr(sc, k, v)
        else:
            cfg[k] = v
    try:
        sc.config = RunConfig(**cfg).validate()
        if sc.sweep_param:
            for v in sc.sweep_values:
                _sweep_config(sc.config, sc.sweep_param, v).validate()
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid scenario: {exc}") from None
    return sc


def _sweep_config(cfg: RunConfig, param: str, value: float) -> RunConfig:
    typ = str(_FIELD_TYPES[param])
    if typ.startswith("int"):
        value = int(value)
    elif "bool" in typ:
        value = bool(value)
    return cfg.evolve(**{param: value})


@dataclass
class RunSpec:
    key: str
    seed: int
    config: RunConfig
    label: str  # group label for the summary table


def expand(sc: Scenario) -> list[RunSpec]:
    """All runs in output order: sweep value ascending, chaining on before off, seed."""
    points = [(None, None)]
    if sc.sweep_param:
        points = [(sc.sweep_param, v) for v in sorted(sc.sweep_values)]
    out = []
    for param, value in points:
        base = sc.config if param is None else _sweep_config(sc.config, param, value)
        prefix = sc.name if param is None else f"{param}={value:g}"
        variants = [(True, "on"), (False, "off")] if sc.ab_chaining else [(base.chaining, None)]
        for chaining, tag in variants:
            key = prefix if tag is None else f"{prefix};chaining={tag}"
            for seed in sc.seed_list():
                out.append(RunSpec(key, seed, base.evolve(seed=seed, chaining=chaining), key))
    return out


def _execute(spec_and_flags):
    spec, baseline, trace = spec_and_flags
    res = run(spec.config)
    report = res.report
    if baseline:
        base = run(spec.config.evolve(baseline=True))
        report = report.with_baseline(base.report)
    return report, (res.trace_lines() if trace else None)


def run_experiment(sc: Scenario, out_dir: str | os.PathLike, trace: bool = False,
                   jobs: int = 1) -> tuple[list[tuple[RunSpec, MetricsReport]], str]:
    """Execute every run of the scenario and write results.csv, summary.txt and,
    with `trace`, one trace file per run. Files appear only if all runs succeed."""
    specs = expand(sc)
    work = [(s, sc.baseline, trace) for s in specs]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_execute, work))
    else:
        outputs = [_execute(w) for w in work]
    results = [(s, rep) for s, (rep, _) in zip(specs, outputs)]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".vodsim-", dir=out))
    try:
        (staging / "results.csv").write_text(emit_csv((s.key, s.seed, r) for s, r in results))
        summary = summarize(sc, results)
        (staging / "summary.txt").write_text(summary)
        if trace:
            for s, (_, lines) in zip(specs, outputs):
                fname = "trace_" + _safe(s.key) + f"_seed{s.seed}.csv"
                (staging / fname).write_text("\n".join(lines) + "\n")
        for f in staging.iterdir():
            os.replace(f, out / f.name)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    return results, summary


def _safe(key: str) -> str:
    return "".join(c if c.isalnum() or c in "-_.=" else "_" for c in key)


def summarize(sc: Scenario, results: list[tuple[RunSpec, MetricsReport]]) -> str:
    groups: dict[str, list[MetricsReport]] = {}
    for s, r in results:
        groups.setdefault(s.label, []).append(r)
    n = len(sc.seed_list())
    head = f"scenario {sc.name}: {len(results)} runs, mean over {n} seed(s)\n\n"
    if sc.ab_chaining:
        blocks = []
        labels = list(groups)
        for i in range(0, len(labels), 2):
            on, off = labels[i], labels[i + 1]
            pairs = [("PC+Chaining", mean_report(groups[on])), ("PC-Chaining", mean_report(groups[off]))]
            title = on.rsplit(";", 1)[0]
            blocks.append(f"[{title}]\n" + summary_table(pairs))
        return head + "\n".join(blocks)
    pairs = [(lab, mean_report(reps)) for lab, reps in groups.items()]
    return head + summary_table(pairs)


__all__ = ["InvariantViolation", "Scenario", "ScenarioError", "expand", "parse_scenario",
           "parse_seeds", "run_experiment", "summarize"]
