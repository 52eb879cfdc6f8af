"""Experiment driver: configuration, table/curve reproduction and CSV output.

Configuration is a flat ``key=value`` text file; command-line ``--set``
overrides are applied on top.  Every CSV starts with ``#`` comment lines that
carry the config fingerprint, a hash of the canonical serialization of the
resolved configuration.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .bap import (
    PerturbationContext,
    bap,
    chord_lags,
    chord_vectors,
    eim_leading_sv,
    random_block,
)
from .dynamics import ModelSpec, NormKind, StepCounter, n_steps, step_counter
from .errors import (
    BapkitError,
    BreakdownError,
    ConfigError,
    DomainError,
    NumericalBlowupError,
    RankDeficiencyError,
    VerificationError,
)
from .metrics import (
    GrowthCurve,
    cost_ratio,
    egr_curves,
    ig_count,
    mean_curve,
    regi,
    sample_states,
)
from . import verification

log = logging.getLogger("bapkit")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VERIFY = 4

MODEL_DEFAULTS = {
    "lorenz96": {"h": 0.015, "norm": "euclidean", "blocks": (1, 2, 3, 4, 5), "iters": (1, 2, 3, 4, 5, 7, 10)},
    "swm": {"h": 0.035, "norm": "total_energy", "blocks": (1, 2, 4, 5, 10, 20),
            "iters": (1, 2, 3, 4, 5, 10, 20, 50)},
}


def _int_list(text):
    if isinstance(text, (tuple, list)):
        return tuple(int(x) for x in text)
    return tuple(int(x) for x in str(text).replace(" ", "").split(",") if x)


def _cells(text):
    if isinstance(text, (tuple, list)):
        return tuple((int(a), int(b)) for a, b in text)
    out = []
    for item in str(text).replace(" ", "").split(","):
        if item:
            a, _, b = item.partition("x")
            out.append((int(a), int(b)))
    return tuple(out)


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(parser):
    def parse(text):
        if text is None or str(text).strip().lower() in ("", "none"):
            return None
        return parser(text)
    return parse


_PARSERS = {
    "model": str, "norm": _optional(str), "F": float, "K": int, "g": float, "dt": float,
    "T": float, "h": _optional(float), "init": str, "block_size": int, "iterations": int,
    "samples": int, "spinup_steps": int, "window_steps": int, "seed": int,
    "output_dir": str, "horizon": float, "blocks": _optional(_int_list),
    "iters": _optional(_int_list), "dump_cells": _cells, "trials": int,
    "verify_states": int, "inject_fault": _bool, "wallclock": _bool, "workers": int,
    "chord_stride": int, "chord_span": int,
}

# keys that do not influence any numerical output
_NOT_HASHED = {"output_dir", "workers"}


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "lorenz96"
    norm: str | None = None
    F: float = 8.0
    K: int = 50
    g: float = 9.81
    dt: float = 0.01
    T: float = 0.2
    h: float | None = None
    init: str = "random"
    block_size: int = 5
    iterations: int = 10
    samples: int = 100
    spinup_steps: int = 1500
    window_steps: int = 10000
    seed: int = 0
    output_dir: str = "out"
    horizon: float = 1.0
    blocks: tuple | None = None
    iters: tuple | None = None
    dump_cells: tuple = ((4, 10), (20, 50))
    trials: int = 1000
    verify_states: int = 5
    inject_fault: bool = False
    wallclock: bool = True
    workers: int = 1
    chord_stride: int = 15
    chord_span: int = 2

    @classmethod
    def from_mapping(cls, values, base=None):
        """Build from string (or typed) values; unknown keys and bad values raise ConfigError."""
        base = base or cls()
        updates = {}
        for key, raw in values.items():
            if key not in _PARSERS:
                raise ConfigError(f"unknown config field {key!r}")
            try:
                updates[key] = _PARSERS[key](raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid value for {key!r}: {raw!r} ({exc})") from exc
        return replace(base, **updates)

    def resolved(self):
        """Fill model-dependent defaults and validate every field."""
        if self.model not in MODEL_DEFAULTS:
            raise ConfigError(f"model: expected 'lorenz96' or 'swm', got {self.model!r}")
        d = MODEL_DEFAULTS[self.model]
        cfg = replace(
            self,
            norm=self.norm or d["norm"],
            h=d["h"] if self.h is None else self.h,
            blocks=self.blocks or d["blocks"],
            iters=self.iters or d["iters"],
        )
        problems = []
        if cfg.norm not in ("euclidean", "total_energy"):
            problems.append("norm")
        if cfg.norm == "total_energy" and cfg.model != "swm":
            problems.append("norm (total_energy needs model=swm)")
        if cfg.init not in ("random", "chord"):
            problems.append("init")
        for name in ("block_size", "iterations", "samples", "window_steps", "trials",
                     "verify_states", "workers", "chord_stride", "chord_span", "K"):
            if getattr(cfg, name) < 1:
                problems.append(name)
        for name in ("T", "h", "dt", "horizon"):
            if not getattr(cfg, name) > 0:
                problems.append(name)
        if cfg.spinup_steps < 0:
            problems.append("spinup_steps")
        if cfg.horizon < cfg.T - 1e-12:
            problems.append("horizon (must cover T)")
        if not cfg.blocks or min(cfg.blocks) < 1:
            problems.append("blocks")
        if not cfg.iters or min(cfg.iters) < 1:
            problems.append("iters")
        if problems:
            raise ConfigError("invalid config fields: " + ", ".join(problems))
        max_block = max(max(cfg.blocks), cfg.block_size, max((c[0] for c in cfg.dump_cells), default=1))
        need = (max_block - 1) * cfg.chord_stride + cfg.chord_span
        if cfg.spinup_steps < need:
            raise ConfigError(f"spinup_steps: chord history needs at least {need} steps")
        try:
            cfg.model_spec()
        except BapkitError as exc:
            raise ConfigError(f"model parameters: {exc}") from exc
        return cfg

    def model_spec(self):
        if self.model == "lorenz96":
            return ModelSpec.lorenz96(F=self.F, K=self.K, dt=self.dt)
        return ModelSpec.shallow_water(g=self.g, dt=self.dt)

    def canonical(self):
        lines = []
        for f in fields(self):
            if f.name in _NOT_HASHED:
                continue
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join("x".join(map(str, v)) if isinstance(v, tuple) else str(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name}={value}")
        return "\n".join(sorted(lines)) + "\n"

    def fingerprint(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def read_config_file(path):
    """Parse a ``key=value`` file; blank lines and ``#`` comments are ignored."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        values[key.strip()] = value.strip()
    return values


# ---------------------------------------------------------------------------
# Output


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % x
    return str(x)


def write_csv(path, config, header, rows, comments=()):
    with open(path, "w", newline="") as fh:
        fh.write(f"# bapkit config fingerprint {config.fingerprint()}\n")
        for c in comments:
            fh.write(f"# {c}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([_fmt(x) for x in row] for row in rows)
    return Path(path)


def read_csv(path):
    """Read a bapkit CSV back: ``(header, rows)`` with numeric cells as floats."""
    with open(path, newline="") as fh:
        lines = [line for line in fh if line.strip() and not line.startswith("#")]
    table = list(csv.reader(lines))
    rows = []
    for cells in table[1:]:
        row = []
        for c in cells:
            try:
                row.append(float(c))
            except ValueError:
                row.append(c)
        rows.append(row)
    return table[0], rows


def _curve_rows(curve):
    return [[t, e] for t, e in zip(curve.t, curve.egr)]


class _RunLog:
    """Attach a ``run.log`` file handler for the duration of a command."""

    def __init__(self, out_dir):
        self.path = Path(out_dir) / "run.log"

    def __enter__(self):
        self.handler = logging.FileHandler(self.path, mode="w")
        self.handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
        logging.getLogger("bapkit").addHandler(self.handler)
        logging.getLogger("bapkit").setLevel(logging.INFO)
        self.start = step_counter.value
        return self

    def __exit__(self, *exc):
        log.info("total integration steps this command: %d", step_counter.value - self.start)
        logging.getLogger("bapkit").removeHandler(self.handler)
        self.handler.close()


def _prepare(config):
    cfg = config.resolved()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


# ---------------------------------------------------------------------------
# Shared experiment machinery


@dataclass
class CellCurves:
    baseline: GrowthCurve
    cells: dict
    used: list
    failed: list
    counts: dict
    leading: list           # EIM-SV right vector of every used sample


def _start_block(cfg, model, norm, samples, i, init, ell):
    if init == "random":
        return random_block(model.n, ell, (cfg.seed, i, ell))
    return chord_vectors(samples.history(i), ell, model, norm, cfg.chord_stride, cfg.chord_span)


def _sample_curves(cfg, model, samples, i, cells, horizon):
    """EIM-SV and BAP perturbations at sample ``i`` and their EGR curves."""
    norm = NormKind(cfg.norm)
    ctx = PerturbationContext(model, samples.states[i], norm, cfg.T, cfg.h)
    eim_counter, egr_counter = StepCounter(), StepCounter()
    vectors = [eim_leading_sv(ctx, 1, eim_counter)[0].right]
    keys = []
    bap_steps, bap_expected = 0, 0
    groups = {}
    for init, ell, m in cells:
        groups.setdefault((init, ell), []).append(m)
    for (init, ell), ms in groups.items():
        Q1 = _start_block(cfg, model, norm, samples, i, init, ell)
        res = bap(ctx, Q1, max(ms), 1, seed=(cfg.seed, i, ell, init == "chord"))
        bap_steps += res.integration_steps
        bap_expected += ig_count(ell, max(ms), cfg.T, model.dt)
        for m in ms:
            vectors.append(res.truncated(m)[0][:, 0])
            keys.append((init, ell, m))
    t, E = egr_curves(model, norm, samples.states[i], np.column_stack(vectors), cfg.h, horizon, egr_counter)
    curves = {k: GrowthCurve(t, E[:, j + 1]) for j, k in enumerate(keys)}
    counts = {"eim": eim_counter.value, "bap": bap_steps, "bap_expected": bap_expected,
              "egr": egr_counter.value}
    return GrowthCurve(t, E[:, 0]), curves, counts, vectors[0]


def run_cells(cfg, model, samples, cells, horizon, max_failure=0.1):
    """MEGR curves of the EIM-SV baseline and of every ``(init, l, m)`` cell on one sample set."""
    def job(i):
        try:
            return _sample_curves(cfg, model, samples, i, cells, horizon)
        except BapkitError as exc:
            return exc

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(job, range(len(samples))))
    else:
        results = [job(i) for i in range(len(samples))]

    base, per_cell, used, failed, leading = [], {c: [] for c in cells}, [], [], []
    counts = {"eim": 0, "bap": 0, "bap_expected": 0, "egr": 0}
    for i, r in enumerate(results):
        if isinstance(r, Exception):
            log.warning("sample %d (step %d) excluded: %s", i, samples.steps[i], r)
            failed.append(i)
            continue
        b, curves, c, v = r
        base.append(b)
        leading.append(v)
        for k in cells:
            per_cell[k].append(curves[k])
        for k in counts:
            counts[k] += c[k]
        used.append(i)
    if not used or len(failed) > max_failure * len(samples):
        raise BapkitError(f"{len(failed)} of {len(samples)} samples failed: {failed}")

    s = n_steps(cfg.T, model.dt)
    log.info("samples used %d, failed %d", len(used), len(failed))
    log.info("EIM-SV integration steps %d (expected %d = %d samples x (n+1) x %d)",
             counts["eim"], len(used) * (model.n + 1) * s, len(used), s)
    log.info("BAP integration steps %d (formula m*l*ceil(T/dt) summed: %d)",
             counts["bap"], counts["bap_expected"])
    if counts["bap"] != counts["bap_expected"]:
        log.warning("BAP integration count does not reconcile with the cost formula")
    log.info("EGR integration steps %d", counts["egr"])
    return CellCurves(
        baseline=mean_curve(base),
        cells={k: mean_curve(v) for k, v in per_cell.items()},
        used=used,
        failed=failed,
        counts=counts,
        leading=leading,
    )


def _samples_for(cfg, model, max_block, count=None):
    lags = chord_lags(max_block, cfg.chord_stride, cfg.chord_span)
    samples = sample_states(model, cfg.spinup_steps, cfg.window_steps,
                            cfg.samples if count is None else count, cfg.seed, lags)
    log.info("sampled %d states at steps %s", len(samples), list(map(int, samples.steps)))
    return samples


# ---------------------------------------------------------------------------
# Commands


def cmd_bap_run(config):
    """MEGR of BAP (configured l, m, init) and of the EIM-SV baseline on shared samples."""
    cfg, out = _prepare(config)
    with _RunLog(out):
        model = cfg.model_spec()
        if cfg.block_size * cfg.iterations > model.n:
            raise ConfigError("block_size * iterations exceeds the model dimension")
        log.info("bap-run config:\n%s", cfg.canonical())
        samples = _samples_for(cfg, model, cfg.block_size)
        cell = (cfg.init, cfg.block_size, cfg.iterations)
        res = run_cells(cfg, model, samples, [cell], cfg.horizon)
        curve = res.cells[cell]
        value = regi(curve, res.baseline, cfg.T)
        note = [f"model={cfg.model} init={cfg.init} l={cfg.block_size} m={cfg.iterations}",
                f"samples used={len(res.used)}"]
        write_csv(out / "megr_bap.csv", cfg, ["t", "megr"], _curve_rows(curve), note)
        write_csv(out / "megr_eimsv.csv", cfg, ["t", "megr"], _curve_rows(res.baseline), note)
        write_csv(out / "summary.csv", cfg, ["key", "value"], [
            ["regi", value],
            ["samples_used", len(res.used)],
            ["samples_failed", len(res.failed)],
            ["bap_integration_steps", res.counts["bap"]],
            ["eimsv_integration_steps", res.counts["eim"]],
        ])
        log.info("REGI %.4f", value)
    return {"regi": value, "bap": curve, "eimsv": res.baseline, "used": res.used}


def cmd_regi_table(config, blocks=None, iters=None):
    """REGI for every (l, m) pair and both start strategies on one sample set."""
    cfg, out = _prepare(config)
    blocks = tuple(blocks or cfg.blocks)
    iters = tuple(iters or cfg.iters)
    with _RunLog(out):
        model = cfg.model_spec()
        bad = [(l, m) for l in blocks for m in iters if l * m > model.n]
        if bad:
            raise ConfigError(f"blocks/iters: l*m exceeds n={model.n} for {bad}")
        log.info("regi-table config:\n%s", cfg.canonical())
        samples = _samples_for(cfg, model, max(blocks))
        cells = [(init, l, m) for init in ("random", "chord") for l in blocks for m in iters]
        res = run_cells(cfg, model, samples, cells, cfg.T)
        table = {c: regi(res.cells[c], res.baseline, cfg.T) for c in cells}
        header = ["iterations"] + [f"random_{l}" for l in blocks] + [f"chord_{l}" for l in blocks]
        rows = [[m] + [table[("random", l, m)] for l in blocks] + [table[("chord", l, m)] for l in blocks]
                for m in iters]
        write_csv(out / "regi_table.csv", cfg, header, rows,
                  [f"REGI with T={cfg.T}; columns: number of random / chord start vectors",
                   f"samples used={len(res.used)}"])
    return table


def cmd_cost_table(config, blocks=None, iters=None):
    """Integration-count cost of BAP relative to the explicit EIM, plus measured wall-clock."""
    cfg, out = _prepare(config)
    blocks = tuple(blocks or cfg.blocks)
    iters = tuple(iters or cfg.iters)
    with _RunLog(out):
        model = cfg.model_spec()
        s = n_steps(cfg.T, model.dt)
        rows, table = [], {}
        for m in iters:
            for l in blocks:
                table[(l, m)] = cost_ratio(l, m, model.n)
                rows.append([m, l, ig_count(l, m, cfg.T, model.dt), (model.n) * s, table[(l, m)]])
        write_csv(out / "cost_table.csv", cfg,
                  ["iterations", "block_size", "bap_integrations", "eimsv_integrations", "ig_ratio"], rows,
                  ["integration counts exclude the shared base run"])
        clock = {}
        if cfg.wallclock:
            samples = _samples_for(cfg, model, 1, count=1)
            norm = NormKind(cfg.norm)
            ctx = PerturbationContext(model, samples.states[0], norm, cfg.T, cfg.h)
            ctx.base_evolved()
            t0 = time.perf_counter()
            eim_leading_sv(ctx, 1)
            full = time.perf_counter() - t0
            for (l, m) in table:
                if l * m > model.n:
                    continue
                t0 = time.perf_counter()
                bap(ctx, random_block(model.n, l, (cfg.seed, 0, l)), m, 1)
                clock[f"{l}x{m}"] = (time.perf_counter() - t0) / full
            (out / "cost_wallclock.json").write_text(json.dumps(
                {"eimsv_seconds": full, "ratios": clock, "note": "informational; not reproducible"},
                indent=1))
            log.info("EIM-SV wall-clock %.3f s", full)
    return {"ig_ratio": table, "wallclock": clock}


def corner_fraction(vector, mesh=23, size=6):
    """Share of the squared norm of a SWM vector in the four ``size x size`` corner blocks."""
    w = (np.asarray(vector).reshape(3, mesh, mesh) ** 2).sum(axis=0)
    mask = np.zeros((mesh, mesh), dtype=bool)
    mask[:size, :size] = mask[:size, -size:] = mask[-size:, :size] = mask[-size:, -size:] = True
    return float(w[mask].sum() / w.sum()), float(mask.mean())


def cmd_spatial_dump(config):
    """Grids of the leading EIM-SV and chord-started BAP approximations at one SWM state."""
    cfg, out = _prepare(config)
    if cfg.model != "swm":
        raise ConfigError("model: spatial-dump needs model=swm")
    with _RunLog(out):
        model = cfg.model_spec()
        norm = NormKind(cfg.norm)
        max_block = max(l for l, _ in cfg.dump_cells)
        samples = _samples_for(cfg, model, max_block, count=1)
        ctx = PerturbationContext(model, samples.states[0], norm, cfg.T, cfg.h)
        ref = eim_leading_sv(ctx, 1)[0]
        vectors = {"eimsv": ref.right}
        failed = {}
        for l, m in cfg.dump_cells:
            if l * m > model.n:
                raise ConfigError(f"dump_cells: {l}x{m} exceeds n={model.n}")
            name = f"bap_{l}x{m}"
            try:
                Q1 = chord_vectors(samples.history(0), l, model, norm, cfg.chord_stride, cfg.chord_span)
                vectors[name] = bap(ctx, Q1, m, 1, seed=(cfg.seed, 0, l)).P[:, 0]
            except (BreakdownError, RankDeficiencyError) as exc:
                # one degenerate Krylov space should not discard the other grids
                log.error("%s not computed: %s", name, exc)
                failed[name] = str(exc)
        N = model.mesh
        rows = []
        for name, vec in vectors.items():
            grids = vec.reshape(3, N, N)
            for comp, grid in zip("huv", grids):
                write_csv(out / f"{name}_{comp}.csv", cfg, [f"c{j}" for j in range(N)], grid.tolist(),
                          [f"{name}: transformed {comp} component, rows along z1"])
            frac, uniform = corner_fraction(vec, N)
            rows.append([name, abs(float(vec @ ref.right)), frac, uniform, float(vec @ vec), "ok"])
        for name in failed:
            rows.append([name, None, None, None, None, "breakdown"])
        write_csv(out / "spatial_summary.csv", cfg,
                  ["vector", "overlap_with_eimsv", "corner_fraction", "uniform_corner_fraction",
                   "squared_norm", "status"], rows)
    return {r[0]: {"overlap": r[1], "corner_fraction": r[2], "status": r[5]} for r in rows}


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def cmd_verify(config):
    """Theory checks: Arnoldi relation, singular value bound, departure identities, EIM normality."""
    cfg, out = _prepare(config)
    with _RunLog(out):
        model = cfg.model_spec()
        records = []
        records += verification.arnoldi_relation_fixtures(seed=cfg.seed)
        records += verification.theorem1_trials(cfg.trials, cfg.seed, inject_fault=cfg.inject_fault)
        records += verification.lee_identity_checks(seed=cfg.seed)
        records += verification.lemma_fixtures(seed=cfg.seed)
        if cfg.model == "lorenz96":
            limit, sub = 0.05, (4, 3)
        else:
            limit, sub = 0.1, (4, 10)
        lags = chord_lags(sub[0], cfg.chord_stride, cfg.chord_span)
        samples = sample_states(model, cfg.spinup_steps, cfg.window_steps, cfg.verify_states, cfg.seed, lags)
        records += verification.eim_normality_checks(
            model, samples.states, cfg.T, cfg.h, NormKind(cfg.norm), limit, 0.8, sub, cfg.seed,
            [samples.history(i) for i in range(len(samples))])
        rows = [[r.check, r.case, r.value, r.threshold, r.status] for r in records]
        write_csv(out / "verify_report.csv", cfg, ["check", "case", "value", "threshold", "status"], rows)
        failures = [r for r in records if r.status == "fail"]
        for r in records:
            if r.status == "warn":
                log.warning("flag: %s %s value %.4g vs %.4g", r.check, r.case, r.value, r.threshold)
        if failures:
            (out / "failing_case.json").write_text(json.dumps(
                {"check": failures[0].check, "case": failures[0].case,
                 "data": _jsonable(failures[0].replay), "count": len(failures)}))
            raise VerificationError(f"{len(failures)} verification checks failed; first: "
                                    f"{failures[0].check} {failures[0].case}")
    return records


# ---------------------------------------------------------------------------
# CLI


COMMANDS = {
    "bap-run": cmd_bap_run,
    "regi-table": cmd_regi_table,
    "cost-table": cmd_cost_table,
    "spatial-dump": cmd_spatial_dump,
    "verify": cmd_verify,
}


def build_parser():
    p = argparse.ArgumentParser(prog="bapkit", description="Block Arnoldi perturbation experiments")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config field (repeatable)")
    p.add_argument("--blocks", help="comma-separated block sizes for table commands")
    p.add_argument("--iters", help="comma-separated iteration counts for table commands")
    return p


def config_from_args(args):
    values = read_config_file(args.config) if args.config else {}
    if args.seed is not None:
        values["seed"] = str(args.seed)
    if args.out:
        values["output_dir"] = args.out
    if args.blocks:
        values["blocks"] = args.blocks
    if args.iters:
        values["iters"] = args.iters
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        values[key.strip()] = value.strip()
    return ExperimentConfig.from_mapping(values)


def main(argv=None):
    args = build_parser().parse_args(argv)
    console = logging.StreamHandler()
    console.setLevel(logging.WARNING)
    console.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    logging.getLogger().addHandler(console)
    try:
        config = config_from_args(args)
        COMMANDS[args.command](config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalBlowupError, DomainError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except VerificationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except BapkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    finally:
        logging.getLogger().removeHandler(console)
    return EXIT_OK
