"""Command-line front end: calibrate, score, falsify, compare.

Exit codes: 0 success (no counterexample), 10 counterexample found,
2 usage or configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .adversary import Disturbance, DisturbanceBounds, DisturbanceError, validate
from .falsifier import CampaignConfig, ObjectiveConfig, compare_protections, run_campaign, score_disturbance
from .falsifier.analysis import SIGN_RADIUS_M, Comparison
from .kernels import BACKEND
from .perception import CorrelationPrior, DetectorModel, MapData, PerceptionConfig, calibrate_priors, window_agreement_rates
from .protection import SensorFusionConfig, SensorFusionProtection, TrivialProtection
from .scenario import ScenarioConfig, calibration_runs, sign_map_for

log = logging.getLogger("parapet")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3
EXIT_COUNTEREXAMPLE = 10

SECTIONS = ("scenario", "perception", "adversary_bounds", "protection", "objective", "campaign")
LOW_SAMPLE_POINTS = 30


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return cfg


def config_digest(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _build(cls, d: dict, section: str, tuples=()):
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - fields
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {sorted(unknown)}")
    kw = {k: (tuple(v) if k in tuples else v) for k, v in d.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def scenario_from(cfg: dict) -> ScenarioConfig:
    return _build(ScenarioConfig, cfg.get("scenario", {}), "scenario")


def perception_from(cfg: dict) -> PerceptionConfig:
    d = dict(cfg.get("perception", {}))
    if "detectors" in d:
        dets = d["detectors"]
        if not isinstance(dets, list) or len(dets) != 2:
            raise ConfigError("[perception] detectors must list exactly two detectors")
        d["detectors"] = tuple(_build(DetectorModel, x, "perception.detectors") for x in dets)
    if "sign_map" in d and d["sign_map"] is not None:
        try:
            d["sign_map"] = MapData(tuple(float(p) for p in d["sign_map"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[perception] sign_map: {exc}") from exc
    return _build(PerceptionConfig, d, "perception")


def bounds_from(cfg: dict) -> DisturbanceBounds:
    try:
        return DisturbanceBounds.from_dict(cfg.get("adversary_bounds", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[adversary_bounds] {exc}") from exc


def objective_from(cfg: dict) -> ObjectiveConfig:
    return _build(ObjectiveConfig, cfg.get("objective", {}), "objective", tuples=("tier_bases",))


def campaign_from(cfg: dict, args) -> CampaignConfig:
    d = dict(cfg.get("campaign", {}))
    if getattr(args, "bootstrap", None) is not None:
        d["bootstrap_n"] = args.bootstrap
    if getattr(args, "iterations", None) is not None:
        d["bo_iterations"] = args.iterations
    d["seed"] = args.seed
    return _build(CampaignConfig, d, "campaign")


def fusion_config_from(cfg: dict) -> SensorFusionConfig:
    d = {k: v for k, v in cfg.get("protection", {}).items() if k not in ("prior", "prior_file", "calibration_runs")}
    return _build(SensorFusionConfig, d, "protection")


def load_prior(cfg: dict) -> CorrelationPrior | None:
    p = cfg.get("protection", {})
    try:
        if "prior" in p:
            return CorrelationPrior.from_dict(p["prior"])
        if "prior_file" in p:
            with open(p["prior_file"]) as fh:
                return CorrelationPrior.from_dict(json.load(fh))
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"[protection] bad prior: {exc}") from exc
    return None


def calibration_run_count(cfg: dict) -> int:
    n = cfg.get("protection", {}).get("calibration_runs", 45)
    if not isinstance(n, int) or n < 2:
        raise ConfigError("[protection] calibration_runs must be an integer >= 2")
    return n


def make_protection(name: str, cfg: dict, scenario: ScenarioConfig, perception: PerceptionConfig, seed: int):
    """Build the named protection; fusion without a stored prior is calibrated on the fly."""
    if name == "trivial":
        return TrivialProtection()
    fcfg = fusion_config_from(cfg)
    prior = load_prior(cfg)
    if prior is None:
        n = calibration_run_count(cfg)
        log.info("no prior configured; calibrating on %d undisturbed runs", n)
        runs = calibration_runs(scenario, perception, n, seed)
        prior = calibrate_priors(runs, sign_map_for(scenario, perception), window_frames=fcfg.window_frames,
                                 relevance_radius_m=fcfg.relevance_radius_m, nominal_rho=perception.nominal_rho)
    return SensorFusionProtection(prior, fcfg)


# ---------------------------------------------------------------- output


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: Path, obj) -> None:
    write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, quoting=csv.QUOTE_NONNUMERIC, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def manifest(subcommand: str, cfg: dict, seed: int, started: str, **extra) -> dict:
    m = {
        "subcommand": subcommand,
        "config_digest": config_digest(cfg),
        "config": cfg,
        "seed": seed,
        "version": __version__,
        "kernel_backend": BACKEND,
        "started": started,
        "finished": _now(),
    }
    m.update(extra)
    return m


# ---------------------------------------------------------------- subcommands


def cmd_calibrate(args, cfg) -> int:
    started = _now()
    if args.runs < 2:
        raise ConfigError("calibration needs --runs >= 2")
    scenario, perception = scenario_from(cfg), perception_from(cfg)
    fcfg = fusion_config_from(cfg)
    out = Path(args.out)
    runs = calibration_runs(scenario, perception, args.runs, args.seed)
    smap = sign_map_for(scenario, perception)
    prior = calibrate_priors(runs, smap, window_frames=fcfg.window_frames, relevance_radius_m=fcfg.relevance_radius_m,
                             nominal_rho=perception.nominal_rho)
    rows = []
    for run_id, obs in enumerate(runs):
        for j, rate in enumerate(window_agreement_rates(obs, smap, fcfg.window_frames, fcfg.relevance_radius_m)):
            rows.append([run_id, j, rate])
    write_json(out / "prior.json", prior.to_dict())
    write_atomic(out / "agreement.csv", csv_text(["run_id", "window_index", "agreement_rate"], rows))
    write_json(out / "manifest.json", manifest("calibrate", cfg, args.seed, started, runs=args.runs, windows=len(rows)))
    print(json.dumps(prior.to_dict(), sort_keys=True))
    return EXIT_OK


def _disturbance_from_args(args, bounds: DisturbanceBounds) -> Disturbance:
    x = Disturbance(args.strength, args.height_ft, args.roll_deg, args.pitch_deg, args.yaw_deg)
    validate(x, bounds)
    return x


def cmd_score(args, cfg) -> int:
    scenario, perception, bounds, objective = scenario_from(cfg), perception_from(cfg), bounds_from(cfg), objective_from(cfg)
    x = _disturbance_from_args(args, bounds)
    protection = make_protection(args.protection, cfg, scenario, perception, args.seed)
    s = score_disturbance(x, protection, scenario, objective, args.seed, perception=perception, bounds=bounds)
    out = {"disturbance": x.to_record(), "protection": protection.name, "seed": args.seed, **s.to_dict()}
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


EVAL_HEADER = ["index", "strength", "height_ft", "roll_deg", "pitch_deg", "yaw_deg", "effectiveness", "f",
               "counterexample_fraction", "alert_rate", "tier_mode"]


def _eval_row(e) -> list:
    s = e.score
    return [e.index, *e.x.as_array().tolist(), s.effectiveness, s.f_value, s.counterexample_fraction, s.alert_rate,
            s.tier_mode.value]


def cmd_falsify(args, cfg) -> int:
    started = _now()
    scenario, perception, bounds, objective = scenario_from(cfg), perception_from(cfg), bounds_from(cfg), objective_from(cfg)
    campaign = campaign_from(cfg, args)
    protection = make_protection(args.protection, cfg, scenario, perception, args.seed)
    result = run_campaign(campaign, objective, protection, scenario, bounds, perception=perception)
    out = Path(args.out)
    write_atomic(out / "evaluations.csv", csv_text(EVAL_HEADER, [_eval_row(e) for e in result.evaluated]))
    write_json(out / "counterexamples.json", [
        {"index": e.index, "phase": e.phase, "disturbance": e.x.to_record(), "obs_digest": e.obs_digest,
         **e.score.to_dict()}
        for e in result.counterexamples
    ])
    attempts = result.attempts_estimate.to_dict() if result.attempts_estimate else None
    write_json(out / "attempts.json", {"estimate": attempts, "complete": result.complete})
    write_json(out / "manifest.json", manifest(
        "falsify", cfg, args.seed, started, protection=protection.name, evaluations=len(result.evaluated),
        counterexamples=len(result.counterexamples), complete=result.complete, error=result.error,
        campaign=dataclasses.asdict(campaign)))
    if not result.complete:
        log.error("campaign incomplete: %s", result.error)
        return EXIT_RUNTIME
    print(f"{len(result.evaluated)} evaluations, {len(result.counterexamples)} counterexamples")
    return EXIT_COUNTEREXAMPLE if result.counterexamples else EXIT_OK


def scatter_svg(c: Comparison, names=("fusion", "trivial"), width: int = 800, height: int = 600) -> str:
    """Effectiveness against placement distance for both protections, with mean lines."""
    left, right, top, bottom = 70, 20, 30, 60
    dist = c.distance_m
    xmax = max(float(dist.max()), 1e-9) * 1.05
    sx = lambda v: left + (width - left - right) * v / xmax
    sy = lambda v: height - bottom - (height - top - bottom) * v
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        "<desc>Placement distance embeds height in metres and each angle as arc length at the sign radius "
        f"{SIGN_RADIUS_M} m.</desc>",
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{sy(0)}" x2="{width - right}" y2="{sy(0)}" stroke="black"/>',
        f'<line x1="{left}" y1="{sy(0)}" x2="{left}" y2="{sy(1)}" stroke="black"/>',
    ]
    for k in range(6):
        v = k / 5
        parts.append(f'<text x="{left - 8}" y="{sy(v) + 4:.1f}" font-size="11" text-anchor="end">{v:.1f}</text>')
        xv = xmax * k / 5
        parts.append(f'<text x="{sx(xv):.1f}" y="{sy(0) + 16}" font-size="11" text-anchor="middle">{xv:.2f}</text>')
    parts.append(f'<text x="{(left + width - right) / 2}" y="{height - 15}" font-size="13" text-anchor="middle">'
                 "Euclidean distance to undisturbed sign (m)</text>")
    parts.append(f'<text x="18" y="{(top + height - bottom) / 2}" font-size="13" text-anchor="middle" '
                 f'transform="rotate(-90 18 {(top + height - bottom) / 2})">score (adversary effectiveness)</text>')
    colors = ("#1f77b4", "#d62728")
    for series, (eff, name, color) in enumerate(zip((c.eff_a, c.eff_b), names, colors)):
        for d, e in zip(dist, eff):
            px, py = sx(float(d)), sy(float(e))
            if series == 0:
                parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="3" fill="{color}" fill-opacity="0.7"/>')
            else:
                parts.append(f'<rect x="{px - 3:.2f}" y="{py - 3:.2f}" width="6" height="6" fill="none" stroke="{color}"/>')
        mean = float(np.mean(eff))
        parts.append(f'<line x1="{left}" y1="{sy(mean):.2f}" x2="{width - right}" y2="{sy(mean):.2f}" '
                     f'stroke="{color}" stroke-dasharray="6 4"/>')
        parts.append(f'<text x="{width - right - 5}" y="{top + 15 + 16 * series}" font-size="12" fill="{color}" '
                     f'text-anchor="end">{name} (mean {mean:.3f})</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_compare(args, cfg) -> int:
    started = _now()
    if args.points < 10:
        raise ConfigError("compare needs --points >= 10")
    scenario, perception, bounds, objective = scenario_from(cfg), perception_from(cfg), bounds_from(cfg), objective_from(cfg)
    fusion = make_protection("fusion", cfg, scenario, perception, args.seed)
    c = compare_protections(fusion, TrivialProtection(), args.points, args.seed, scenario, objective, bounds, perception)
    out = Path(args.out)
    rows = [[i, *x.as_array().tolist(), d, k, a, b]
            for i, (x, d, k, a, b) in enumerate(zip(c.points, c.distance_m, c.conspicuousness, c.eff_a, c.eff_b))]
    header = ["index", "strength", "height_ft", "roll_deg", "pitch_deg", "yaw_deg", "distance_m", "conspicuousness",
              "effectiveness_fusion", "effectiveness_trivial"]
    write_atomic(out / "comparison.csv", csv_text(header, rows))
    write_atomic(out / "comparison.svg", scatter_svg(c))
    quiet = c.quiet_subset()
    slope, n_slope = c.trend_slope()
    summary = {
        "mean_fusion": float(c.eff_a.mean()),
        "mean_trivial": float(c.eff_b.mean()),
        "separation_pvalue": c.separation_pvalue(),
        "quiet_subset_size": int(len(quiet)),
        "quiet_subset_mean_difference": float((c.eff_a[quiet] - c.eff_b[quiet]).mean()) if len(quiet) else None,
        "trend_slope_conspicuousness_gt_0.6": None if math.isnan(slope) else slope,
        "trend_points": n_slope,
    }
    write_json(out / "manifest.json", manifest(
        "compare", cfg, args.seed, started, points=args.points, low_sample=args.points < LOW_SAMPLE_POINTS,
        distance_embedding=f"height in metres; angles as arc length at radius {SIGN_RADIUS_M} m", summary=summary))
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="parapet", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", parents=[common], help="fit the no-adversary agreement prior")
    c.add_argument("--runs", type=int, default=45)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("score", parents=[common], help="score one disturbance")
    s.add_argument("--protection", choices=("fusion", "trivial"), default="fusion")
    s.add_argument("--strength", type=float, required=True)
    s.add_argument("--height-ft", type=float, default=0.0)
    s.add_argument("--roll-deg", type=float, default=0.0)
    s.add_argument("--pitch-deg", type=float, default=0.0)
    s.add_argument("--yaw-deg", type=float, default=0.0)
    s.set_defaults(func=cmd_score)

    f = sub.add_parser("falsify", parents=[common], help="run a falsification campaign")
    f.add_argument("--protection", choices=("fusion", "trivial"), default="fusion")
    f.add_argument("--bootstrap", type=int)
    f.add_argument("--iterations", type=int)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_falsify)

    m = sub.add_parser("compare", parents=[common], help="score one disturbance set against both protections")
    m.add_argument("--points", type=int, default=200)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (ConfigError, DisturbanceError) as exc:
        print(f"parapet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"parapet: runtime failure: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
