"""Command line front end.

Subcommands map onto the pipeline stages: `simulate` produces bucket records,
`reconstruct` turns saved records into profiles, `sweep` runs the full
frequency scan, `fit` extracts the resonance profile from a saved map, and
`compare` runs a sweep head-to-head against the single-pulse comparator.

Exit codes: 0 success, 2 configuration problems, 3 runtime failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from . import __version__
from .acquisition import AcquisitionPlan, acquire, bit_grid_response, resolve_digitizers
from .fiber import FiberProfile, fiber_from_dict, load_fiber, small_gain_check, delay_to_position
from .io import (
    read_map_csv,
    read_records_csv,
    write_bfs_csv,
    write_image_csv,
    write_manifest,
    write_map_csv,
    write_records_csv,
)
from .patterns import format_patterns
from .reconstruction import dgi_reconstruct, interleave, iwht_reconstruct, stitch_sections
from .spectroscopy import (
    METHODS,
    bfs_profile,
    conventional_spectrum_map,
    default_patterns,
    frequency_sweep,
)
from .validation import ConfigError, DataError

_TOP_KEYS = {
    "schema_version",
    "comment",
    "fiber",
    "plan",
    "digitizer",
    "sweep",
    "method",
    "seed",
    "output_dir",
    "gamma",
}
_PLAN_KEYS = {"k", "bit_duration_ns", "duty_cycle", "sections", "shifts", "rsgi_pairs", "comment"}
_DIGITIZER_KEYS = {"resolution_bits", "full_scale", "noise", "comment"}
_SWEEP_KEYS = {"start_mhz", "stop_mhz", "step_mhz", "comment"}

BUILTIN_CONFIGS = {"short": "experiment_short.json", "long": "experiment_long.json"}


@dataclass(frozen=True)
class ExperimentConfig:
    fiber: FiberProfile
    plan: AcquisitionPlan
    method: str
    seed: int
    output_dir: str
    digitizer_spec: dict | None
    raw: dict
    source: str


def _reject_unknown(name: str, mapping: dict, allowed: set) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"{name}: unknown keys {unknown}; allowed keys are {sorted(allowed)}")


def _sweep_frequencies(sweep: dict) -> tuple[float, ...]:
    _reject_unknown("sweep", sweep, _SWEEP_KEYS)
    try:
        start = float(sweep["start_mhz"])
        stop = float(sweep["stop_mhz"])
        step = float(sweep["step_mhz"])
    except KeyError as exc:
        raise ConfigError(f"sweep: missing key {exc}") from None
    if step <= 0 or stop < start:
        raise ConfigError(f"sweep: invalid range {start}..{stop} step {step}")
    count = int((stop - start) / step + 1e-9) + 1
    return tuple(start + i * step for i in range(count))


def load_experiment(spec: str) -> ExperimentConfig:
    """Load a config by path, or by name as builtin:short / builtin:long."""
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in BUILTIN_CONFIGS:
            raise ConfigError(
                f"unknown builtin config {name!r}; available: {sorted(BUILTIN_CONFIGS)}"
            )
        root = resources.files("ghostfiber").joinpath("data")
        text = root.joinpath(BUILTIN_CONFIGS[name]).read_text()
        read_fiber = lambda rel: fiber_from_dict(json.loads(root.joinpath(rel).read_text()))
    else:
        if not os.path.exists(spec):
            raise ConfigError(f"config file not found: {spec}")
        with open(spec) as handle:
            try:
                text = handle.read()
            except OSError as exc:
                raise ConfigError(f"cannot read {spec}: {exc}") from None
        base = os.path.dirname(os.path.abspath(spec))
        read_fiber = lambda rel: load_fiber(rel if os.path.isabs(rel) else os.path.join(base, rel))
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{spec}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{spec}: top level must be an object")
    _reject_unknown(spec, raw, _TOP_KEYS)
    if raw.get("schema_version") != 1:
        raise ConfigError(f"{spec}: schema_version must be 1")
    for key in ("fiber", "plan", "sweep"):
        if key not in raw:
            raise ConfigError(f"{spec}: missing required key {key!r}")

    fiber = read_fiber(raw["fiber"])
    plan_raw = dict(raw["plan"])
    _reject_unknown("plan", plan_raw, _PLAN_KEYS)
    try:
        plan = AcquisitionPlan(
            k=plan_raw["k"],
            bit_duration_s=float(plan_raw["bit_duration_ns"]) * 1e-9,
            duty_cycle=float(plan_raw.get("duty_cycle", 0.5)),
            sections=int(plan_raw.get("sections", 1)),
            shifts=int(plan_raw.get("shifts", 5)),
            frequencies_mhz=_sweep_frequencies(raw["sweep"]),
            gamma=float(raw.get("gamma", 1.0)),
            rsgi_pairs=plan_raw.get("rsgi_pairs"),
        )
    except KeyError as exc:
        raise ConfigError(f"plan: missing key {exc}") from None

    method = raw.get("method", "whgi")
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {method!r}")
    digitizer_spec = raw.get("digitizer")
    if digitizer_spec is not None:
        if not isinstance(digitizer_spec, dict):
            raise ConfigError("digitizer: must be an object")
        _reject_unknown("digitizer", digitizer_spec, _DIGITIZER_KEYS)
    return ExperimentConfig(
        fiber=fiber,
        plan=plan,
        method=method,
        seed=int(raw.get("seed", 0)),
        output_dir=raw.get("output_dir", "out"),
        digitizer_spec=digitizer_spec,
        raw=raw,
        source=spec,
    )


def resolve_config_digitizers(cfg: ExperimentConfig) -> list[DigitizerConfig] | None:
    """Per-section digitizers from the config's digitizer block (None = ideal)."""
    spec = cfg.digitizer_spec
    if spec is None:
        return None
    bits = int(spec.get("resolution_bits", 14))
    full_scale = spec.get("full_scale", "auto")
    if full_scale == "auto":
        full_scale = None
    elif full_scale is not None:
        full_scale = float(full_scale)
    noise = spec.get("noise", 0.0)
    fraction = None
    sigma = None
    if isinstance(noise, dict):
        unknown = sorted(set(noise) - {"fraction_of_mean_bucket"})
        if unknown:
            raise ConfigError(f"digitizer.noise: unknown keys {unknown}")
        fraction = float(noise.get("fraction_of_mean_bucket", 0.0))
    else:
        sigma = float(noise)
    return resolve_digitizers(
        cfg.plan,
        cfg.fiber,
        resolution_bits=bits,
        seed=cfg.seed,
        noise_fraction=fraction,
        noise_sigma=sigma,
        full_scale=full_scale,
    )


def reference_frequency(cfg: ExperimentConfig) -> float:
    """Strongest resonance of the fiber, judged on the first section's grid."""
    candidates = sorted({s.bfs_mhz for s in cfg.fiber.segments})
    totals = [
        float(bit_grid_response(cfg.plan, cfg.fiber, nu, 0, 0).values.sum())
        for nu in candidates
    ]
    return candidates[int(np.argmax(totals))]


def _base_manifest(cfg: ExperimentConfig, digitizers) -> dict:
    plan = cfg.plan
    manifest = {
        "version": __version__,
        "config": cfg.raw,
        "config_source": cfg.source,
        "method": cfg.method,
        "sample_rate_hz": plan.sample_rate_hz,
        "conventional_rate_hz": plan.conventional_rate_hz,
        "rate_reduction_factor": plan.rate_reduction_factor,
        "sequence_duration_s": plan.sequence_duration_s,
        "effective_pulse_s": plan.effective_pulse_s,
        "fiber_length_m": cfg.fiber.total_length_m,
        "sections_required": plan.required_sections(cfg.fiber),
        "reference_frequency_mhz": reference_frequency(cfg),
        "small_gain_ratio": small_gain_check(
            cfg.fiber,
            reference_frequency(cfg),
            delay_to_position(plan.effective_pulse_s, cfg.fiber.group_index),
        ),
    }
    if digitizers is not None:
        ref = manifest["reference_frequency_mhz"]
        manifest["digitizers"] = [
            {
                "section": m,
                "noise_sigma": d.noise_sigma,
                "noise_fraction": d.noise_fraction,
                "sigma_at_reference": d.effective_sigma(
                    plan.gamma
                    * float(bit_grid_response(plan, cfg.fiber, ref, m, 0).values.sum())
                    / 2.0
                ),
                "full_scale": d.full_scale,
                "resolution_bits": d.resolution_bits,
            }
            for m, d in enumerate(digitizers)
        ]
    return manifest


def _prepare_out(cfg: ExperimentConfig, override: str | None) -> str:
    out = override or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "method", None):
        if args.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {args.method!r}")
        cfg = replace(cfg, method=args.method)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def cmd_simulate(args) -> int:
    cfg = _apply_overrides(load_experiment(args.config), args)
    out = _prepare_out(cfg, args.out)
    digitizers = resolve_config_digitizers(cfg)
    patterns = default_patterns(cfg.plan, cfg.method, cfg.seed)
    freqs = args.frequency or [reference_frequency(cfg)]

    t0 = time.perf_counter()
    clip_total = 0
    for nu in freqs:
        records = []
        for m in range(cfg.plan.sections):
            plan_m = cfg.plan
            if digitizers is not None:
                plan_m = replace(cfg.plan, digitizer=digitizers[m])
            for q in range(cfg.plan.shifts):
                records.extend(acquire(plan_m, cfg.fiber, patterns, nu, section=m, shift=q))
        clip_total += sum(r.clip_count for r in records)
        write_records_csv(os.path.join(out, f"records_{nu:g}.csv"), records)
    elapsed = time.perf_counter() - t0

    manifest = _base_manifest(cfg, digitizers)
    manifest["frequencies_mhz"] = list(freqs)
    manifest["n_patterns"] = len(patterns)
    manifest["clipped_buckets"] = clip_total
    write_manifest(os.path.join(out, "manifest.json"), manifest)
    if args.dump_patterns:
        with open(args.dump_patterns, "w") as handle:
            handle.write(format_patterns(patterns, order=args.pattern_order))
    print(
        f"simulate: {len(freqs)} frequency(ies), {len(patterns)} patterns, "
        f"{cfg.plan.sections} section(s) x {cfg.plan.shifts} shift(s) "
        f"-> {out} [{elapsed:.2f} s]",
        file=sys.stderr,
    )
    return 0


def cmd_reconstruct(args) -> int:
    cfg = _apply_overrides(load_experiment(args.config), args)
    out = _prepare_out(cfg, args.out)
    patterns = default_patterns(cfg.plan, cfg.method, cfg.seed)
    records = read_records_csv(args.records)
    by_freq: dict[float, dict[tuple[int, int], list]] = {}
    for r in records:
        by_freq.setdefault(r.frequency_mhz, {}).setdefault((r.section, r.shift), []).append(r)

    for nu in sorted(by_freq):
        groups = by_freq[nu]
        per_section = []
        for m in range(cfg.plan.sections):
            per_shift = []
            for q in range(cfg.plan.shifts):
                if (m, q) not in groups:
                    raise DataError(f"records are missing section {m}, shift {q} at {nu:g} MHz")
                start = cfg.plan.section_start_delay_s(m) + q * cfg.plan.bit_duration_s / cfg.plan.shifts
                if cfg.method == "iwht":
                    res = iwht_reconstruct(
                        groups[(m, q)], patterns,
                        delay_start_s=start, group_index=cfg.fiber.group_index,
                    )
                else:
                    res = dgi_reconstruct(
                        groups[(m, q)], patterns,
                        delay_start_s=start, group_index=cfg.fiber.group_index,
                    )
                per_shift.append(res)
            per_section.append(interleave(per_shift, cfg.plan.shifts))
        profile = stitch_sections(per_section)
        write_image_csv(os.path.join(out, f"image_{nu:g}.csv"), profile)
        print(
            f"reconstruct: {nu:g} MHz, {len(profile)} samples, "
            f"method {profile.method} -> {out}",
            file=sys.stderr,
        )
    return 0


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(load_experiment(args.config), args)
    out = _prepare_out(cfg, args.out)
    digitizers = resolve_config_digitizers(cfg)
    t0 = time.perf_counter()
    spectrum = frequency_sweep(
        cfg.plan, cfg.fiber, cfg.method, section_digitizers=digitizers, pattern_seed=cfg.seed
    )
    elapsed = time.perf_counter() - t0
    write_map_csv(os.path.join(out, f"map_{cfg.method}.csv"), spectrum)
    manifest = _base_manifest(cfg, digitizers)
    manifest["n_frequencies"] = len(spectrum.frequencies_mhz)
    manifest["n_positions"] = len(spectrum.positions_m)
    write_manifest(os.path.join(out, "manifest.json"), manifest)
    print(
        f"sweep: {len(spectrum.frequencies_mhz)} frequencies x "
        f"{len(spectrum.positions_m)} positions ({cfg.method}) -> {out} [{elapsed:.1f} s]",
        file=sys.stderr,
    )
    return 0


def cmd_fit(args) -> int:
    spectrum = read_map_csv(args.map)
    profile = bfs_profile(spectrum)
    out_path = args.out or os.path.join(
        os.path.dirname(os.path.abspath(args.map)), f"bfs_{spectrum.method}.csv"
    )
    write_bfs_csv(out_path, profile)
    n_ok = int(np.sum(~np.isnan(profile.bfs_mhz)))
    print(f"fit: {n_ok}/{len(profile)} positions resolved -> {out_path}", file=sys.stderr)
    return 0


def cmd_compare(args) -> int:
    cfg = _apply_overrides(load_experiment(args.config), args)
    out = _prepare_out(cfg, args.out)
    digitizers = resolve_config_digitizers(cfg)
    plan = cfg.plan

    t0 = time.perf_counter()
    spectrum = frequency_sweep(
        plan, cfg.fiber, cfg.method, section_digitizers=digitizers, pattern_seed=cfg.seed
    )
    profile = bfs_profile(spectrum)
    write_map_csv(os.path.join(out, f"map_{cfg.method}.csv"), spectrum)
    write_bfs_csv(os.path.join(out, f"bfs_{cfg.method}.csv"), profile)

    # same detector and shot budget for the single-pulse reference:
    # one pattern and its complement per Hadamard row, times the shifts
    n_average = 2 ** (plan.k + 1) * plan.shifts
    conventional = conventional_spectrum_map(
        plan, cfg.fiber, section_digitizers=digitizers, n_average=n_average
    )
    conv_profile = bfs_profile(conventional)
    write_map_csv(os.path.join(out, "map_conventional.csv"), conventional)
    write_bfs_csv(os.path.join(out, "bfs_conventional.csv"), conv_profile)
    elapsed = time.perf_counter() - t0

    both = ~np.isnan(profile.bfs_mhz) & ~np.isnan(conv_profile.bfs_mhz)
    diffs = np.abs(profile.bfs_mhz[both] - conv_profile.bfs_mhz[both])
    comparison = {
        "method": cfg.method,
        "n_positions": len(profile),
        "n_mutually_resolved": int(both.sum()),
        "max_abs_diff_mhz": float(diffs.max()) if diffs.size else None,
        "mean_abs_diff_mhz": float(diffs.mean()) if diffs.size else None,
        "fraction_within_1mhz": float(np.mean(diffs <= 1.0)) if diffs.size else None,
        "conventional_n_average": n_average,
        "sample_rate_hz": plan.sample_rate_hz,
        "conventional_rate_hz": plan.conventional_rate_hz,
        "rate_reduction_factor": plan.rate_reduction_factor,
    }
    write_manifest(os.path.join(out, "comparison.json"), comparison)
    manifest = _base_manifest(cfg, digitizers)
    manifest["conventional_n_average"] = n_average
    write_manifest(os.path.join(out, "manifest.json"), manifest)
    print(
        f"compare: {cfg.method} vs conventional over {len(profile)} positions, "
        f"{int(both.sum())} mutually resolved -> {out} [{elapsed:.1f} s]",
        file=sys.stderr,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ghostfiber",
        description="Sequence-coded distributed fiber sensing: simulate, reconstruct, fit.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, records=False, needs_map=False):
        if needs_map:
            p.add_argument("--map", required=True, help="spectrum map CSV to fit")
            p.add_argument("--out", default=None, help="output CSV path")
            return
        p.add_argument(
            "--config",
            required=True,
            help="experiment JSON path, or builtin:short / builtin:long",
        )
        p.add_argument("--method", choices=METHODS, default=None, help="override the method")
        p.add_argument("--seed", type=int, default=None, help="override the seed")
        p.add_argument("--out", default=None, help="override the output directory")
        if records:
            p.add_argument("--records", required=True, help="bucket records CSV")

    p_sim = sub.add_parser("simulate", help="acquire bucket records")
    add_common(p_sim)
    p_sim.add_argument(
        "--frequency", type=float, action="append", default=None,
        help="probe detuning in MHz (repeatable; default: strongest fiber line)",
    )
    p_sim.add_argument("--dump-patterns", default=None, help="also write the pattern set here")
    p_sim.add_argument(
        "--pattern-order", choices=("interleaved", "blocked"), default="interleaved",
        help="row order in the pattern dump",
    )
    p_sim.set_defaults(func=cmd_simulate)

    p_rec = sub.add_parser("reconstruct", help="reconstruct profiles from saved records")
    add_common(p_rec, records=True)
    p_rec.set_defaults(func=cmd_reconstruct)

    p_sweep = sub.add_parser("sweep", help="full frequency sweep to a spectrum map")
    add_common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_fit = sub.add_parser("fit", help="fit a resonance profile from a spectrum map")
    add_common(p_fit, needs_map=True)
    p_fit.set_defaults(func=cmd_fit)

    p_cmp = sub.add_parser("compare", help="sweep and fit, against the single-pulse reference")
    add_common(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
