"""Command-line entry point.

Subcommands: match, eval, synth, bench, oracle-check. Every run writes a
manifest capturing the resolved configuration, input/output paths, and
per-stage wall-clock timings. Exit codes: 0 ok, 1 input error, 2 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .core import (
    ConfigError,
    FeatureSetError,
    MatcherConfig,
    load_feature_set,
)
from .evaluation import DEFAULT_TOL, compare, overlay_records, score
from .oracle import bp_oracle_suite
from .progressive import (
    InsufficientSeedsError,
    load_matches,
    match,
    match_non_progressive,
    save_matches,
)
from .candidates import nndr_match
from .synth import (
    SceneGenerationError,
    SceneSpec,
    generate,
    load_scene,
    save_scene,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INTERNAL = 2

_INPUT_ERRORS = (
    FeatureSetError,
    ConfigError,
    InsufficientSeedsError,
    SceneGenerationError,
    FileNotFoundError,
    IsADirectoryError,
    NotADirectoryError,
    PermissionError,
    IndexError,
    ValueError,
    json.JSONDecodeError,
)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("matcher configuration")
    g.add_argument("--config", help="JSON file with MatcherConfig fields")
    g.add_argument("--lambda", dest="lam", type=float, help="pairwise weight")
    g.add_argument("--kappa", type=int, help="candidate count per feature")
    g.add_argument("--alpha", type=str, help="unmatched penalty (a float or 'inf')")
    g.add_argument("--nndr-theta", type=float, help="seed ratio-test threshold")
    g.add_argument("--seed-count", type=int, help="initial seed count r")
    g.add_argument("--knn", type=int, help="graph neighbor count K")
    g.add_argument("--theta-seed", type=float, help="consistency gate (squared px)")
    g.add_argument("--bp-max-iters", type=int)
    g.add_argument("--bp-epsilon", type=float)
    g.add_argument("--rng-seed", type=int)


def _resolve_config(args: argparse.Namespace) -> MatcherConfig:
    fields: dict = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            fields.update(json.load(fh))
    for name in ("lam", "kappa", "nndr_theta", "seed_count", "knn",
                 "theta_seed", "bp_max_iters", "bp_epsilon", "rng_seed"):
        value = getattr(args, name, None)
        if value is not None:
            fields[name] = value
    alpha = getattr(args, "alpha", None)
    if alpha is not None:
        fields["alpha"] = math.inf if str(alpha).lower() in ("inf", "infinity") else float(alpha)
    return MatcherConfig(**fields)


def _write_manifest(path: str, command: str, config: MatcherConfig | None,
                    inputs: list[str], outputs: list[str],
                    timings: dict[str, float]) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": (
            {k: (str(v) if v == math.inf else v)
             for k, v in dataclasses.asdict(config).items()}
            if config else None
        ),
        "inputs": [os.path.abspath(p) for p in inputs],
        "outputs": [os.path.abspath(p) for p in outputs],
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _manifest_path(args: argparse.Namespace, anchor: str) -> str:
    return args.manifest or (anchor + ".manifest.json")


# -- subcommands -----------------------------------------------------------


def _cmd_match(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    t0 = time.perf_counter()
    ref = load_feature_set(args.ref)
    tgt = load_feature_set(args.tgt)
    load_s = time.perf_counter() - t0

    t1 = time.perf_counter()
    if args.matcher == "prog":
        outcome = match(ref, tgt, config)
    else:
        outcome = match_non_progressive(ref, tgt, config)
    match_s = time.perf_counter() - t1

    save_matches(outcome, args.out)
    outputs = [args.out]
    if args.bp_trace:
        with open(args.bp_trace, "w", encoding="utf-8") as fh:
            for record in outcome.records:
                for i, delta in enumerate(record.bp_deltas, start=1):
                    fh.write(json.dumps(
                        {"round": record.round, "iter": i, "max_delta": delta}) + "\n")
        outputs.append(args.bp_trace)
    timings = {"load_s": load_s, "match_s": match_s}
    _write_manifest(_manifest_path(args, args.out), "match", config,
                    [args.ref, args.tgt], outputs, timings)
    print(f"matched {len(outcome.matches)} of {outcome.n_ref} features "
          f"in {len(outcome.records)} rounds")
    print(f"load {load_s:.3f}s  match {match_s:.3f}s")
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    ref = load_feature_set(args.ref)
    tgt = load_feature_set(args.tgt)
    with open(args.gt, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    H = np.array(payload["warp"], dtype=np.float64).reshape(3, 3)
    records, _ = load_matches(args.matches)
    report = score(records, ref, tgt, H, args.tol)
    eval_s = time.perf_counter() - t0

    line = json.dumps(report.record())
    outputs = []
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(line + "\n")
        outputs.append(args.out)
    if args.overlay:
        with open(args.overlay, "w", encoding="utf-8") as fh:
            for rec in overlay_records(records, ref, tgt, H, args.tol):
                fh.write(json.dumps(rec) + "\n")
        outputs.append(args.overlay)
    anchor = args.out or args.matches
    _write_manifest(_manifest_path(args, anchor), "eval", None,
                    [args.matches, args.ref, args.tgt, args.gt], outputs,
                    {"eval_s": eval_s})
    print(line)
    return EXIT_OK


def _build_spec(args: argparse.Namespace) -> SceneSpec:
    if args.spec:
        with open(args.spec, "r", encoding="utf-8") as fh:
            fields = json.load(fh)
        if "warp" in fields:
            fields["warp"] = np.array(fields["warp"], dtype=np.float64).reshape(3, 3)
        if "region" in fields and fields["region"] is not None:
            fields["region"] = tuple(fields["region"])
        return SceneSpec(**fields)
    if args.homography:
        warp = np.array(args.homography, dtype=np.float64).reshape(3, 3)
    else:
        ang = math.radians(args.rotation_deg)
        c, s = args.scale * math.cos(ang), args.scale * math.sin(ang)
        warp = np.array([[c, -s, args.tx], [s, c, args.ty], [0, 0, 1.0]])
    return SceneSpec(
        n_features=args.n_features,
        width=args.width,
        height=args.height,
        warp=warp,
        descriptor_len=args.descriptor_len,
        descriptor_noise_sigma=args.descriptor_noise,
        position_noise_sigma=args.position_noise,
        unpaired_fraction=args.unpaired_fraction,
        repetition_groups=args.repetition_groups,
        repetition_group_size=args.group_size,
        rng_seed=args.rng_seed if args.rng_seed is not None else 0,
    )


def _cmd_synth(args: argparse.Namespace) -> int:
    spec = _build_spec(args)
    t0 = time.perf_counter()
    ref, tgt, gt = generate(spec)
    written = save_scene(args.out_dir, ref, tgt, gt)
    synth_s = time.perf_counter() - t0
    _write_manifest(os.path.join(args.out_dir, "manifest.json"), "synth", None,
                    [args.spec] if args.spec else [], written, {"synth_s": synth_s})
    print(f"wrote scene with {len(ref)} reference / {len(tgt)} target features "
          f"to {args.out_dir}")
    return EXIT_OK


_BENCH_MATCHERS = ("nearest", "nndr1", "nndr2", "nonprog", "prog")


def _run_bench_matcher(name: str, ref, tgt, config: MatcherConfig):
    if name == "nearest":
        return nndr_match(ref, tgt, 1.0)
    if name == "nndr1":
        return nndr_match(ref, tgt, 0.9)
    if name == "nndr2":
        return nndr_match(ref, tgt, 0.8)
    if name == "nonprog":
        return match_non_progressive(ref, tgt, config).correspondences()
    if name == "prog":
        return match(ref, tgt, config).correspondences()
    raise ValueError(f"unknown matcher {name!r}; pick from {_BENCH_MATCHERS}")


def _cmd_bench(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    matchers = [m.strip() for m in args.matchers.split(",") if m.strip()]
    for m in matchers:
        if m not in _BENCH_MATCHERS:
            raise ValueError(f"unknown matcher {m!r}; pick from {_BENCH_MATCHERS}")
    scene_dirs = sorted(
        os.path.join(args.scene_dir, d)
        for d in os.listdir(args.scene_dir)
        if os.path.isdir(os.path.join(args.scene_dir, d))
    )
    if not scene_dirs:
        raise FileNotFoundError(f"no scene directories under {args.scene_dir}")

    rows = []
    clocks: dict[str, float] = {m: 0.0 for m in matchers}
    for scene_dir in scene_dirs:
        ref, tgt, gt = load_scene(scene_dir)
        level = os.path.basename(scene_dir.rstrip(os.sep))
        for m in matchers:
            t0 = time.perf_counter()
            pairs = _run_bench_matcher(m, ref, tgt, config)
            clocks[m] += time.perf_counter() - t0
            rows.append((m, level, score(pairs, ref, tgt, gt.warp, args.tol)))

    table = compare(rows)
    print(table)
    for m in matchers:
        print(f"{m:>10}: {clocks[m]:.3f}s over {len(scene_dirs)} scene(s)")
    outputs = []
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(table)
        outputs.append(args.out)
    anchor = args.out or os.path.join(args.scene_dir, "bench")
    _write_manifest(_manifest_path(args, anchor), "bench", config,
                    scene_dirs, outputs, {f"{m}_s": clocks[m] for m in matchers})
    return EXIT_OK


def _cmd_oracle_check(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    failures = 0
    for i, (bp_value, oracle_value) in enumerate(
        bp_oracle_suite(args.graphs, args.rng_seed)
    ):
        if abs(bp_value - oracle_value) > 1e-9:
            failures += 1
            print(f"graph {i}: decode {bp_value:.12f} != oracle {oracle_value:.12f}")
    elapsed = time.perf_counter() - t0
    print(f"{args.graphs - failures}/{args.graphs} tree graphs decoded optimally "
          f"in {elapsed:.2f}s")
    return EXIT_OK if failures == 0 else EXIT_INTERNAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="progmatch",
        description="Geometry-aware feature matching with progressive candidate search",
    )
    parser.add_argument("--version", action="version", version=f"progmatch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", help="match two feature-set files")
    p.add_argument("--ref", required=True, help="reference feature-set file")
    p.add_argument("--tgt", required=True, help="target feature-set file")
    p.add_argument("--out", required=True, help="match records output")
    p.add_argument("--matcher", choices=("prog", "nonprog"), default="prog")
    p.add_argument("--manifest", help="manifest path (default: OUT.manifest.json)")
    p.add_argument("--bp-trace",
                   help="write per-iteration max message deltas here (jsonl)")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_match)

    p = sub.add_parser("eval", help="score a match file against ground truth")
    p.add_argument("--matches", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--gt", required=True, help="ground-truth JSON with a 'warp' field")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--out", help="write the report record here")
    p.add_argument("--overlay", help="write per-match overlay records here")
    p.add_argument("--manifest")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic scene bundle")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--spec", help="SceneSpec JSON file (overrides flags)")
    p.add_argument("--n-features", type=int, default=500)
    p.add_argument("--width", type=float, default=640.0)
    p.add_argument("--height", type=float, default=480.0)
    p.add_argument("--rotation-deg", type=float, default=0.0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--tx", type=float, default=0.0)
    p.add_argument("--ty", type=float, default=0.0)
    p.add_argument("--homography", type=float, nargs=9, metavar="H",
                   help="row-major 3x3 warp (overrides the similarity flags)")
    p.add_argument("--descriptor-len", type=int, default=32)
    p.add_argument("--descriptor-noise", type=float, default=0.0)
    p.add_argument("--position-noise", type=float, default=0.0)
    p.add_argument("--unpaired-fraction", type=float, default=0.0)
    p.add_argument("--repetition-groups", type=int, default=0)
    p.add_argument("--group-size", type=int, default=4)
    p.add_argument("--rng-seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("bench", help="run matchers over scene bundles")
    p.add_argument("--scene-dir", required=True,
                   help="directory whose subdirectories are scene bundles")
    p.add_argument("--matchers", default="nearest,nndr1,nndr2,nonprog,prog")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--out", help="write the comparison table here")
    p.add_argument("--manifest")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("oracle-check", help="BP-vs-exhaustive suite on random trees")
    p.add_argument("--graphs", type=int, default=200)
    p.add_argument("--rng-seed", type=int, default=0)
    p.set_defaults(func=_cmd_oracle_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:  # pragma: no cover - internal invariant violations
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
