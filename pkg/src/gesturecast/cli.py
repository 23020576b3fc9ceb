"""Command-line entry point.

Subcommands: estimate, synth, extract, evaluate, serve.
Exit codes: 0 ok, 2 invalid input, 3 seed below the SNR quality gate,
4 I/O failure, 5 environment failure (e.g. busy port).
"""

from __future__ import annotations

import argparse
import json
import os
import socket
import sys
import tempfile
from pathlib import Path

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_QUALITY = 3
EXIT_IO = 4
EXIT_ENV = 5


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _parse_features(raw: str | None) -> list[str]:
    from .features import registry

    if not raw:
        return [d.id for d in registry()]
    return [f.strip() for f in raw.split(",") if f.strip()]


def _noise_from_args(args) -> "object":
    from .synthesis import NoiseSpec, ZERO_NOISE

    if args.zero_noise:
        return ZERO_NOISE
    return NoiseSpec(n_mu=args.noise_mu, n_sigma=args.noise_sigma,
                     n_D=args.noise_amplitude, n_theta=args.noise_angle,
                     n_t0=args.noise_t0)


def _load_seed(path: str):
    from .gestures import load_gesture, require_valid

    gesture = load_gesture(path)
    require_valid(gesture, context=path)
    return gesture


def cmd_estimate(args) -> int:
    from .errors import (CorpusFormatError, InsufficientDataError, QualityError,
                         UnknownFeatureError, ValidationFailure)
    from .features import registry
    from .pipeline import EstimationRequest, estimate
    from .stats import histogram

    for seed_path in args.seeds:
        if not Path(seed_path).is_file():
            return _fail(EXIT_IO, f"seed file not found: {seed_path}")
    try:
        seeds = [_load_seed(p) for p in args.seeds]
    except CorpusFormatError as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    except ValidationFailure as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))

    feature_ids = _parse_features(args.features)
    try:
        result = estimate(EstimationRequest(
            seeds, feature_ids, n_per_seed=args.n, noise=_noise_from_args(args),
            rng_seed=args.seed_rng))
    except QualityError as exc:
        return _fail(EXIT_QUALITY, str(exc))
    except (UnknownFeatureError, InsufficientDataError, ValidationFailure,
            ValueError) as exc:
        return _fail(EXIT_VALIDATION, str(exc))

    units = {d.id: d.unit for d in registry() if d.id in feature_ids}
    body = {
        "errors": None,
        "result": {fid: est.to_obj() for fid, est in result.per_feature.items()},
        "meta": {"rngSeed": args.seed_rng, "populationSize": result.population_size,
                 "seedSnrDb": list(result.seed_snrs), "units": units},
    }
    try:
        _atomic_write(Path(args.out), (json.dumps(body, indent=1) + "\n").encode())
        if args.hist:
            hist_dir = Path(args.hist)
            for fid, est in result.per_feature.items():
                spec = histogram(est.values)
                _atomic_write(hist_dir / f"{fid}.hist.json", (json.dumps({
                    "feature": fid,
                    "binEdges": list(spec.bin_edges),
                    "counts": list(spec.counts)}, indent=1) + "\n").encode())
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    print(f"wrote {args.out} ({result.population_size} variants, "
          f"{len(result.per_feature)} features)")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .errors import CorpusFormatError, QualityError, ValidationFailure
    from .gestures import gesture_to_obj
    from .synthesis import synthesize_population

    if args.n < 1:
        return _fail(EXIT_VALIDATION, "--n must be at least 1")
    if not Path(args.seed).is_file():
        return _fail(EXIT_IO, f"seed file not found: {args.seed}")
    try:
        seed = _load_seed(args.seed)
    except (CorpusFormatError, ValidationFailure) as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    try:
        variants, extraction = synthesize_population(
            seed, args.n, noise=_noise_from_args(args), rng=args.seed_rng)
    except QualityError as exc:
        return _fail(EXIT_QUALITY, str(exc))

    out_dir = Path(args.out_dir)
    try:
        for i, gesture in enumerate(variants):
            payload = json.dumps(gesture_to_obj(gesture), indent=1) + "\n"
            _atomic_write(out_dir / f"variant_{i:04d}.json", payload.encode())
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    print(f"wrote {len(variants)} gestures to {out_dir} "
          f"(seed SNR {extraction.snr_db:.2f} dB)")
    return EXIT_OK


def cmd_extract(args) -> int:
    from .errors import (CorpusFormatError, DegenerateInputError, QualityError,
                         ValidationFailure)
    from .extractor import extract
    from .model import plan_to_obj

    if not Path(args.gesture).is_file():
        return _fail(EXIT_IO, f"gesture file not found: {args.gesture}")
    try:
        gesture = _load_seed(args.gesture)
        result = extract(gesture)
    except QualityError as exc:
        return _fail(EXIT_QUALITY, str(exc))
    except (CorpusFormatError, ValidationFailure, DegenerateInputError) as exc:
        return _fail(EXIT_VALIDATION, str(exc))

    obj = plan_to_obj(result.plan)
    obj["snrDb"] = result.snr_db
    if args.json:
        print(json.dumps(obj, indent=1))
    else:
        print(f"SNR: {result.snr_db:.2f} dB "
              f"({result.plan.primitive_count()} primitives, "
              f"{len(result.plan.strokes)} strokes, "
              f"{result.iterations} refinement iterations)")
    if args.out:
        try:
            _atomic_write(Path(args.out), (json.dumps(obj, indent=1) + "\n").encode())
        except OSError as exc:
            return _fail(EXIT_IO, str(exc))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .errors import CorpusFormatError, InsufficientDataError, ValidationFailure
    from .evaluation import export_report, run_ev1, run_ev2
    from .gestures import load_corpus

    if not Path(args.corpus).is_dir():
        return _fail(EXIT_IO, f"corpus directory not found: {args.corpus}")
    try:
        corpus = load_corpus(args.corpus, format=args.corpus_format,
                             time_unit=args.time_unit)
    except ValidationFailure as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    except CorpusFormatError as exc:
        return _fail(EXIT_VALIDATION, str(exc))

    feature_ids = _parse_features(args.features)
    try:
        if args.ev2:
            report = run_ev2(corpus, feature_ids, rng=args.seed_rng,
                             noise=_noise_from_args(args))
        else:
            report = run_ev1(corpus, feature_ids, rng=args.seed_rng,
                             n_per_seed=args.n, noise=_noise_from_args(args))
    except InsufficientDataError as exc:
        return _fail(EXIT_VALIDATION, str(exc))

    try:
        _atomic_write(Path(args.report), export_report(report, format=args.format))
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    scenario = "ev2" if args.ev2 else "ev1"
    print(f"wrote {scenario} report to {args.report} "
          f"({len(report.cells) or len(report.ev2_cells)} cells, "
          f"{len(report.skipped)} skipped seeds)")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((args.host, args.port))
    except OSError as exc:
        probe.close()
        return _fail(EXIT_ENV, f"cannot bind {args.host}:{args.port}: {exc}")
    probe.close()
    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def _add_noise_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--zero-noise", action="store_true",
                        help="disable all parameter perturbation")
    parser.add_argument("--noise-mu", type=float, default=0.1)
    parser.add_argument("--noise-sigma", type=float, default=0.1)
    parser.add_argument("--noise-amplitude", type=float, default=0.15,
                        help="relative amplitude noise half-width")
    parser.add_argument("--noise-angle", type=float, default=0.06,
                        help="angle noise half-width, radians")
    parser.add_argument("--noise-t0", type=float, default=0.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gesturecast",
        description="Estimate stroke-gesture feature distributions from one "
                    "or a few example gestures.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate feature distributions from seeds")
    p.add_argument("seeds", nargs="+", help="seed gesture JSON files")
    p.add_argument("--features", help="comma-separated feature ids (default: all)")
    p.add_argument("--n", type=int, default=100, help="variants per seed")
    p.add_argument("--seed-rng", type=int, default=0)
    p.add_argument("--out", required=True, help="output JSON file")
    p.add_argument("--hist", help="directory for per-feature histogram files")
    _add_noise_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("synth", help="synthesize gesture variants from a seed")
    p.add_argument("seed", help="seed gesture JSON file")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--seed-rng", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    _add_noise_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="fit an action plan to a gesture")
    p.add_argument("gesture", help="gesture JSON file")
    p.add_argument("--json", action="store_true", help="print the plan as JSON")
    p.add_argument("--out", help="write the plan JSON to a file")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("evaluate", help="run the leave-one-out evaluation harness")
    p.add_argument("corpus", help="corpus directory")
    p.add_argument("--corpus-format", choices=("canonical-json", "csv-directory"),
                   default="canonical-json")
    p.add_argument("--time-unit", choices=("ms", "s"), default="ms")
    p.add_argument("--features", help="comma-separated feature ids (default: all)")
    p.add_argument("--n", type=int, default=100, help="variants per seed (ev1)")
    p.add_argument("--seed-rng", type=int, default=0)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--ev1", action="store_true",
                      help="statistic estimation scenario (default)")
    mode.add_argument("--ev2", action="store_true",
                      help="distribution estimation scenario")
    p.add_argument("--report", required=True, help="output report file")
    p.add_argument("--format", choices=("json", "csv", "markdown-table"),
                   default="json")
    _add_noise_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="run the estimation HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
