"""Command-line entry points.

One subcommand per pipeline step plus `run` (headless end-to-end), `serve`
(review API + UI), `synth` (ground-truthed test scan) and `score` (compare a
finished run against synthetic truth). Step commands execute every earlier
step that is still pending, so `packscan extract -c scan.toml` on a fresh
output directory does the whole chain up to extraction.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import PackscanError
from .session import Session, SessionConfig, parse_memory, score_session
from .synth import SceneSpec, TierSpec, default_scene, generate, small_scene


def _add_session_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", "-c", help="per-scan TOML config")
    p.add_argument("--scan-dir", help="directory of z-slice images")
    p.add_argument("--layout", help="scan-layout CSV")
    p.add_argument("--out", help="output directory")
    p.add_argument("--align-file", help="text file with the 5 alignment values")
    p.add_argument("--max-memory", help="memory budget, e.g. 16GiB")
    p.add_argument("--workers", type=int)
    p.add_argument("--isolevel", type=float)
    p.add_argument("--pad", type=int)
    p.add_argument("--scan-id")
    p.add_argument("--force", action="store_true",
                   help="recompute even if sidecars exist")


def _session_from_args(args) -> Session:
    overrides = {
        "max_memory": parse_memory(args.max_memory) if args.max_memory else None,
        "workers": args.workers,
        "isolevel": args.isolevel,
        "pad": args.pad,
        "scan_id": args.scan_id,
    }
    if args.config:
        cfg = SessionConfig.from_toml(args.config, **overrides)
        if args.scan_dir:
            cfg.scan_dir = Path(args.scan_dir)
        if args.layout:
            cfg.layout_path = Path(args.layout)
        if args.out:
            cfg.out_dir = Path(args.out)
    else:
        if not (args.scan_dir and args.layout and args.out):
            raise PackscanError(
                "need --config or all of --scan-dir/--layout/--out"
            )
        cfg = SessionConfig(
            scan_dir=Path(args.scan_dir),
            layout_path=Path(args.layout),
            out_dir=Path(args.out),
            **{k: v for k, v in overrides.items() if v is not None},
        )
    if args.align_file:
        from .volume import AlignmentParams
        cfg.align = AlignmentParams.from_text(
            Path(args.align_file).read_text()
        ).to_json()
    return Session(cfg)


def _run_through(args, step: str) -> int:
    session = _session_from_args(args)
    report = session.run(through=step, force=args.force)
    print(json.dumps(report.to_json(), indent=2))
    return 1 if report.failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="packscan",
        description="Segment and surface packed micro-CT scans.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a ground-truthed synthetic scan")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--preset", choices=("default", "small"), default="default")
    p_synth.add_argument("--offset", type=float, default=0.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--spec", help="JSON file with SceneSpec fields")

    for step in ("align", "subsample", "thresholds", "tiers", "grid",
                 "extract", "surface", "run"):
        p = sub.add_parser(
            step,
            help=("run the whole pipeline" if step == "run"
                  else f"run the pipeline through the {step} step"),
        )
        _add_session_args(p)
        if step == "run":
            p.add_argument("--through", default="surface")

    p_serve = sub.add_parser("serve", help="serve the review API and UI")
    _add_session_args(p_serve)
    p_serve.add_argument("--bind", default="127.0.0.1:8787")
    p_serve.add_argument("--static-dir", help="review UI bundle to serve at /")

    p_score = sub.add_parser("score", help="score a run against synthetic truth")
    p_score.add_argument("--out", required=True, help="session output directory")
    p_score.add_argument("--truth", required=True, help="truth.json (or its directory)")

    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            if args.spec:
                raw = json.loads(Path(args.spec).read_text())
                raw["tiers"] = tuple(TierSpec(**t) for t in raw.get("tiers", []))
                spec = SceneSpec(**raw)
            elif args.preset == "small":
                spec = small_scene(offset=args.offset, seed=args.seed)
            else:
                spec = default_scene(offset=args.offset, seed=args.seed)
            truth = generate(spec, args.out)
            print(json.dumps({
                "out": args.out,
                "objects": len(truth["objects"]),
                "tiers": len(truth["tiers"]),
                "alignment": truth["alignment"],
                "thresholds": truth["thresholds"],
            }, indent=2))
            return 0
        if args.command == "score":
            result = score_session(args.out, args.truth)
            print(json.dumps(result, indent=2))
            ok = result.get("recall") == 1.0 and result.get(
                "all_centroids_in_cell", True
            )
            return 0 if ok else 1
        if args.command == "serve":
            from .server import serve
            session = _session_from_args(args)
            static = args.static_dir
            if static is None:
                bundled = Path.cwd() / "frontend" / "dist"
                static = bundled if bundled.is_dir() else None
            serve(session, bind=args.bind, static_dir=static)
            return 0
        if args.command == "run":
            return _run_through(args, args.through)
        return _run_through(args, args.command)
    except PackscanError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
