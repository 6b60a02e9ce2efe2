"""Command-line client for the engine.

Subcommands: compile, generate, validate, serve, replay, digest.
Exit codes: 0 success / all hard checks pass, 1 validation failure,
2 input or configuration error, 3 backend error.
Diagnostics go to stderr; data goes to files (or stdout with `--out -`).

Configuration precedence: explicit flags > environment variables
(SPATIALPROMPT_API_KEY, SPATIALPROMPT_BACKEND_URL) > --config file > defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .backend import API_KEY_ENV, BACKEND_URL_ENV, BackendConfig, generate as run_generation
from .compiler import compile as compile_sketch, parse_constraints, serialize_constraints
from .errors import BackendError, ConfigurationError, SpatialPromptError
from .meshio import export_mesh_obj, load_mesh_obj
from .prompting import SemanticPrompt, assemble, canonical_request_bytes
from .sketch import document_digest, parse as parse_sketch, replay
from .validation import Tolerances, serialize_report, validate as validate_mesh

EXIT_OK = 0
EXIT_VALIDATION_FAILED = 1
EXIT_INPUT_ERROR = 2
EXIT_BACKEND_ERROR = 3


def _fail(message: str, code: int) -> int:
    print(message, file=sys.stderr)
    return code


def _describe(exc: Exception) -> str:
    if isinstance(exc, SpatialPromptError):
        return f"{exc.reason}: {exc}"
    return str(exc)


def _read_bytes(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    return Path(path).read_bytes()


def _write_bytes(path: str, data: bytes) -> None:
    if path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    else:
        Path(path).write_bytes(data)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}")
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {path} must hold a JSON object")
    return data


def _backend_config(args) -> BackendConfig:
    """flags > env > config file > defaults."""
    file_cfg = _load_config_file(getattr(args, "config", None))
    kind = getattr(args, "backend", None) or file_cfg.get("backend", "mock")
    endpoint = (getattr(args, "endpoint", None)
                or os.environ.get(BACKEND_URL_ENV)
                or file_cfg.get("endpoint"))
    api_key = (getattr(args, "api_key", None)
               or os.environ.get(API_KEY_ENV)
               or file_cfg.get("api_key"))
    config = BackendConfig(kind=kind, endpoint=endpoint, api_key=api_key)
    if getattr(args, "overall_timeout", None):
        config.overall_timeout = args.overall_timeout
    config.validate()
    return config


def _tolerances(args) -> Tolerances:
    return Tolerances(
        containment_fraction=args.containment_fraction,
        proportion_rel=args.proportion_tol,
        proximity_min=args.proximity_min,
        proximity_diagonal_factor=args.proximity_factor,
    )


def _add_tolerance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--containment-fraction", type=float, default=0.99,
                   help="minimum vertex fraction inside the global box")
    p.add_argument("--proportion-tol", type=float, default=0.15,
                   help="relative tolerance on the aspect triple")
    p.add_argument("--proximity-min", type=float, default=0.01,
                   help="scaffold p95 floor in meters")
    p.add_argument("--proximity-factor", type=float, default=0.05,
                   help="scaffold p95 tolerance as a fraction of the box diagonal")


def cmd_compile(args) -> int:
    try:
        doc = parse_sketch(_read_bytes(args.infile))
        cs = compile_sketch(doc, epsilon=args.epsilon,
                            resample_spacing=args.resample_spacing)
    except (OSError, SpatialPromptError) as exc:
        return _fail(f"compile: {_describe(exc)}", EXIT_INPUT_ERROR)
    _write_bytes(args.out, serialize_constraints(cs))
    return EXIT_OK


def cmd_generate(args) -> int:
    try:
        config = _backend_config(args)
    except ConfigurationError as exc:
        return _fail(f"generate: {_describe(exc)}", EXIT_INPUT_ERROR)
    try:
        doc = parse_sketch(_read_bytes(args.infile))
        cs = compile_sketch(doc, epsilon=args.epsilon,
                            resample_spacing=args.resample_spacing)
        prompt = SemanticPrompt(text=args.prompt,
                                style_tags=tuple(args.style_tag or ()),
                                negative_text=args.negative)
        request = assemble(cs, prompt, args.seed)
    except (OSError, SpatialPromptError) as exc:
        return _fail(f"generate: {_describe(exc)}", EXIT_INPUT_ERROR)
    if args.request_out:
        _write_bytes(args.request_out, canonical_request_bytes(request))
    try:
        result = run_generation(request, config)
    except (BackendError, ConfigurationError) as exc:
        return _fail(f"generate: backend: {_describe(exc)}", EXIT_BACKEND_ERROR)
    report = validate_mesh(result.mesh, cs, _tolerances(args))
    _write_bytes(args.out, export_mesh_obj(result.mesh))
    if args.report:
        _write_bytes(args.report, serialize_report(report))
    print(f"generate: backend={result.metadata['backend']} "
          f"task={result.metadata['task_id']} enforced={result.metadata['enforced']} "
          f"score={report.score:.3f} overall_pass={report.overall_pass}",
          file=sys.stderr)
    return EXIT_OK if report.overall_pass else EXIT_VALIDATION_FAILED


def cmd_validate(args) -> int:
    try:
        mesh = load_mesh_obj(_read_bytes(args.mesh))
        cs = parse_constraints(_read_bytes(args.constraints))
        report = validate_mesh(mesh, cs, _tolerances(args))
    except (OSError, SpatialPromptError) as exc:
        return _fail(f"validate: {_describe(exc)}", EXIT_INPUT_ERROR)
    if args.report:
        _write_bytes(args.report, serialize_report(report))
    for check in report.checks:
        status = "pass" if check.passed else "FAIL"
        print(f"validate: [{status}] {check.name} ({check.kind}) "
              f"measured={check.measured:.6g} tol={check.tolerance:.6g}", file=sys.stderr)
    print(f"validate: score={report.score:.3f} overall_pass={report.overall_pass}",
          file=sys.stderr)
    return EXIT_OK if report.overall_pass else EXIT_VALIDATION_FAILED


def cmd_replay(args) -> int:
    try:
        doc = parse_sketch(_read_bytes(args.infile))
        replayed = replay(doc)
    except (OSError, SpatialPromptError) as exc:
        return _fail(f"replay: {_describe(exc)}", EXIT_INPUT_ERROR)
    stored = document_digest(doc)
    rebuilt = document_digest(replayed)
    print(rebuilt)
    if rebuilt != stored:
        return _fail(f"replay: digest mismatch (stored {stored})", EXIT_VALIDATION_FAILED)
    return EXIT_OK


def cmd_digest(args) -> int:
    try:
        doc = parse_sketch(_read_bytes(args.infile))
    except (OSError, SpatialPromptError) as exc:
        return _fail(f"digest: {_describe(exc)}", EXIT_INPUT_ERROR)
    print(document_digest(doc))
    return EXIT_OK


def cmd_serve(args) -> int:
    try:
        config = _backend_config(args)
    except ConfigurationError as exc:
        return _fail(f"serve: {exc}", EXIT_INPUT_ERROR)
    host, _, port = args.listen.rpartition(":")
    if not host or not port.isdigit():
        return _fail(f"serve: bad --listen {args.listen!r} (expected host:port)",
                     EXIT_INPUT_ERROR)
    static_dir = args.static if args.static and Path(args.static).is_dir() else None
    from .service import create_app

    import uvicorn

    uvicorn.run(create_app(config, static_dir=static_dir), host=host, port=int(port),
                log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spatialprompt",
                                     description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile a sketch into constraints")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--resample-spacing", type=float, default=0.01)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("generate", help="compile, generate an asset, validate it")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--style-tag", action="append")
    p.add_argument("--negative")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=["mock", "remote"], default=None)
    p.add_argument("--endpoint")
    p.add_argument("--api-key", dest="api_key")
    p.add_argument("--config")
    p.add_argument("--overall-timeout", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--request-out", dest="request_out")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--resample-spacing", type=float, default=0.01)
    _add_tolerance_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("validate", help="measure a mesh against constraints")
    p.add_argument("--mesh", required=True)
    p.add_argument("--constraints", required=True)
    p.add_argument("--report")
    _add_tolerance_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("serve", help="run the collaborative session service")
    p.add_argument("--listen", default="127.0.0.1:8000")
    p.add_argument("--backend", choices=["mock", "remote"], default=None)
    p.add_argument("--endpoint")
    p.add_argument("--api-key", dest="api_key")
    p.add_argument("--config")
    p.add_argument("--static", help="directory with the web studio build")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="re-apply the op log and verify the digest")
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("digest", help="print the canonical document digest")
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(func=cmd_digest)

    return parser


def main(argv=None) -> None:
    args = build_parser().parse_args(argv)
    sys.exit(args.func(args))


if __name__ == "__main__":
    main()
