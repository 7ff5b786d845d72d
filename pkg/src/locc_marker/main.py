"""Main entry point for locc-marker."""

from __future__ import annotations

import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from locc_marker import __version__
from locc_marker.claims import CLAIMS, run_claims
from locc_marker.config import LogLevel, OutputFormat, RunConfig, load_run_config
from locc_marker.detect import (
    DetectingCertificate,
    ExactInfeasibilityReport,
    Overall,
    SpanObstruction,
    clsd_verdict,
    clsm_verdict,
    exact_product_detect,
    heuristic_detect,
)
from locc_marker.ensembles.base import Ensemble
from locc_marker.ensembles.codec import parse_ensemble, serialize_ensemble
from locc_marker.ensembles.registry import build_named, get_registry
from locc_marker.errors import (
    BranchCapExceededError,
    CertificateVerificationError,
    InvalidParameterError,
    LoccMarkerError,
    MissingCertificateError,
    NoProtocolError,
    UndecidableFragmentError,
)
from locc_marker.marking import check_linear_independence, derive_marking_set, global_detectors
from locc_marker.metrics import write_metrics
from locc_marker.protocol import (
    NAMED_PROTOCOLS,
    build_named_protocol,
    build_sequential_marking_protocol,
    count_nodes,
    named_protocol_hypotheses,
    protocol_to_dict,
    simulate,
)
from locc_marker.report import (
    classification_payload,
    claims_payload,
    document,
    dumps,
    render_text,
    simulation_payload,
    verdict_payload,
)
from locc_marker.upb import classify_unextendible_basis

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CLAIM_FAILURE = 1
EXIT_INPUT_ERROR = 2
EXIT_CAP_EXCEEDED = 3
EXIT_UNDECIDABLE = 4
EXIT_NO_PROTOCOL = 5

# Checked in order; the first matching class decides the exit code
EXIT_CODES: list[tuple[type[BaseException], int]] = [
    (BranchCapExceededError, EXIT_CAP_EXCEEDED),
    (UndecidableFragmentError, EXIT_UNDECIDABLE),
    (NoProtocolError, EXIT_NO_PROTOCOL),
    (MissingCertificateError, EXIT_NO_PROTOCOL),
    (CertificateVerificationError, EXIT_NO_PROTOCOL),
    (LoccMarkerError, EXIT_INPUT_ERROR),
    (FileNotFoundError, EXIT_INPUT_ERROR),
    (ValidationError, EXIT_INPUT_ERROR),
]

# Ensembles whose marking protocol is a named one rather than the sequential construction
DEFAULT_PROTOCOLS = {"yu": "yu_marking", "xb_from_upb": "upb_marking"}


def setup_logging(level: str) -> None:
    """Configure logging with timestamps."""
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )


def exit_code_for(error: BaseException) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(error, cls):
            return code
    raise error


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse command line arguments."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        "-c",
        type=Path,
        default=None,
        help="Run configuration file (default: LOCC_MARKER_CONFIG env var or built-in defaults)",
    )
    common.add_argument("--seed", type=int, default=None, help="Heuristic seed (overrides config)")
    common.add_argument(
        "--restarts", type=int, default=None, help="Heuristic restarts (overrides config)"
    )
    common.add_argument(
        "--branch-cap", type=int, default=None, help="Maximum exact-search branches"
    )
    common.add_argument(
        "--format", choices=[f.value for f in OutputFormat], default=None, help="Report format"
    )
    common.add_argument(
        "--out", type=Path, default=None, help="Write the report here instead of stdout"
    )
    common.add_argument("--log-level", choices=[lv.value for lv in LogLevel], default=None)
    common.add_argument(
        "--metrics-out", type=Path, default=None, help="Write prometheus metrics textfile"
    )

    source = argparse.ArgumentParser(add_help=False)
    group = source.add_mutually_exclusive_group()
    group.add_argument("--named", default=None, help="Registered ensemble name (see 'ensembles')")
    group.add_argument("--file", type=Path, default=None, help="Ensemble JSON document")
    source.add_argument(
        "--d", type=int, default=None, help="Dimension parameter of parameterized ensembles"
    )
    source.add_argument("--m", type=int, default=None, help="Number of marked states")

    parser = argparse.ArgumentParser(
        prog="locc-marker",
        description="Conclusive local discrimination and marking of quantum state ensembles",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument(
        "--version", "-v", action="version", version=f"locc-marker {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    with_source = [common, source]

    sub.add_parser(
        "analyze", parents=with_source, help="Independence, CLSD and optional m-CLSM verdicts"
    )
    sub.add_parser("classify", parents=with_source, help="UB/GUB/UPB/GUPB classification")
    detect = sub.add_parser(
        "detect", parents=with_source, help="Search a detecting state for one member"
    )
    detect.add_argument("--target", required=True, help="Member label")
    mark = sub.add_parser(
        "mark", parents=with_source, help="Build and simulate a marking protocol"
    )
    mark.add_argument("--protocol", choices=list(NAMED_PROTOCOLS), default=None)
    mark.add_argument(
        "--mode", default=None, help="yu_marking mode: strict01 or any_anticorrelated"
    )
    mark.add_argument("--target", default=None, help="pw_conclusive target index or label")
    mark.add_argument("--member", default=None, help="upb_marking Tiles member label")
    reproduce = sub.add_parser("reproduce", parents=[common], help="Re-run the claim registry")
    reproduce.add_argument(
        "claims", nargs="*", default=["all"], help=f"Claim ids or 'all' ({', '.join(CLAIMS)})"
    )
    sub.add_parser(
        "ensembles", parents=with_source, help="List builders, or print one ensemble"
    )
    return parser.parse_args(argv)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Load the run configuration, then apply command line overrides."""
    config = load_run_config(args.config)
    update: dict[str, Any] = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.restarts is not None:
        update["restarts"] = args.restarts
    if args.branch_cap is not None:
        update["branch_cap"] = args.branch_cap
    if args.format is not None:
        update["output_format"] = OutputFormat(args.format)
    if args.log_level is not None:
        update["log_level"] = LogLevel(args.log_level)
    return config.model_copy(update=update)


def load_source(args: argparse.Namespace, config: RunConfig) -> Ensemble:
    if args.named:
        return build_named(args.named, d=args.d)
    if args.file:
        path = Path(args.file)
        if not path.exists():
            raise FileNotFoundError(f"Ensemble file not found: {path}")
        return parse_ensemble(path.read_text(), config.tolerances)
    raise InvalidParameterError("one of --named or --file is required")


def _search_options(config: RunConfig) -> dict[str, Any]:
    return {
        "branch_cap": config.branch_cap,
        "restarts": config.restarts,
        "seed": config.seed,
        "max_iterations": config.max_iterations,
        "tol": config.tolerances,
    }


# =============================================================================
# Commands
# =============================================================================
def cmd_analyze(args: argparse.Namespace, config: RunConfig) -> tuple[dict[str, Any], int]:
    e = load_source(args, config)
    payload: dict[str, Any] = {"ensemble": e.name, "members": e.labels}
    if not e.is_pure:
        payload["note"] = "mixed members: use 'mark' with a named protocol"
        return document("analysis", payload), EXIT_OK

    independence = check_linear_independence(e.vectors(), config.tolerances)
    payload["independence"] = independence
    if independence.independent:
        detectors = global_detectors(e, config.tolerances)
        payload["global_min_detector_overlap"] = detectors.min_target_overlap
    verdict = clsd_verdict(e, **_search_options(config))
    payload["clsd"] = verdict_payload(verdict)
    if args.m is not None:
        marking = clsm_verdict(e, args.m, base_verdict=verdict, **_search_options(config))
        payload["clsm"] = verdict_payload(marking) | {"m": args.m}
    return document("analysis", payload), EXIT_OK


def cmd_classify(args: argparse.Namespace, config: RunConfig) -> tuple[dict[str, Any], int]:
    e = load_source(args, config)
    if args.m is not None:
        e = derive_marking_set(e, args.m, config.tolerances).derived
    classification = classify_unextendible_basis(e, config.tolerances)
    doc = document("classification", classification_payload(classification))
    if not classification.decidable:
        logger.error(f"{e.name}: outside the exactly decidable fragments")
        return doc, EXIT_UNDECIDABLE
    return doc, EXIT_OK


def cmd_detect(args: argparse.Namespace, config: RunConfig) -> tuple[dict[str, Any], int]:
    e = load_source(args, config)
    if args.m is not None:
        e = derive_marking_set(e, args.m, config.tolerances).derived
    if e.is_product:
        try:
            outcome = exact_product_detect(e, args.target, config.branch_cap, config.tolerances)
            kind = "certificate" if isinstance(outcome, DetectingCertificate) else "infeasibility"
            payload = {"ensemble": e.name, "method": "exact", "result": outcome}
            return document(kind, payload), EXIT_OK
        except BranchCapExceededError as exc:
            if e.structure.num_parties != 2:
                raise
            logger.warning(f"{exc}; falling back to heuristic search")
    options = _search_options(config)
    del options["branch_cap"]
    report = heuristic_detect(e, args.target, **options)
    payload = {"ensemble": e.name, "method": "heuristic", "result": report}
    return document("heuristic_search", payload), EXIT_OK


def _pw_target(value: str | None) -> int | None:
    if value is None:
        return None
    if value.isdigit():
        return int(value)
    labels = build_named("pw_trine").labels
    if value not in labels:
        raise InvalidParameterError(f"pw_conclusive target must be 0-2 or one of {labels}")
    return labels.index(value)


def cmd_mark(args: argparse.Namespace, config: RunConfig) -> tuple[dict[str, Any], int]:
    protocol_name = args.protocol or DEFAULT_PROTOCOLS.get(args.named or "")
    if protocol_name is not None:
        expected_m = 1 if protocol_name == "pw_conclusive" else 2
        if args.m is not None and args.m != expected_m:
            raise InvalidParameterError(f"{protocol_name} marks m={expected_m}, got m={args.m}")
        root = build_named_protocol(
            protocol_name,
            d=args.d,
            mode=args.mode,
            target=_pw_target(args.target),
            member=args.member,
        )
        hypotheses = named_protocol_hypotheses(protocol_name, d=args.d)
    else:
        e = load_source(args, config)
        m = args.m or 1
        verdict = clsd_verdict(e, heuristic_over_cap=True, **_search_options(config))
        if verdict.overall != Overall.DISTINGUISHABLE:
            blocked = [
                label
                for label, v in verdict.per_state.items()
                if isinstance(v.evidence, (ExactInfeasibilityReport, SpanObstruction))
            ]
            raise NoProtocolError(
                f"{e.name} is not conclusively locally distinguishable "
                f"({verdict.overall.value}; exact evidence for {blocked}); "
                f"run 'analyze --m {m}' for the certificates"
            )
        derived = derive_marking_set(e, m, config.tolerances)
        root = build_sequential_marking_protocol(derived, verdict.certificates())
        hypotheses = derived
        protocol_name = "sequential_marking"

    report = simulate(root, hypotheses)
    payload = simulation_payload(report) | {"protocol": protocol_name, "nodes": count_nodes(root)}
    if config.output_format == OutputFormat.JSON:
        payload["tree"] = protocol_to_dict(root)
    return document("simulation", payload), EXIT_OK


def cmd_reproduce(args: argparse.Namespace, config: RunConfig) -> tuple[dict[str, Any], int]:
    run = asyncio.run(run_claims(args.claims, config))
    code = EXIT_CLAIM_FAILURE if run.failed else EXIT_OK
    if run.failed:
        logger.error(f"Failed claims: {', '.join(run.failed)}")
    return document("claims", claims_payload(run.records)), code


def cmd_ensembles(args: argparse.Namespace, config: RunConfig) -> tuple[dict[str, Any] | str, int]:
    if args.named or args.file:
        e = load_source(args, config)
        if args.m is not None:
            return derive_marking_set(e, args.m, config.tolerances).to_json(), EXIT_OK
        return serialize_ensemble(e), EXIT_OK
    builders = [
        {"name": b.builder_id, "description": b.description, "parameters": list(b.parameters)}
        for b in get_registry().list_builders()
    ]
    return document("ensembles", {"ensembles": builders}), EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "classify": cmd_classify,
    "detect": cmd_detect,
    "mark": cmd_mark,
    "reproduce": cmd_reproduce,
    "ensembles": cmd_ensembles,
}


def emit(result: dict[str, Any] | str, config: RunConfig, out: Path | None) -> None:
    """Write a report to ``out`` or stdout in the configured format."""
    if isinstance(result, str):
        text = result
    elif config.output_format == OutputFormat.JSON:
        text = dumps(result)
    else:
        text = render_text(result)
    if out is None:
        sys.stdout.write(text + "\n")
    else:
        out.write_text(text + "\n")
        logger.info(f"Wrote report to {out}")


def main(argv: list[str] | None = None) -> int:
    """Main entry point."""
    args = parse_args(argv)
    try:
        config = resolve_config(args)
    except (FileNotFoundError, ValidationError) as e:
        setup_logging("INFO")
        logging.error(f"Configuration error: {e}")
        return EXIT_INPUT_ERROR

    setup_logging(config.log_level.value)
    logger.debug(f"locc-marker v{__version__}: {args.command}")

    try:
        result, code = COMMANDS[args.command](args, config)
    except Exception as e:
        code = exit_code_for(e)
        logger.error(f"{type(e).__name__}: {e}")
        return code
    finally:
        if args.metrics_out is not None:
            write_metrics(args.metrics_out)

    emit(result, config, args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
