"""``numfunnel`` command-line entry point.

Exit codes: 0 success / expectations met, 1 analytic failure (expectation
miss, empty cohort), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .attackplanner import (
    TemplateSet,
    classify_attack,
    craft_vector,
    craft_vishing_plan,
    primary_channel,
    reachable_channels,
)
from .correlator import build_dossier
from .errors import (
    ConfigInvalid,
    CorruptFixture,
    EmptyCohort,
    Malformed,
    MalformedResponse,
    NumfunnelError,
    RangeExhausted,
    TemplateError,
)
from .funnel import RunConfig, compare_report, load_expectations, run_funnel
from .numberspace import (
    NumberRange,
    expand_vanity_pattern,
    load_patterns,
    parse_number,
    read_numbers,
    write_numbers,
)
from .serviceclients import CallerIdRegistry, CredentialPool, RateLimitPolicy, ServiceClients
from .studykit import (
    read_responses,
    reconstruct_table1_cohort,
    summarize,
    write_responses_csv,
    write_responses_jsonl,
)
from .synthworld import FixtureWorld, ProceduralWorld, WorldConfig, load_world, parse_world_config, snapshot_world

SEED_ENV = "NUMFUNNEL_SEED"

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(NumfunnelError):
    pass


def _err(message: str) -> None:
    print(f"numfunnel: error: {message}", file=sys.stderr)


def _read_kv(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(f"cannot read run config: {exc}") from None
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigInvalid(f"{path}:{lineno}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _pick(flag, conf: dict[str, str], key: str, default=None, cast=str):
    """Flag beats config file beats default."""
    if flag is not None:
        return flag
    if key in conf:
        try:
            return cast(conf[key])
        except ValueError:
            raise ConfigInvalid(f"bad value for {key}: {conf[key]!r}") from None
    return default


def _bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


def _world_config(path: str | None, seed: int | None) -> WorldConfig:
    """Seed precedence: --seed flag, then the config file, then $NUMFUNNEL_SEED."""
    text = ""
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigInvalid(f"cannot read world config: {exc}") from None
    env_seed = os.environ.get(SEED_ENV)
    if env_seed:
        # earlier keys are overridden by later ones, so the file wins
        text = f"seed={env_seed}\n{text}"
    return parse_world_config(text, {"seed": str(seed)} if seed is not None else None)


def _pool_from_args(args) -> list:
    if args.pool and args.seed_number:
        raise UsageError("use either --pool or --seed-number/--count")
    if args.pool:
        return read_numbers(args.pool)
    if args.seed_number:
        if args.count is None:
            raise UsageError("--seed-number needs --count")
        return list(NumberRange(parse_number(args.seed_number), args.count))
    raise UsageError("a pool is required: --pool FILE or --seed-number N --count K")


# -- subcommands -------------------------------------------------------------


def cmd_gen_numbers(args) -> int:
    if bool(args.seed_number) == bool(args.vanity_file):
        raise UsageError("give exactly one of --seed-number or --vanity-file")
    if args.seed_number:
        if args.count is None:
            raise UsageError("--seed-number needs --count")
        if args.count < 0:
            raise UsageError("--count must be non-negative")
        numbers = list(NumberRange(parse_number(args.seed_number), args.count))
    else:
        seen = set()
        for pattern in load_patterns(args.vanity_file):
            seen.update(expand_vanity_pattern(pattern, mobile_only=args.mobile_only))
        numbers = sorted(seen)
        if args.limit is not None:
            numbers = numbers[: args.limit]
    if args.out in (None, "-"):
        sys.stdout.write("".join(f"{n}\n" for n in numbers))
    else:
        write_numbers(args.out, numbers)
        print(f"wrote {len(numbers)} numbers to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_world_snapshot(args) -> int:
    config = _world_config(args.world_config, args.seed)
    written = snapshot_world(config, _pool_from_args(args), args.out)
    print(f"wrote {written} records to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_run_funnel(args) -> int:
    conf = _read_kv(args.config)
    world_config = _world_config(args.world_config, args.seed)
    workers = _pick(args.workers, conf, "workers", 1, int)
    credentials = _pick(args.credentials, conf, "credentials", 1, int)
    max_requests = _pick(args.rate_limit, conf, "rate_limit", 3000, int)
    window = _pick(args.window, conf, "window", 60.0, float)
    hash_ids = args.hash_ids or _bool(conf.get("hash_ids", "false"))
    dossiers = _pick(args.dossiers, conf, "dossiers")
    report_path = _pick(args.report, conf, "report")
    expect = _pick(args.expect, conf, "expect")
    try:
        policy = RateLimitPolicy(max_requests, window)
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from None
    run_config = RunConfig(
        workers=workers, credentials=credentials, rate_limit=policy, hash_ids=hash_ids, dossier_path=dossiers
    )
    # "builtin" selects the packaged calibration targets
    expectations = load_expectations(None if expect == "builtin" else expect) if expect else None
    world = FixtureWorld(load_world(args.world_fixture)) if args.world_fixture else None

    report = run_funnel(world_config, _pool_from_args(args), run_config, world=world)
    if report_path in (None, "-"):
        sys.stdout.write(report.to_json())
    else:
        Path(report_path).write_text(report.to_json(), encoding="utf-8")
    if not args.quiet:
        print(report.table(), file=sys.stderr)
        print(f"wall time {report.wall_time:.2f}s", file=sys.stderr)
    if expectations is None:
        return EXIT_OK
    comparison = compare_report(report, expectations, args.tolerance)
    for check in comparison.checks:
        print(check.describe(), file=sys.stderr)
    print("expectations: " + ("PASS" if comparison.passed else "FAIL"), file=sys.stderr)
    return comparison.exit_code


def cmd_study_analyze(args) -> int:
    try:
        responses = read_responses(args.responses)
    except OSError as exc:
        raise ConfigInvalid(f"cannot read responses: {exc}") from None
    summary = summarize(responses)
    if args.out:
        Path(args.out).write_text(summary.to_json() + "\n", encoding="utf-8")
    else:
        print(summary.to_json())
    print(summary.table(), file=sys.stderr)
    return EXIT_OK


def cmd_study_cohort(args) -> int:
    cohort = reconstruct_table1_cohort(include_filtered=args.include_filtered)
    if args.out.endswith((".jsonl", ".ndjson")):
        write_responses_jsonl(args.out, cohort)
    else:
        write_responses_csv(args.out, cohort)
    print(f"wrote {len(cohort)} responses to {args.out}", file=sys.stderr)
    return EXIT_OK


def _registry(path: str, world=None) -> CallerIdRegistry:
    registry = CallerIdRegistry(world)
    if Path(path).exists():
        registry.load(path)
    return registry


def cmd_registry_add(args) -> int:
    registry = _registry(args.registry)
    entry = registry.register_caller_profile(parse_number(args.number), args.name, args.linked_social)
    registry.save(args.registry)
    print(f"registered {entry.number} as {entry.display_name!r}")
    return EXIT_OK


def cmd_call_demo(args) -> int:
    world = ProceduralWorld(_world_config(args.world_config, args.seed)) if args.world_config else None
    registry = _registry(args.registry, world)
    claimed = parse_number(args.claimed_src) if args.claimed_src else None
    call = registry.present_call(parse_number(args.true_src), claimed)
    print(call.render())
    return EXIT_OK


def cmd_plan(args) -> int:
    config = _world_config(args.world_config, args.seed)
    templates = TemplateSet.load(args.templates)
    clients = ServiceClients.over(ProceduralWorld(config), CredentialPool())
    registry = _registry(args.registry) if args.registry else CallerIdRegistry()
    dossier = build_dossier(parse_number(args.number), clients, config.patterns)
    ott = dossier.channels_checked.get("ott", False)
    channels = reachable_channels(dossier, ott)
    attack_class = classify_attack(dossier)
    out = {"dossier": dossier.to_dict(args.hash_ids), "class": attack_class.label,
           "channels": sorted(c.value for c in channels)}
    channel = primary_channel(channels)
    if channel is not None:
        out["vector"] = {"channel": channel.value, "payload": craft_vector(dossier, attack_class, channel, templates).payload}
    plan = craft_vishing_plan(dossier, registry, args.entity)
    out["vishing"] = {"strategy": plan.strategy.value, "caller": plan.caller_profile.display_name, "script": plan.script}
    print(json.dumps(out, indent=2, ensure_ascii=False))
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def _add_pool_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pool", help="file with one number per line")
    p.add_argument("--seed-number", help="first number of a sequential pool")
    p.add_argument("--count", type=int, help="size of the sequential pool")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="numfunnel", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-numbers", help="write a sequential or vanity number pool")
    p.add_argument("--seed-number")
    p.add_argument("--count", type=int)
    p.add_argument("--vanity-file")
    p.add_argument("--mobile-only", action="store_true")
    p.add_argument("--limit", type=int)
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_gen_numbers)

    p = sub.add_parser("world-snapshot", help="materialize a world slice into a JSONL fixture")
    p.add_argument("--world-config")
    p.add_argument("--seed", type=int)
    _add_pool_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_world_snapshot)

    p = sub.add_parser("run-funnel", help="run the pipeline and emit a stage report")
    p.add_argument("--world-config", required=True, help="flat key=value world config")
    p.add_argument("--world-fixture", help="JSONL fixture to use instead of the procedural world")
    p.add_argument("--config", help="flat key=value run config; flags override it")
    p.add_argument("--seed", type=int, help=f"overrides the config seed (default from ${SEED_ENV})")
    _add_pool_args(p)
    p.add_argument("--workers", type=int)
    p.add_argument("--credentials", type=int, help="credential pool size")
    p.add_argument("--rate-limit", type=int, help="requests per window per credential")
    p.add_argument("--window", type=float, help="rate-limit window in virtual seconds")
    p.add_argument("--expect", help="expectations JSON, or 'builtin' for the packaged targets")
    p.add_argument("--tolerance", type=float, help="override every expectation tolerance")
    p.add_argument("--report", help="report JSON path (default stdout)")
    p.add_argument("--dossiers", help="write per-number dossiers as JSONL")
    p.add_argument("--hash-ids", action="store_true", help="hash numbers and social ids in dossier export")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_run_funnel)

    p = sub.add_parser("study-analyze", help="classify study responses and compute success rates")
    p.add_argument("--responses", required=True, help="CSV or JSONL responses")
    p.add_argument("--out")
    p.set_defaults(func=cmd_study_analyze)

    p = sub.add_parser("study-cohort", help="write the cohort reconstructed from the outcome table")
    p.add_argument("--out", required=True)
    p.add_argument("--include-filtered", action="store_true", help="add the 129 briefing failures")
    p.set_defaults(func=cmd_study_cohort)

    p = sub.add_parser("registry-add", help="register a caller profile (no verification)")
    p.add_argument("--registry", default="registry.jsonl")
    p.add_argument("--number", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--linked-social")
    p.set_defaults(func=cmd_registry_add)

    p = sub.add_parser("call-demo", help="show how an incoming call is presented")
    p.add_argument("--registry", default="registry.jsonl")
    p.add_argument("--true-src", required=True)
    p.add_argument("--claimed-src")
    p.add_argument("--world-config", help="also resolve names from the synthetic world")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_call_demo)

    p = sub.add_parser("plan", help="dossier, attack class, vector and vishing plan for one number")
    p.add_argument("--number", required=True)
    p.add_argument("--world-config")
    p.add_argument("--seed", type=int)
    p.add_argument("--templates")
    p.add_argument("--registry")
    p.add_argument("--entity", default="Sample Bank")
    p.add_argument("--hash-ids", action="store_true")
    p.set_defaults(func=cmd_plan)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EmptyCohort as exc:
        _err(f"empty cohort: {exc}")
        return EXIT_FAIL
    except MalformedResponse as exc:
        _err(f"malformed response at {exc}")
        return EXIT_USAGE
    except (Malformed, RangeExhausted, ConfigInvalid, CorruptFixture, TemplateError, UsageError) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_USAGE
    except OSError as exc:
        _err(str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
