"""End-to-end pipeline over a number pool and the stage-count report."""

from __future__ import annotations

import json
import math
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .attackplanner import CHANNEL_PRIORITY, classify_attack, primary_channel, reachable_channels
from .correlator import build_dossier
from .errors import ConfigInvalid, PoolExhausted
from .numberspace import PhoneNumber
from .serviceclients import CredentialPool, FriendSource, RateLimitPolicy, ServiceClients, VirtualClock, World
from .synthworld import ATTRIBUTES, ProceduralWorld, WorldConfig

PAPER_RATIOS = Path(__file__).parent / "data" / "paper_ratios.json"

NOTES = (
    "Public-sources friends outside the friendlist are synthetic noise planted by the world model.",
    "Overlap buckets are per-user counts; published Venn totals mix per-user and per-set counts.",
    "Directory privacy is modelled only as empty e-mail/photo fields.",
    "Disjoint tally: one primary channel per target (ott > email > sms > voice). "
    "Overlapping tally: every reachable channel counted.",
)


@dataclass(frozen=True)
class RunConfig:
    workers: int = 1
    credentials: int = 1
    rate_limit: RateLimitPolicy = field(default_factory=RateLimitPolicy)
    chunk_size: int = 1000
    wait_on_rate_limit: bool = True
    hash_ids: bool = False
    dossier_path: str | None = None

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ConfigInvalid("workers must be >= 1")
        if self.chunk_size < 1:
            raise ConfigInvalid("chunk_size must be >= 1")


@dataclass(frozen=True)
class StageCounts:
    pool_size: int = 0
    lookup_hits: int = 0
    named: int = 0
    social_linked: int = 0
    friends_friendlist: int = 0
    friends_public_sources: int = 0
    email_found: int = 0
    ott_present: int = 0
    ott_social: int = 0
    ott_named: int = 0

    @property
    def friends_resolved(self) -> int:
        return self.friends_friendlist + self.friends_public_sources

    @classmethod
    def from_counter(cls, c: Mapping[str, int], prefix: str = "") -> StageCounts:
        return cls(**{f.name: c.get(prefix + f.name, 0) for f in fields(cls)})

    def to_dict(self) -> dict[str, int]:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["friends_resolved"] = self.friends_resolved
        return d


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


@dataclass(frozen=True)
class FunnelReport:
    stages: StageCounts
    vanity: StageCounts
    classes_disjoint: Mapping[str, Mapping[str, int]]
    classes_overlapping: Mapping[str, Mapping[str, int]]
    attribute_coverage: Mapping[str, int]
    vanity_attribute_coverage: Mapping[str, int]
    metadata: Mapping[str, object]
    # Varies run to run, so it is kept out of the serialized report.
    wall_time: float = field(default=0.0, compare=False)

    @property
    def nontargeted_unreached(self) -> int:
        return self.stages.pool_size - self.stages.lookup_hits

    def ratios(self) -> dict[str, float | None]:
        s = self.stages
        out = {
            "lookup_hit_rate": _ratio(s.lookup_hits, s.pool_size),
            "social_link_rate": _ratio(s.social_linked, s.lookup_hits),
            "friends_resolved_rate": _ratio(s.friends_resolved, s.social_linked),
            "friendlist_rate": _ratio(s.friends_friendlist, s.social_linked),
            "email_rate": _ratio(s.email_found, s.lookup_hits),
            "ott_social_rate": _ratio(s.ott_social, s.social_linked),
            "ott_named_rate": _ratio(s.ott_named, s.named - s.social_linked),
        }
        for attr in ATTRIBUTES:
            out[f"attribute.{attr}"] = _ratio(self.attribute_coverage.get(attr, 0), s.social_linked)
        return out

    def to_dict(self) -> dict:
        return {
            "stages": self.stages.to_dict(),
            "vishing_targets": self.stages.lookup_hits,
            "nontargeted_unreached": self.nontargeted_unreached,
            "vanity": self.vanity.to_dict(),
            "classes_disjoint": _plain(self.classes_disjoint),
            "classes_overlapping": _plain(self.classes_overlapping),
            "attribute_coverage": dict(sorted(self.attribute_coverage.items())),
            "vanity_attribute_coverage": dict(sorted(self.vanity_attribute_coverage.items())),
            "ratios": {k: (None if v is None else round(v, 6)) for k, v in self.ratios().items()},
            "metadata": dict(self.metadata),
            "notes": list(NOTES),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        s, v = self.stages, self.vanity
        rows = [
            ("numbers enumerated", s.pool_size, v.pool_size),
            ("found on caller-ID directory", s.lookup_hits, v.lookup_hits),
            ("  with social id", s.social_linked, v.social_linked),
            ("    friends via friendlist", s.friends_friendlist, v.friends_friendlist),
            ("    friends via public sources", s.friends_public_sources, v.friends_public_sources),
            ("  with e-mail", s.email_found, v.email_found),
            ("present on OTT", s.ott_present, v.ott_present),
            ("  social-linked on OTT", s.ott_social, v.ott_social),
            ("  name-only on OTT", s.ott_named, v.ott_named),
        ]
        lines = [f"{'stage':<34}{'all':>10}{'vanity':>10}"]
        lines += [f"{label:<34}{a:>10}{b:>10}" for label, a, b in rows]
        channels = [c.value for c in CHANNEL_PRIORITY]
        lines.append("")
        lines.append(f"{'class (disjoint tally)':<22}" + "".join(f"{c:>9}" for c in channels))
        for label, by_channel in sorted(self.classes_disjoint.items()):
            lines.append(f"{label:<22}" + "".join(f"{by_channel.get(c, 0):>9}" for c in channels))
        lines.append(f"{'class (overlapping)':<22}" + "".join(f"{c:>9}" for c in channels))
        for label, by_channel in sorted(self.classes_overlapping.items()):
            lines.append(f"{label:<22}" + "".join(f"{by_channel.get(c, 0):>9}" for c in channels))
        lines.append("")
        lines.append("attribute coverage: " + ", ".join(f"{a}={self.attribute_coverage.get(a, 0)}" for a in ATTRIBUTES))
        return "\n".join(lines)


def _plain(nested: Mapping[str, Mapping[str, int]]) -> dict:
    return {k: dict(sorted(v.items())) for k, v in sorted(nested.items())}


# -- running -----------------------------------------------------------------


def _observe(number: PhoneNumber, clients: ServiceClients, patterns, hash_ids: bool, export: bool):
    d = build_dossier(number, clients, patterns, check_ott=True, with_friend_names=False)
    ott = d.channels_checked.get("ott", False)
    keys = ["pool_size"]
    if d.found:
        keys += ["lookup_hits", "named"]
        if d.email:
            keys.append("email_found")
        if d.social_id:
            keys.append("social_linked")
            if d.friends.source is FriendSource.FRIENDLIST:
                keys.append("friends_friendlist")
            elif d.friends.source is FriendSource.PUBLIC_SOURCES:
                keys.append("friends_public_sources")
            keys += [f"attr:{a}" for a in d.attributes]
    if ott:
        keys.append("ott_present")
        if d.social_id:
            keys.append("ott_social")
        elif d.found:
            keys.append("ott_named")
    counts = Counter(keys)
    if d.is_vanity:
        counts.update("v:" + k for k in keys)

    channels = reachable_channels(d, ott)
    if channels:
        label = classify_attack(d).label
        counts[f"disjoint|{label}|{primary_channel(channels).value}"] += 1
        for ch in channels:
            counts[f"overlap|{label}|{ch.value}"] += 1
    line = d.to_json(hash_ids) if export else None
    return counts, line


def _run_chunk(chunk: Sequence[PhoneNumber], clients, patterns, hash_ids: bool, export: bool):
    total: Counter = Counter()
    lines = []
    for number in chunk:
        counts, line = _observe(number, clients, patterns, hash_ids, export)
        total.update(counts)
        if line is not None:
            lines.append((number, line))
    return total, lines


def _nested(counts: Mapping[str, int], kind: str) -> dict[str, dict[str, int]]:
    out: dict[str, dict[str, int]] = {}
    for key, n in counts.items():
        if key.startswith(kind + "|"):
            _, label, channel = key.split("|")
            out.setdefault(label, {})[channel] = n
    return out


def run_funnel(
    world_config: WorldConfig,
    pool: Iterable[PhoneNumber],
    run_config: RunConfig | None = None,
    world: World | None = None,
) -> FunnelReport:
    """Dossier, OTT membership and classification for every number in ``pool``.

    Numbers are processed in chunks on a bounded thread pool; the shared
    lookup session rotates credentials and advances the virtual clock when
    all of them are spent. Counts are merged with commutative addition, so
    the report does not depend on the worker count.
    """
    run_config = run_config or RunConfig()
    if run_config.credentials < 1:
        raise PoolExhausted("run needs at least one credential")
    world = world if world is not None else ProceduralWorld(world_config)
    clock = VirtualClock()
    cred_pool = CredentialPool(run_config.credentials, run_config.rate_limit)
    clients = ServiceClients.over(world, cred_pool, clock, wait=run_config.wait_on_rate_limit)
    patterns = world_config.patterns
    export = run_config.dossier_path is not None

    numbers = list(pool)
    step = run_config.chunk_size
    chunks = [numbers[i : i + step] for i in range(0, len(numbers), step)]
    started = time.perf_counter()
    total: Counter = Counter()
    lines: list = []
    with ThreadPoolExecutor(max_workers=run_config.workers) as ex:
        futures = [ex.submit(_run_chunk, c, clients, patterns, run_config.hash_ids, export) for c in chunks]
        for fut in futures:
            counts, chunk_lines = fut.result()
            total.update(counts)
            lines.extend(chunk_lines)
    wall = time.perf_counter() - started

    if export:
        lines.sort(key=lambda pair: pair[0])
        Path(run_config.dossier_path).write_text("".join(line + "\n" for _, line in lines), encoding="utf-8")

    attr = {a: total.get(f"attr:{a}", 0) for a in ATTRIBUTES}
    vattr = {a: total.get(f"v:attr:{a}", 0) for a in ATTRIBUTES}
    policy = run_config.rate_limit
    report = FunnelReport(
        stages=StageCounts.from_counter(total),
        vanity=StageCounts.from_counter(total, "v:"),
        classes_disjoint=_nested(total, "disjoint"),
        classes_overlapping=_nested(total, "overlap"),
        attribute_coverage=attr,
        vanity_attribute_coverage=vattr,
        metadata={
            "seed": world_config.seed,
            "config_digest": world_config.digest(),
            "credentials_used": len(cred_pool),
            "credential_limit": run_config.credentials,
            "rate_limit": {"max_requests": policy.max_requests, "window_seconds": policy.window},
            "lookups": clients.session.lookups,
            "virtual_seconds": clock.now(),
        },
        wall_time=wall,
    )
    return report


# -- comparison --------------------------------------------------------------


@dataclass(frozen=True)
class StageCheck:
    stage: str
    expected: float
    actual: float | None
    tolerance: float

    @property
    def deviation(self) -> float | None:
        return None if self.actual is None else self.actual - self.expected

    @property
    def ok(self) -> bool:
        return self.actual is not None and abs(self.actual - self.expected) <= self.tolerance + 1e-12

    def describe(self) -> str:
        actual = "n/a" if self.actual is None else f"{self.actual:.4f}"
        dev = "n/a" if self.deviation is None else f"{self.deviation:+.4f}"
        return f"{'PASS' if self.ok else 'FAIL'} {self.stage}: expected {self.expected:.4f} actual {actual} dev {dev} tol {self.tolerance:.4f}"


@dataclass(frozen=True)
class Comparison:
    checks: tuple[StageCheck, ...]

    @property
    def deviations(self) -> list[StageCheck]:
        return [c for c in self.checks if not c.ok]

    @property
    def passed(self) -> bool:
        return not self.deviations

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1


def load_expectations(path: str | Path | None = None) -> dict:
    path = Path(path) if path is not None else PAPER_RATIOS
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read expectations {path}: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("stages"), dict):
        raise ConfigInvalid(f"{path}: expectations need a 'stages' object")
    return doc


def compare_report(
    report: FunnelReport | Mapping[str, float | None],
    expected: Mapping,
    tolerance: float | None = None,
) -> Comparison:
    """Check report ratios against expected targets.

    ``expected`` is either ``{stage: target}`` or an expectations document
    ``{"tolerance": t, "stages": {stage: target | {"target": x, "tolerance": y}}}``.
    An explicit ``tolerance`` argument overrides every per-stage value.
    """
    ratios = report.ratios() if isinstance(report, FunnelReport) else dict(report)
    if "stages" in expected and isinstance(expected["stages"], Mapping):
        stages = expected["stages"]
        default_tol = expected.get("tolerance", 0.0)
    else:
        stages, default_tol = expected, 0.0
    checks = []
    for stage, spec in sorted(stages.items()):
        if isinstance(spec, Mapping):
            target, tol = spec["target"], spec.get("tolerance", default_tol)
        else:
            target, tol = spec, default_tol
        if tolerance is not None:
            tol = tolerance
        if not (isinstance(target, (int, float)) and math.isfinite(target)) or tol < 0:
            raise ConfigInvalid(f"bad expectation for {stage!r}")
        checks.append(StageCheck(stage, float(target), ratios.get(stage), float(tol)))
    return Comparison(tuple(checks))
