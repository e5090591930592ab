"""Roleplay-study outcome taxonomy and phishing success rates.

Each participant sees a probably-phishing message (``prob``), a legitimate
one (``legit``) and, in the social experiment, an explicit phishing message
(``phish``). Clicking or replying counts as engaging. Participants who
engage with a suspicious message but not with the legitimate one contradict
the trust ordering legit >= phish, legit >= prob and are set aside as
Unknown.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

from .errors import BriefingFailed, EmptyCohort, MalformedResponse


class Experiment(str, Enum):
    E1 = "e1"  # non-targeted
    E2 = "e2"  # spear
    E3 = "e3"  # social

    @property
    def scenarios(self) -> tuple[str, ...]:
        return ("prob", "legit", "phish") if self is Experiment.E3 else ("prob", "legit")


class Action(str, Enum):
    CLICK = "click"
    REPLY = "reply"
    DELETE = "delete"
    NOTHING = "nothing"


class Outcome(str, Enum):
    VULNERABLE = "Vulnerable"
    CAUTIOUS = "Cautious"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class ParticipantResponse:
    participant_id: str
    experiment: Experiment
    briefing_answers_correct: bool
    actions: Mapping[str, Action]
    order: tuple[str, ...] = ()  # message order as shown; carried, not analysed

    def __post_init__(self) -> None:
        if set(self.actions) != set(self.experiment.scenarios):
            raise ValueError(
                f"{self.experiment.value} needs actions for {list(self.experiment.scenarios)}, "
                f"got {sorted(self.actions)}"
            )


def is_engagement(action: Action | str) -> bool:
    return Action(action) in (Action.CLICK, Action.REPLY)


def classify(response: ParticipantResponse) -> Outcome:
    if not response.briefing_answers_correct:
        raise BriefingFailed(response.participant_id)
    engaged = {s: is_engagement(a) for s, a in response.actions.items()}
    phishy = engaged["prob"] or engaged.get("phish", False)
    if phishy and not engaged["legit"]:
        return Outcome.UNKNOWN
    return Outcome.VULNERABLE if phishy else Outcome.CAUTIOUS


@dataclass(frozen=True)
class ExperimentSummary:
    vulnerable: int = 0
    cautious: int = 0
    unknown: int = 0
    filtered: int = 0

    @property
    def analysed(self) -> int:
        return self.vulnerable + self.cautious

    @property
    def survivors(self) -> int:
        return self.vulnerable + self.cautious + self.unknown

    @property
    def success_fraction(self) -> Fraction:
        if self.analysed == 0:
            raise EmptyCohort("no vulnerable or cautious participants")
        return Fraction(self.vulnerable, self.analysed)

    @property
    def success_rate(self) -> float:
        """Percentage floored to one decimal (37/107 prints as 34.5)."""
        return math.floor(self.success_fraction * 1000) / 10

    def to_dict(self) -> dict:
        return {
            "vulnerable": self.vulnerable,
            "cautious": self.cautious,
            "unknown": self.unknown,
            "filtered_at_briefing": self.filtered,
            "success_numerator": self.vulnerable,
            "success_denominator": self.analysed,
            "success_rate": self.success_rate,
        }


@dataclass(frozen=True)
class StudySummary:
    experiments: Mapping[Experiment, ExperimentSummary] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(s.survivors + s.filtered for s in self.experiments.values())

    @property
    def survivors(self) -> int:
        return sum(s.survivors for s in self.experiments.values())

    @property
    def analysed(self) -> int:
        return sum(s.analysed for s in self.experiments.values())

    def to_dict(self) -> dict:
        return {
            "experiments": {e.value: s.to_dict() for e, s in sorted(self.experiments.items())},
            "participants": self.total,
            "after_briefing_filter": self.survivors,
            "vulnerable_or_cautious": self.analysed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def table(self) -> str:
        rows = [f"{'exp':<4} {'vuln':>5} {'caut':>5} {'unkn':>5} {'filt':>5} {'success %':>10}"]
        for exp, s in sorted(self.experiments.items()):
            rows.append(
                f"{exp.value:<4} {s.vulnerable:>5} {s.cautious:>5} {s.unknown:>5} {s.filtered:>5} "
                f"{s.success_rate:>10.1f}  ({s.vulnerable}/{s.analysed})"
            )
        return "\n".join(rows)


def summarize(responses: Iterable[ParticipantResponse]) -> StudySummary:
    """Briefing filter, classification and success rate per experiment."""
    counts: dict[Experiment, Counter] = {}
    for r in responses:
        c = counts.setdefault(r.experiment, Counter())
        if not r.briefing_answers_correct:
            c["filtered"] += 1
        else:
            c[classify(r)] += 1
    if not counts:
        raise EmptyCohort("no responses")
    summary = {
        exp: ExperimentSummary(
            vulnerable=c[Outcome.VULNERABLE],
            cautious=c[Outcome.CAUTIOUS],
            unknown=c[Outcome.UNKNOWN],
            filtered=c["filtered"],
        )
        for exp, c in counts.items()
    }
    for exp, s in summary.items():
        if s.analysed == 0:
            raise EmptyCohort(f"{exp.value}: no vulnerable or cautious participants")
    return StudySummary(dict(sorted(summary.items())))


# -- cohort reconstruction ---------------------------------------------------

# Outcome-pattern counts: engagement flags per scenario -> participants.
TABLE1 = {
    Experiment.E1: {
        (True, True): 37,
        (False, True): 24,
        (False, False): 46,
        (True, False): 7,
    },
    Experiment.E2: {
        (True, True): 56,
        (False, True): 19,
        (False, False): 28,
        (True, False): 4,
    },
    Experiment.E3: {
        (True, True, True): 54,
        (True, True, False): 9,
        (False, True, True): 9,
        (False, True, False): 12,
        (False, False, False): 20,
        (True, False, False): 2,
        (False, False, True): 1,
        (True, False, True): 3,
    },
}
PARTICIPANTS_TOTAL = 460
FILTERED_AT_BRIEFING = 129


def reconstruct_table1_cohort(include_filtered: bool = False) -> list[ParticipantResponse]:
    """Responses that reproduce the published outcome table exactly.

    Engaged scenarios alternate between click and reply, the rest between
    delete and nothing, so every action value occurs. With
    ``include_filtered`` the 129 briefing failures are added, split as
    evenly as possible across experiments (the split is not published).
    """
    out: list[ParticipantResponse] = []
    n = 0
    for exp, patterns in TABLE1.items():
        for flags, count in patterns.items():
            for i in range(count):
                n += 1
                actions = {
                    s: (Action.CLICK if i % 2 == 0 else Action.REPLY)
                    if engaged
                    else (Action.DELETE if i % 2 == 0 else Action.NOTHING)
                    for s, engaged in zip(exp.scenarios, flags)
                }
                out.append(ParticipantResponse(f"p{n:04d}", exp, True, actions))
    if include_filtered:
        exps = list(Experiment)
        for i in range(FILTERED_AT_BRIEFING):
            n += 1
            exp = exps[i % len(exps)]
            actions = {s: Action.NOTHING for s in exp.scenarios}
            out.append(ParticipantResponse(f"p{n:04d}", exp, False, actions))
    return out


# -- I/O ---------------------------------------------------------------------

_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f"}


def _parse_bool(value, lineno: int) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in _TRUE:
        return True
    if text in _FALSE:
        return False
    raise MalformedResponse(f"not a boolean: {value!r}", lineno)


def _response(doc: Mapping, lineno: int) -> ParticipantResponse:
    try:
        exp = Experiment(str(doc["experiment"]).strip().lower())
        raw_actions = doc["actions"]
        actions = {s: Action(str(raw_actions[s]).strip().lower()) for s in exp.scenarios}
        extra = set(raw_actions) - set(exp.scenarios)
        if extra:
            raise MalformedResponse(f"unexpected scenario(s) {sorted(extra)} for {exp.value}", lineno)
        order = doc.get("order") or ()
        if isinstance(order, str):
            order = tuple(x for x in order.replace(";", " ").split() if x)
        return ParticipantResponse(
            participant_id=str(doc["participant_id"]),
            experiment=exp,
            briefing_answers_correct=_parse_bool(doc["briefing_answers_correct"], lineno),
            actions=actions,
            order=tuple(order),
        )
    except MalformedResponse:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise MalformedResponse(f"bad response row: {exc}", lineno) from None


CSV_COLUMNS = ("participant_id", "experiment", "briefing_answers_correct", "prob", "legit", "phish", "order")


def parse_responses(text: str, fmt: str | None = None) -> list[ParticipantResponse]:
    """Parse CSV (header row, one column per scenario) or JSON lines.

    The format is sniffed from the first non-blank character when ``fmt`` is
    not given.
    """
    stripped = text.lstrip()
    if fmt is None:
        fmt = "jsonl" if stripped.startswith("{") else "csv"
    responses = []
    if fmt == "jsonl":
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedResponse(f"invalid JSON: {exc.msg}", lineno) from None
            if not isinstance(doc, dict):
                raise MalformedResponse("row is not an object", lineno)
            responses.append(_response(doc, lineno))
        return responses
    if fmt != "csv":
        raise ValueError(f"unknown response format {fmt!r}")
    if not stripped:
        return responses
    reader = csv.DictReader(io.StringIO(text))
    missing = {"participant_id", "experiment", "briefing_answers_correct", "prob", "legit"} - set(
        reader.fieldnames or ()
    )
    if missing:
        raise MalformedResponse(f"CSV header lacks {sorted(missing)}", 1)
    for row in reader:
        lineno = reader.line_num
        if None in row or any(v is None for v in row.values()):
            raise MalformedResponse("wrong number of columns", lineno)
        exp_text = row["experiment"].strip().lower()
        scenarios = Experiment(exp_text).scenarios if exp_text in {e.value for e in Experiment} else ()
        actions = {s: row.get(s, "") for s in scenarios}
        if exp_text in ("e1", "e2") and (row.get("phish") or "").strip():
            raise MalformedResponse(f"{exp_text} has no phish scenario", lineno)
        doc = dict(row, actions=actions)
        responses.append(_response(doc, lineno))
    return responses


def read_responses(path: str | Path) -> list[ParticipantResponse]:
    path = Path(path)
    fmt = None
    if path.suffix in (".jsonl", ".ndjson"):
        fmt = "jsonl"
    elif path.suffix == ".csv":
        fmt = "csv"
    return parse_responses(path.read_text(encoding="utf-8"), fmt)


def write_responses_csv(path: str | Path, responses: Iterable[ParticipantResponse]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in responses:
            writer.writerow(
                [
                    r.participant_id,
                    r.experiment.value,
                    "true" if r.briefing_answers_correct else "false",
                    r.actions["prob"].value,
                    r.actions["legit"].value,
                    r.actions["phish"].value if "phish" in r.actions else "",
                    ";".join(r.order),
                ]
            )


def write_responses_jsonl(path: str | Path, responses: Iterable[ParticipantResponse]) -> None:
    lines = []
    for r in responses:
        lines.append(
            json.dumps(
                {
                    "participant_id": r.participant_id,
                    "experiment": r.experiment.value,
                    "briefing_answers_correct": r.briefing_answers_correct,
                    "actions": {s: a.value for s, a in r.actions.items()},
                    "order": list(r.order),
                }
            )
        )
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
