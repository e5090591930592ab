from __future__ import annotations

import json

import pytest

from numfunnel.errors import ConfigInvalid, PoolExhausted, RateLimited
from numfunnel.funnel import RunConfig, StageCounts, compare_report, load_expectations, run_funnel
from numfunnel.numberspace import NumberRange, parse_number
from numfunnel.serviceclients import RateLimitPolicy
from numfunnel.synthworld import WorldConfig

CFG = WorldConfig(seed=7)
POOL = list(NumberRange(parse_number("+919999899000"), 3000))  # last 2000 fall in 99999-xxxxx


@pytest.fixture(scope="module")
def report():
    return run_funnel(CFG, POOL, RunConfig(workers=4, chunk_size=250))


def test_empty_pool_gives_all_zero_report():
    r = run_funnel(CFG, [])
    assert r.stages == StageCounts() and r.vanity == StageCounts()
    assert r.classes_disjoint == {} and r.classes_overlapping == {}
    assert set(r.attribute_coverage.values()) == {0}
    assert all(v is None for v in r.ratios().values())
    assert r.metadata["lookups"] == 0


def test_same_seed_gives_identical_json(report):
    again = run_funnel(CFG, POOL, RunConfig(workers=4, chunk_size=250))
    assert again.to_json() == report.to_json()
    assert again == report


def test_worker_count_does_not_change_the_report(report):
    for workers, chunk in ((1, 1000), (8, 17)):
        assert run_funnel(CFG, POOL, RunConfig(workers=workers, chunk_size=chunk)).to_json() == report.to_json()


def test_different_seed_changes_report(report):
    assert run_funnel(WorldConfig(seed=8), POOL).to_json() != report.to_json()


def _chain(s: StageCounts):
    assert s.pool_size >= s.lookup_hits >= s.social_linked >= s.friends_resolved
    assert s.named == s.lookup_hits
    assert s.email_found <= s.lookup_hits
    assert s.ott_present >= s.ott_social + s.ott_named
    assert s.ott_present <= s.pool_size


def test_monotone_chain_and_vanity_subfunnel(report):
    _chain(report.stages)
    _chain(report.vanity)
    whole, vanity = report.stages.to_dict(), report.vanity.to_dict()
    assert all(vanity[k] <= whole[k] for k in whole)
    assert report.vanity.pool_size == 2000
    for attr, n in report.vanity_attribute_coverage.items():
        assert n <= report.attribute_coverage[attr] <= report.stages.social_linked


def test_disjoint_tally_partitions_reachable_targets(report):
    disjoint = sum(sum(ch.values()) for ch in report.classes_disjoint.values())
    overlapping = sum(sum(ch.values()) for ch in report.classes_overlapping.values())
    # every hit is reachable by voice/sms; absent numbers only through OTT
    unreached_ott = report.stages.ott_present - report.stages.ott_social - report.stages.ott_named
    assert disjoint == report.stages.lookup_hits + unreached_ott
    assert overlapping >= disjoint
    doc = json.loads(report.to_json())
    assert doc["nontargeted_unreached"] == report.stages.pool_size - report.stages.lookup_hits
    assert "wall_time" not in json.dumps(doc)


def test_metadata(report):
    md = report.metadata
    assert md["seed"] == 7 and md["config_digest"] == CFG.digest()
    assert md["lookups"] == len(POOL)
    assert md["credentials_used"] == 1 and md["virtual_seconds"] == 0.0


def test_rotation_spreads_lookups_over_credentials():
    run = RunConfig(credentials=3, rate_limit=RateLimitPolicy(max_requests=100))
    r = run_funnel(CFG, POOL[:700], run)
    assert r.metadata["credentials_used"] == 3
    assert r.metadata["virtual_seconds"] == 120.0  # 700 lookups at 300 per window


def test_no_wait_surfaces_rate_limit():
    run = RunConfig(rate_limit=RateLimitPolicy(max_requests=10), wait_on_rate_limit=False)
    with pytest.raises(RateLimited):
        run_funnel(CFG, POOL[:50], run)


def test_bad_run_configs():
    with pytest.raises(ConfigInvalid):
        RunConfig(workers=0)
    with pytest.raises(PoolExhausted):
        run_funnel(CFG, POOL[:1], RunConfig(credentials=0))


def test_dossier_export_is_sorted_and_hashed(tmp_path, report):
    path = tmp_path / "d.jsonl"
    run_funnel(CFG, POOL[:40], RunConfig(workers=3, chunk_size=7, hash_ids=True, dossier_path=str(path)))
    lines = path.read_text().splitlines()
    assert len(lines) == 40
    assert all("+91" not in line for line in lines)


def test_compare_report_equal_passes(report):
    ratios = {k: v for k, v in report.ratios().items() if v is not None}
    result = compare_report(report, ratios)
    assert result.passed and result.deviations == [] and result.exit_code == 0


def test_compare_report_names_the_failing_stage(report):
    ratios = {k: v for k, v in report.ratios().items() if v is not None}
    ratios["email_rate"] += 0.05
    result = compare_report(report, {"tolerance": 0.01, "stages": ratios})
    assert not result.passed and result.exit_code == 1
    assert [c.stage for c in result.deviations] == ["email_rate"]
    assert result.deviations[0].describe().startswith("FAIL email_rate")


def test_full_tolerance_always_passes(report):
    assert compare_report(report, {"lookup_hit_rate": 0.0, "email_rate": 1.0}, tolerance=1.0).passed


def test_missing_stage_fails(report):
    assert not compare_report(report, {"no_such_stage": 0.5}, tolerance=1.0).passed


def test_per_stage_tolerance_and_bad_expectations(report, tmp_path):
    hit = report.ratios()["lookup_hit_rate"]
    doc = {"tolerance": 0.0, "stages": {"lookup_hit_rate": {"target": hit + 0.02, "tolerance": 0.03}}}
    assert compare_report(report, doc).passed
    with pytest.raises(ConfigInvalid):
        compare_report(report, {"lookup_hit_rate": "high"})
    bad = tmp_path / "e.json"
    bad.write_text("[]")
    with pytest.raises(ConfigInvalid):
        load_expectations(bad)
    assert "lookup_hit_rate" in load_expectations()["stages"]


def test_table_mentions_every_stage(report):
    table = report.table()
    for word in ("caller-id", "social", "e-mail", "ott", "disjoint", "overlapping"):
        assert word in table.lower()
