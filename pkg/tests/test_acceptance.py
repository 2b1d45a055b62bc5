"""The ten acceptance criteria, one test group each.

The run's terminal summary prints one PASS/FAIL line per criterion (see
conftest.py).
"""

from __future__ import annotations

import json
import random
import time
from fractions import Fraction
from pathlib import Path

import pytest

from oracles import (
    EVAL_DOMAINS,
    VACUITY_DOMAINS,
    ceil_two_thirds,
    oracle_vacuous,
    random_tree,
    render,
    tautology_candidate,
    tree_depth,
    truth_table,
)
from support import ACME, BETA, PAYLOAD, SCENARIOS, TINY, join, publish, world
from trade import OrganizationProfile, TradeConfig, VoteAction
from trade.activity import Privilege
from trade.audit import accountability_replay, anonymity_scan, load_mappings
from trade.encoding import digest_bytes
from trade.errors import (
    DataAuthenticationFailed,
    ExpiredToken,
    InsufficientKarma,
    InvalidBadge,
    PolicyNotSatisfied,
    StaleTimestamp,
)
from trade.explorer import CONFIGS, build, explore
from trade.incentives import replay
from trade.ledger import TxType, load_dump
from trade.policy import evaluate, is_vacuous, parse_policy
from trade.scenario import run_scenario, run_script

GOLDEN = json.loads((Path(__file__).parent / "fixtures" / "explorer_golden.json").read_text())
BUNDLED = sorted(SCENARIOS.glob("*.trade"))


def _count(dump: str, tag: str) -> int:
    return sum(1 for e in load_dump(dump) if e.tx_type == tag)


# -- 1 ---------------------------------------------------------------------------

@pytest.mark.criterion(1)
def test_happy_path_end_to_end(tmp_path):
    start = time.perf_counter()
    result = run_scenario(SCENARIOS / "happy_path.trade", dump_dir=tmp_path)
    elapsed = time.perf_counter() - start
    assert result.exit_code == 0, result.report
    activity = (tmp_path / "activity.dump").read_text()
    assert _count(activity, "ATX_CYBER_THREAT") == 1
    assert _count(activity, "ATX_ACCESS_TOKEN") == 1
    on_chain = [e.fields["record"]["digest"] for e in load_dump(activity)
                if e.tx_type == "ATX_CYBER_THREAT"]
    retrieved = result.sessions["Beta"].last_result.payload
    assert retrieved == (SCENARIOS / "ioc_feed.txt").read_bytes()
    assert on_chain == [digest_bytes(retrieved)]
    assert elapsed < 1.0


@pytest.mark.criterion(1)
def test_happy_path_retrieved_digest_matches_ledger():
    net = world()
    acme, beta = join(net, ACME), join(net, BETA)
    policy = acme.create_policy("(employees >= 100)")
    uid = publish(acme, [policy])
    payload = beta.acquire(uid)
    assert payload == PAYLOAD
    assert digest_bytes(payload) == net.activity.record(uid).content_digest


# -- 2 ---------------------------------------------------------------------------

@pytest.mark.criterion(2)
@pytest.mark.parametrize("script", BUNDLED, ids=lambda p: p.stem)
def test_no_real_name_in_ledger_dumps(script):
    start = time.perf_counter()
    result = run_scenario(script)
    assert result.exit_code == 0, result.report
    dumps = {"identity.dump": result.files["identity.dump"],
             "activity.dump": result.files["activity.dump"]}
    names = load_mappings(result.files["mappings.tsv"]).names()
    assert sorted(names) == sorted(result.real_names)
    verdict = anonymity_scan(dumps, names)
    assert verdict.passed, verdict.render()
    # Raw text scan as well, independent of the audit module's decoding.
    for text in dumps.values():
        for name in names:
            assert name not in text
            assert name.encode().hex() not in text
    assert time.perf_counter() - start < 1.0


@pytest.mark.criterion(2)
@pytest.mark.parametrize("script", BUNDLED, ids=lambda p: p.stem)
def test_planted_leak_build_fails_the_scan(script):
    result = run_scenario(script, TradeConfig(leak_real_names=True))
    dumps = {k: result.files[k] for k in ("identity.dump", "activity.dump")}
    verdict = anonymity_scan(dumps, result.real_names)
    assert not verdict.passed
    assert all(":" in line for line in verdict.offending)


# -- 3 ---------------------------------------------------------------------------

THRESHOLDS = {3: 2, 4: 3, 5: 4, 7: 5}  # ceil(2n/3), worked by hand


@pytest.mark.criterion(3)
@pytest.mark.parametrize("n", sorted(THRESHOLDS))
def test_two_thirds_vote_exposes_exactly_the_right_name(n):
    need = THRESHOLDS[n]
    assert ceil_two_thirds(n) == need
    net = world(registrars=n)
    acme = join(net, ACME, "R1")
    beta = join(net, BETA, f"R{n}")
    join(net, TINY, "R2")
    policy = acme.create_policy("(employees >= 100)")
    uid = publish(acme, [policy])
    beta.acquire(uid)
    subject, reporter = beta.primary.address, acme.primary.address
    for i in range(1, need):
        state = net.identity.consortium_vote(f"R{i}", subject, VoteAction.EXPOSE_IDENTITY,
                                             reporter=reporter, note="resold CTI")
        assert not state.executed and state.exposed_name is None
    assert net.identity.disclosures == {}
    assert net.identity_ledger.count(TxType.TX_EXPOSURE) == 0
    state = net.identity.consortium_vote(f"R{need}", subject, VoteAction.EXPOSE_IDENTITY)
    assert state.executed
    assert state.exposed_name == BETA.name
    assert net.identity.disclosures == {reporter: [(subject, BETA.name)]}
    assert net.identity_ledger.count(TxType.TX_EXPOSURE) == 1


@pytest.mark.criterion(3)
@pytest.mark.parametrize("n", sorted(THRESHOLDS))
def test_audit_replay_withholds_below_threshold(n):
    lines = [f"registrar add R{i + 1}" for i in range(n)]
    lines += ["server add S1", "org register Acme via R1", f"org register Beta via R{n}"]
    result = run_script("\n".join(lines) + "\n")
    mappings = load_mappings(result.files["mappings.tsv"])
    full = accountability_replay(result.files["identity.dump"], mappings)
    assert full.passed and "exposed correctly" in full.message
    short = accountability_replay(result.files["identity.dump"], mappings, THRESHOLDS[n] - 1)
    assert short.passed and "exposure withheld" in short.message


# -- 4 ---------------------------------------------------------------------------

BADGE_TERMS = ["(employees >= 100)", "(gdpr = true)", '(hq_location = "EU")']


def _overhead_script(n: int, k: int, repeats: int) -> str:
    lines = ["config karma.initial_grant 100", "registrar add R1", "server add S1",
             "org register Acme via R1 employees 250",
             "org register Beta via R1 employees 120 gdpr true"]
    if n:
        lines.append(f"org temp Beta via R1 count {n}")
    ids = []
    for j in range(k):
        lines.append(f"policy P{j} owner Acme: {BADGE_TERMS[j]}")
        ids.append(f"P{j}")
    lines.append(f"publish D1 by Acme payload x keywords malware read-requires {','.join(ids)}")
    for _ in range(repeats):
        for i in range(n):
            lines.append(f"acquire D1 by Beta via {i + 2} expect ok")
    return "\n".join(lines) + "\n"


@pytest.mark.criterion(4)
@pytest.mark.parametrize("n", [1, 2, 4])
@pytest.mark.parametrize("k", [1, 3])
def test_badges_scale_with_pseudonyms_and_policies(n, k):
    once = run_script(_overhead_script(n, k, 1))
    twice = run_script(_overhead_script(n, k, 2))
    assert once.exit_code == 0 and twice.exit_code == 0, once.report + twice.report
    assert _count(once.files["identity.dump"], "ITX_BADGE") == k * n
    assert _count(twice.files["identity.dump"], "ITX_BADGE") == k * n
    tokens_once = _count(once.files["activity.dump"], "ATX_ACCESS_TOKEN")
    assert tokens_once == n
    assert _count(twice.files["activity.dump"], "ATX_ACCESS_TOKEN") == 2 * tokens_once


# -- 5 ---------------------------------------------------------------------------

GRID_POLICIES = {"P1": "(employees >= 100)", "P2": "(gdpr = true)"}
# After the update, does the new profile satisfy the policy?  Worked by hand.
NEW_PROFILES = {
    ("P1", True): {"employees": 400},
    ("P1", False): {"employees": 40},
    ("P2", True): {"gdpr": True, "employees": 40},
    ("P2", False): {"gdpr": False},
}


@pytest.mark.criterion(5)
@pytest.mark.parametrize("policy_key", ["P1", "P2"])
@pytest.mark.parametrize("pseudonym", [0, 1])
@pytest.mark.parametrize("satisfied", [True, False])
def test_profile_update_revokes_every_badge(policy_key, pseudonym, satisfied):
    net = world(karma__initial_grant=100)
    acme, beta = join(net, ACME), join(net, BETA)
    beta.issue_temporary("R1")
    ids = {key: acme.create_policy(terms) for key, terms in GRID_POLICIES.items()}
    uid = publish(acme, ids.values())
    held = {}
    for cred in beta.credentials:
        for key, pid in ids.items():
            held[(cred.address, key)] = net.identity.request_profile_badge(cred.signer, pid)
    assert all(net.identity.badge(b).valid for b in held.values())
    revoked = beta.update_profile(BETA.updated(**NEW_PROFILES[(policy_key, satisfied)]))
    assert revoked == len(held) == 4
    assert [net.identity.badge(b).valid for b in held.values()] == [False] * 4
    cred = beta.credentials[pseudonym]
    net.incentives.spend_on_consume(cred.signer, uid)
    with pytest.raises(InvalidBadge):
        net.activity.access_permission_request(cred.signer, uid, Privilege.READ,
                                               [held[(cred.address, policy_key)]])
    if satisfied:
        fresh = net.identity.request_profile_badge(cred.signer, ids[policy_key])
        assert fresh != held[(cred.address, policy_key)]
        assert net.identity.badge(fresh).valid
    else:
        with pytest.raises(PolicyNotSatisfied):
            net.identity.request_profile_badge(cred.signer, ids[policy_key])


# -- 6 ---------------------------------------------------------------------------

@pytest.mark.criterion(6)
def test_evaluate_matches_truth_table_oracle_on_1000_trees():
    rng = random.Random(20240601)
    mismatches, rows = [], 0
    for _ in range(1000):
        tree = random_tree(rng, 4, EVAL_DOMAINS)
        assert tree_depth(tree) <= 4
        node = parse_policy(render(tree))
        for assignment, expected in truth_table(tree, EVAL_DOMAINS):
            rows += 1
            if evaluate(node, assignment) is not expected:
                mismatches.append((render(tree), assignment))
    assert rows > 10_000
    assert mismatches == []


@pytest.mark.criterion(6)
def test_is_vacuous_matches_exhaustive_enumeration_on_200_trees():
    rng = random.Random(7)
    mismatches, vacuous = [], 0
    for i in range(200):
        tree = tautology_candidate(rng) if i % 2 else random_tree(rng, 4, VACUITY_DOMAINS)
        expected = oracle_vacuous(tree, VACUITY_DOMAINS)
        vacuous += expected
        if is_vacuous(parse_policy(render(tree)), VACUITY_DOMAINS) is not expected:
            mismatches.append(render(tree))
    assert 0 < vacuous < 200
    assert mismatches == []


# -- 7 ---------------------------------------------------------------------------

@pytest.mark.criterion(7)
@pytest.mark.parametrize("name", sorted(CONFIGS))
def test_workflow_configuration_explores_cleanly(name):
    workflow, config = CONFIGS[name]
    start = time.perf_counter()
    report = explore(build(workflow, config))
    assert time.perf_counter() - start < 10.0
    assert report.errors == 0, report.summary()
    assert report.deadlocks == 0 and report.cycles == 0
    assert report.final_states >= 1
    assert report.distinct_states < 10 ** 6
    assert report.distinct_states <= report.states_found
    assert [report.depth, report.states_found, report.distinct_states] == GOLDEN[name]
    again = explore(build(workflow, config))
    assert again.line() == report.line()


@pytest.mark.criterion(7)
def test_all_table_rows_are_configured():
    rows = {"registration", "registration-failure", "cti-insertion", "cti-insertion-failure",
            "access-authorization", "access-authorization-badge-failure"}
    assert rows <= set(CONFIGS) and rows <= set(GOLDEN)


# -- 8 ---------------------------------------------------------------------------

def _token_world(ttl: int):
    net = world()
    acme, beta = join(net, ACME), join(net, BETA)
    uid = publish(acme, [acme.create_policy("(employees >= 100)")])
    beta.acquire(uid, ttl=ttl)
    return net, beta, uid, beta.last_result.header.apt_ref


@pytest.mark.criterion(8)
def test_ttl_one_token_expires_two_ticks_later():
    net, beta, uid, apt = _token_world(ttl=1)
    issued = net.activity.get_apt(apt).issued
    assert net.activity.get_apt(apt).expiration == issued + 1
    cred = beta.primary
    assert beta.retrieve(cred, uid, Privilege.READ, apt, tick=issued) == PAYLOAD
    net.tick(2)
    with pytest.raises(ExpiredToken):
        beta.retrieve(cred, uid, Privilege.READ, apt)


@pytest.mark.criterion(8)
@pytest.mark.parametrize("skew, stale", [(-6, True), (6, True), (-5, False), (5, False), (0, False)])
def test_stale_timestamps_are_refused(skew, stale):
    net, beta, uid, apt = _token_world(ttl=100)
    net.tick(10)
    now = net.clock.now
    if stale:
        with pytest.raises(StaleTimestamp):
            beta.retrieve(beta.primary, uid, Privilege.READ, apt, tick=now + skew)
    else:
        assert beta.retrieve(beta.primary, uid, Privilege.READ, apt, tick=now + skew) == PAYLOAD


# -- 9 ---------------------------------------------------------------------------

def _random_economy(seed: int, steps: int = 20):
    rng = random.Random(seed)
    net = world(karma__initial_grant=5)
    orgs = [join(net, p) for p in (ACME, BETA, OrganizationProfile("Gamma", 300, 10 ** 7, "EU"))]
    records: list[tuple[object, str]] = []
    retrieved: set[tuple[str, str]] = set()
    rated: set[tuple[str, str]] = set()
    for step in range(steps):
        org = rng.choice(orgs)
        action = rng.choice(["publish", "acquire", "acquire", "rate", "temp"])
        if action == "publish" or not records:
            records.append((org, publish(org, payload=f"ioc {step}".encode())))
        elif action == "acquire":
            owner, uid = rng.choice(records)
            try:
                org.acquire(uid)
                retrieved.add((org.last_result.header.requester, uid))
            except InsufficientKarma:
                pass
        elif action == "rate":
            choices = sorted(retrieved - rated)
            if choices:
                who, uid = rng.choice(choices)
                cred = next(c for o in orgs for c in o.credentials if c.address == who)
                net.incentives.rate_contribution(cred.signer, uid, rng.randint(0, 5))
                rated.add((who, uid))
        else:
            org.issue_temporary("R1")
        net.tick()
    return net


@pytest.mark.criterion(9)
@pytest.mark.parametrize("seed", range(10))
def test_karma_balances_reconcile_with_ledger_replay(seed):
    net = _random_economy(seed)
    replayed = replay(net.identity_ledger, net.activity_ledger, net.config)
    live = net.incentives.accounts
    assert sum(a.balance for a in live.values()) == replayed.awarded - replayed.spent + replayed.initial
    assert {h: a.balance for h, a in live.items()} == {h: replayed.balances.get(h, 0) for h in live}
    assert sum(a.awarded for a in live.values()) == replayed.awarded
    assert sum(a.spent for a in live.values()) == replayed.spent
    for holder in live:
        stars = [item.tx.fields["stars"] for item in net.activity_ledger.confirmed()
                 if item.tx.tx_type is TxType.ATX_RATING and item.tx.fields["producer"] == holder]
        expected = Fraction(sum(stars), len(stars)) if stars else net.config.default_reputation
        assert net.incentives.reputation(holder) == expected


@pytest.mark.criterion(9)
def test_zero_karma_pseudonym_gets_no_token():
    net = world(karma__initial_grant=0)
    acme, beta = join(net, ACME), join(net, BETA)
    uids = [publish(acme, payload=f"ioc {i}".encode()) for i in range(3)]
    for uid in uids:
        with pytest.raises(InsufficientKarma):
            beta.acquire(uid)
        with pytest.raises(InsufficientKarma):
            net.activity.access_permission_request(beta.primary.signer, uid, Privilege.READ, [])
    tokens = [t for t in net.activity_ledger.query(beta.primary.address, TxType.ATX_ACCESS_TOKEN)
              if t.submitter == beta.primary.address]
    assert tokens == []
    assert net.incentives.account(beta.primary.address).balance == 0


# -- 10 --------------------------------------------------------------------------

@pytest.mark.criterion(10)
def test_each_of_the_first_64_bit_flips_is_detected():
    net = world(karma__initial_grant=1000)
    acme, beta = join(net, ACME), join(net, BETA)
    uid = publish(acme, payload=PAYLOAD)
    asset = net.server("S1").assets[uid]
    detected = 0
    for bit in range(64):
        tampered = bytearray(PAYLOAD)
        tampered[bit // 8] ^= 0x80 >> (bit % 8)
        asset.payload = bytes(tampered)
        assert not net.server("S1").authenticate_data(asset.payload, uid)
        with pytest.raises(DataAuthenticationFailed):
            beta.acquire(uid)
        detected += 1
    assert detected == 64
    asset.payload = PAYLOAD
    assert beta.acquire(uid) == PAYLOAD
