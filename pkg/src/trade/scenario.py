"""Line-oriented scenario scripts that drive a whole simulated deployment.

One command per line, ``#`` starts a comment::

    config karma.initial_grant 10
    registrar add R1
    server add S1
    org register Acme via R1 employees 250 annual_revenue 5000000 hq_location EU
    org temp Acme via R1 count 2
    policy P1 owner Acme: (employees >= 100)
    publish D1 by Acme payload @ioc.txt keywords malware,financial read-requires P1
    subscribe Beta keywords malware
    acquire D1 by Beta expect ok
    acquire D1 by Gamma expect err:PolicyNotSatisfied
    vote revoke Beta by R1 expect pending
    update-profile Acme employees 50
    tick

Every action command accepts a trailing ``expect ok|err:<Code>|pending|executed``;
the default is ``ok``.  All names are resolved before anything runs, so a
typo fails fast with its line number.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .activity import Privilege
from .client import ClientSession
from .config import TradeConfig
from .encoding import digest_bytes
from .errors import ScriptParseError, ScriptReferenceError, TradeError
from .identity import OrganizationProfile, VoteAction
from .ledger import Ledger, TxType
from .network import TradeNetwork
from .policy import PolicyKind

PROFILE_FIELDS = ("employees", "annual_revenue", "hq_location")
DEFAULT_PROFILE = {"employees": 100, "annual_revenue": 1000000, "hq_location": "EU"}
VOTE_ACTIONS = {"revoke": VoteAction.REVOKE, "violation": VoteAction.ADD_VIOLATION,
                "expose": VoteAction.EXPOSE_IDENTITY}
PRIVILEGES = {"read": Privilege.READ, "subscribe": Privilege.SUBSCRIBE}
POLICY_KINDS = {"badge": PolicyKind.BADGE, "sharing": PolicyKind.SHARING,
                "consumption": PolicyKind.CONSUMPTION}
# Options that take a value, per verb; anything else after the positional part
# of ``org register`` and ``update-profile`` is a profile attribute.
OPTIONS = {
    "publish": {"payload", "keywords", "read-requires", "subscribe-requires", "server", "legal",
                "description"},
    "acquire": {"privilege", "ttl", "via"},
    "vote": {"reporter", "note"},
    "org-temp": {"count"},
    "policy": {"kind", "grant", "description"},
    "subscribe": {"keywords"},
    "rate": {"stars"},
    "tamper": {"bit"},
}
EXPECTATIONS = ("ok", "pending", "executed")


@dataclass
class Command:
    line: int
    verb: str
    args: list[str]
    options: dict[str, str]
    expect: str = "ok"
    text: str = ""
    terms: str = ""


@dataclass
class Script:
    commands: list[Command]
    overrides: list[tuple[int, str, str]]
    base_dir: Path


@dataclass
class Outcome:
    line: int
    text: str
    result: str
    expected: str
    detail: str = ""

    @property
    def met(self) -> bool:
        return self.result == self.expected

    def render(self) -> str:
        note = "" if self.met else f" (expected {self.expected})"
        detail = f" {self.detail}" if self.detail else ""
        return f"line {self.line}: {self.text} -> {self.result}{note}{detail}"


@dataclass
class ScenarioResult:
    network: TradeNetwork
    outcomes: list[Outcome]
    files: dict[str, str] = field(default_factory=dict)
    sessions: dict[str, ClientSession] = field(default_factory=dict)

    @property
    def real_names(self) -> list[str]:
        return sorted(self.sessions)

    @property
    def failures(self) -> list[Outcome]:
        return [o for o in self.outcomes if not o.met]

    @property
    def exit_code(self) -> int:
        return 1 if self.failures else 0

    @property
    def report(self) -> str:
        return self.files["report.txt"]


# -- parsing ---------------------------------------------------------------------

def _split(raw: str, lineno: int) -> list[str]:
    try:
        return shlex.split(raw, comments=True)
    except ValueError as exc:
        raise ScriptParseError(str(exc), lineno) from None


def _options(tokens: list[str], allowed: set[str] | None, lineno: int) -> tuple[dict, str]:
    """Pair up ``key value`` tokens; ``allowed=None`` accepts any key."""
    options: dict[str, str] = {}
    expect = "ok"
    if len(tokens) % 2:
        raise ScriptParseError(f"option {tokens[-1]!r} has no value", lineno)
    for key, value in zip(tokens[::2], tokens[1::2]):
        if key == "expect":
            if value not in EXPECTATIONS and not (value.startswith("err:") and len(value) > 4):
                raise ScriptParseError(f"bad expectation {value!r}", lineno)
            expect = value
            continue
        if allowed is not None and key not in allowed:
            raise ScriptParseError(f"unknown option {key!r}", lineno)
        if key in options:
            raise ScriptParseError(f"option {key!r} given twice", lineno)
        options[key] = value
    return options, expect


def _expect_words(tokens: list[str], words: list[str], lineno: int) -> None:
    for i, word in enumerate(words):
        if word is None:
            continue
        if i >= len(tokens) or tokens[i] != word:
            got = tokens[i] if i < len(tokens) else "end of line"
            raise ScriptParseError(f"expected {word!r}, got {got!r}", lineno)


def parse_script(text: str, base_dir: str | Path = ".") -> Script:
    commands: list[Command] = []
    overrides: list[tuple[int, str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        terms = ""
        header = stripped
        if stripped.split(None, 1)[0] == "policy":
            if ":" not in stripped:
                raise ScriptParseError("policy needs ':' before its terms", lineno)
            header, terms = stripped.split(":", 1)
            terms = terms.strip()
            if not terms:
                raise ScriptParseError("policy has empty terms", lineno)
        tokens = _split(header, lineno)
        if not tokens:
            continue
        verb, rest = tokens[0], tokens[1:]
        cmd = _parse_command(verb, rest, lineno)
        cmd.text, cmd.terms = stripped, terms
        if cmd.verb == "config":
            if commands:
                raise ScriptParseError("config lines must come before other commands", lineno)
            overrides.append((lineno, cmd.args[0], cmd.args[1]))
            continue
        commands.append(cmd)
    script = Script(commands, overrides, Path(base_dir))
    resolve_references(script)
    return script


def _parse_command(verb: str, rest: list[str], n: int) -> Command:
    if verb == "config":
        if len(rest) != 2:
            raise ScriptParseError("usage: config <key> <value>", n)
        if rest[0] not in TradeConfig.keys():
            raise ScriptParseError(f"unknown config key {rest[0]!r}", n)
        return Command(n, verb, rest, {})
    if verb in ("registrar", "server"):
        _expect_words(rest, ["add"], n)
        if len(rest) < 2:
            raise ScriptParseError(f"usage: {verb} add <id>", n)
        options, expect = _options(rest[2:], set(), n)
        return Command(n, verb, [rest[1]], options, expect)
    if verb == "org":
        if len(rest) < 4 or rest[0] not in ("register", "temp"):
            raise ScriptParseError("usage: org register|temp <name> via <registrar> ...", n)
        _expect_words(rest, [None, None, "via"], n)
        sub = "org-" + rest[0]
        options, expect = _options(rest[4:], OPTIONS.get(sub), n)
        return Command(n, sub, [rest[1], rest[3]], options, expect)
    if verb == "policy":
        _expect_words(rest, [None, "owner"], n)
        if len(rest) < 3:
            raise ScriptParseError("usage: policy <id> owner <org> [...]: <terms>", n)
        options, expect = _options(rest[3:], OPTIONS["policy"], n)
        if "kind" in options and options["kind"] not in POLICY_KINDS:
            raise ScriptParseError(f"unknown policy kind {options['kind']!r}", n)
        return Command(n, verb, [rest[0], rest[2]], options, expect)
    if verb == "grant":
        _expect_words(rest, [None, "to"], n)
        if len(rest) < 3:
            raise ScriptParseError("usage: grant <policy> to <org,...>", n)
        options, expect = _options(rest[3:], set(), n)
        return Command(n, verb, [rest[0], rest[2]], options, expect)
    if verb == "delete-policy":
        if not rest:
            raise ScriptParseError("usage: delete-policy <policy>", n)
        options, expect = _options(rest[1:], set(), n)
        return Command(n, verb, [rest[0]], options, expect)
    if verb in ("publish", "acquire", "sign", "rate"):
        _expect_words(rest, [None, "by"], n)
        if len(rest) < 3:
            raise ScriptParseError(f"usage: {verb} <record> by <org> ...", n)
        options, expect = _options(rest[3:], OPTIONS.get(verb, set()), n)
        if verb == "publish" and ("payload" not in options or "keywords" not in options):
            raise ScriptParseError("publish needs payload and keywords", n)
        if verb == "rate" and "stars" not in options:
            raise ScriptParseError("rate needs stars", n)
        if "privilege" in options and options["privilege"] not in PRIVILEGES:
            raise ScriptParseError(f"unknown privilege {options['privilege']!r}", n)
        _integers(options, ("ttl", "via", "stars"), n)
        return Command(n, verb, [rest[0], rest[2]], options, expect)
    if verb == "subscribe":
        if len(rest) < 1:
            raise ScriptParseError("usage: subscribe <org> keywords <k,...>", n)
        options, expect = _options(rest[1:], OPTIONS["subscribe"], n)
        if "keywords" not in options:
            raise ScriptParseError("subscribe needs keywords", n)
        return Command(n, verb, [rest[0]], options, expect)
    if verb == "vote":
        if len(rest) < 4 or rest[0] not in VOTE_ACTIONS:
            raise ScriptParseError("usage: vote revoke|violation|expose <org> by <registrar>", n)
        _expect_words(rest, [None, None, "by"], n)
        options, expect = _options(rest[4:], OPTIONS["vote"], n)
        return Command(n, verb, [rest[0], rest[1], rest[3]], options, expect)
    if verb == "tick":
        if len(rest) > 1 or (rest and not rest[0].isdigit()):
            raise ScriptParseError("usage: tick [n]", n)
        return Command(n, verb, rest or ["1"], {})
    if verb == "update-profile":
        if len(rest) < 3:
            raise ScriptParseError("usage: update-profile <org> <attr> <value> ...", n)
        options, expect = _options(rest[1:], None, n)
        return Command(n, verb, [rest[0]], options, expect)
    if verb == "tamper":
        if not rest:
            raise ScriptParseError("usage: tamper <record> [bit n]", n)
        options, expect = _options(rest[1:], OPTIONS["tamper"], n)
        _integers(options, ("bit",), n)
        return Command(n, verb, [rest[0]], options, expect)
    raise ScriptParseError(f"unknown command {verb!r}", n)


def _integers(options: dict, keys: tuple[str, ...], n: int) -> None:
    for key in keys:
        if key in options and not options[key].isdigit():
            raise ScriptParseError(f"{key} must be a non-negative integer", n)


def _names(csv: str) -> list[str]:
    return [part for part in csv.split(",") if part]


def resolve_references(script: Script) -> None:
    """Check that every actor, policy and record is declared before use."""
    declared: dict[str, set[str]] = {"registrar": set(), "server": set(), "org": set(),
                                     "policy": set(), "record": set()}

    def need(kind: str, name: str, line: int) -> None:
        if name not in declared[kind]:
            raise ScriptReferenceError(f"undeclared {kind} {name!r}", line)

    def declare(kind: str, name: str, line: int) -> None:
        if name in declared[kind]:
            raise ScriptParseError(f"{kind} {name!r} declared twice", line)
        declared[kind].add(name)

    for cmd in script.commands:
        a, o, n = cmd.args, cmd.options, cmd.line
        if cmd.verb in ("registrar", "server"):
            declare(cmd.verb, a[0], n)
        elif cmd.verb == "org-register":
            need("registrar", a[1], n)
            declared["org"].add(a[0])
        elif cmd.verb == "org-temp":
            need("registrar", a[1], n)
            need("org", a[0], n)
        elif cmd.verb == "policy":
            need("org", a[1], n)
            for name in _names(o.get("grant", "")):
                need("org", name, n)
            declare("policy", a[0], n)
        elif cmd.verb == "grant":
            need("policy", a[0], n)
            for name in _names(a[1]):
                need("org", name, n)
        elif cmd.verb == "delete-policy":
            need("policy", a[0], n)
        elif cmd.verb == "publish":
            need("org", a[1], n)
            for key in ("read-requires", "subscribe-requires"):
                for pid in _names(o.get(key, "")):
                    need("policy", pid, n)
            if "server" in o:
                need("server", o["server"], n)
            elif not declared["server"]:
                raise ScriptReferenceError("publish needs a declared server", n)
            declare("record", a[0], n)
        elif cmd.verb in ("acquire", "sign", "rate"):
            need("record", a[0], n)
            need("org", a[1], n)
        elif cmd.verb == "tamper":
            need("record", a[0], n)
        elif cmd.verb in ("subscribe", "update-profile"):
            need("org", a[0], n)
        elif cmd.verb == "vote":
            need("org", a[1], n)
            need("registrar", a[2], n)
            if "reporter" in o:
                need("org", o["reporter"], n)


# -- execution -------------------------------------------------------------------

def _literal(raw: str):
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    if raw.lstrip("-").isdigit():
        return int(raw)
    return raw


class ScenarioRunner:
    def __init__(self, script: Script, config: TradeConfig | None = None):
        config = config or TradeConfig()
        for lineno, key, value in script.overrides:
            try:
                config = config.with_key(key, value)
            except (KeyError, ValueError) as exc:
                raise ScriptParseError(str(exc), lineno) from None
        self.script = script
        self.net = TradeNetwork(config)
        self.sessions: dict[str, ClientSession] = {}
        self.profiles: dict[str, OrganizationProfile] = {}
        self.policies: dict[str, str] = {}
        self.records: dict[str, str] = {}
        self.servers: list[str] = []
        self.registrars: list[str] = []
        self.outcomes: list[Outcome] = []
        self._handlers: dict[str, Callable[[Command], str]] = {
            "registrar": self._registrar, "server": self._server,
            "org-register": self._org_register, "org-temp": self._org_temp,
            "policy": self._policy, "grant": self._grant, "delete-policy": self._delete_policy,
            "publish": self._publish, "subscribe": self._subscribe, "acquire": self._acquire,
            "sign": self._sign, "rate": self._rate, "vote": self._vote, "tick": self._tick,
            "update-profile": self._update_profile, "tamper": self._tamper,
        }

    def run(self) -> ScenarioResult:
        for cmd in self.script.commands:
            if cmd.verb == "tick":
                self._tick(cmd)
                continue
            try:
                detail = self._handlers[cmd.verb](cmd) or ""
                result = "ok"
                if cmd.verb == "vote":
                    result, detail = detail.split(" ", 1)
            except TradeError as exc:
                result, detail = f"err:{exc.code}", str(exc)
            expected = cmd.expect
            if cmd.verb == "vote" and expected == "ok" and not result.startswith("err:"):
                expected = result
            outcome = Outcome(cmd.line, cmd.text, result, expected, detail)
            self.outcomes.append(outcome)
            if not outcome.met:
                break
        result = ScenarioResult(self.net, self.outcomes, sessions=dict(self.sessions))
        result.files = self._files()
        return result

    # -- helpers ---------------------------------------------------------------

    def _addresses(self, names: list[str]) -> list[str]:
        return [c.address for name in names for c in self.sessions[name].active_pseudonyms]

    def _policy_ids(self, csv: str) -> tuple[str, ...]:
        return tuple(self.policies[p] for p in _names(csv))

    # -- commands --------------------------------------------------------------

    def _registrar(self, cmd: Command) -> str:
        self.net.add_registrar(cmd.args[0])
        self.registrars.append(cmd.args[0])
        return ""

    def _server(self, cmd: Command) -> str:
        self.net.add_server(cmd.args[0])
        self.servers.append(cmd.args[0])
        return ""

    def _org_register(self, cmd: Command) -> str:
        name, registrar = cmd.args
        attrs = dict(DEFAULT_PROFILE)
        tags = _names(cmd.options.get("tags", ""))
        extras = {}
        for key, raw in cmd.options.items():
            if key == "tags":
                continue
            if key in PROFILE_FIELDS:
                attrs[key] = _literal(raw)
            else:
                extras[key] = _literal(raw)
        profile = OrganizationProfile(name, attrs["employees"], attrs["annual_revenue"],
                                      str(attrs["hq_location"]), extras)
        session = self.sessions.get(name) or self.net.session(name)
        address = session.register(registrar, profile, tags)
        self.sessions[name] = session
        self.profiles[name] = profile
        return address

    def _org_temp(self, cmd: Command) -> str:
        name, registrar = cmd.args
        count = int(cmd.options.get("count", "1"))
        return ",".join(self.sessions[name].issue_temporary(registrar) for _ in range(count))

    def _policy(self, cmd: Command) -> str:
        pid, owner = cmd.args
        kind = POLICY_KINDS[cmd.options.get("kind", "sharing")]
        grant = cmd.options.get("grant")
        grantees = self._addresses(_names(grant)) if grant is not None else None
        session = self.sessions[owner]
        if kind is PolicyKind.CONSUMPTION:
            policy_id = session.set_consumption_policy(cmd.terms, cmd.options.get("description", ""))
        else:
            policy_id = session.create_policy(cmd.terms, kind, cmd.options.get("description", ""),
                                              grantees)
        self.policies[pid] = policy_id
        return policy_id

    def _grant(self, cmd: Command) -> str:
        pid, names = cmd.args
        owner = self._policy_session(pid)
        owner.grant_policy(self.policies[pid], self._addresses(_names(names)))
        return ""

    def _policy_session(self, pid: str) -> ClientSession:
        owner = self.net.identity.policy(self.policies[pid]).owner
        for session in self.sessions.values():
            if any(c.address == owner for c in session.credentials):
                return session
        raise ScriptReferenceError(f"policy {pid} has no owner session", 0)

    def _delete_policy(self, cmd: Command) -> str:
        invalidated = self._policy_session(cmd.args[0]).delete_policy(self.policies[cmd.args[0]])
        return f"invalidated={invalidated}"

    def _payload(self, raw: str) -> bytes:
        if raw.startswith("@"):
            return (self.script.base_dir / raw[1:]).read_bytes()
        return raw.encode()

    def _publish(self, cmd: Command) -> str:
        did, name = cmd.args
        o = cmd.options
        privileges = {Privilege.READ: self._policy_ids(o.get("read-requires", ""))}
        if "subscribe-requires" in o:
            privileges[Privilege.SUBSCRIBE] = self._policy_ids(o["subscribe-requires"])
        server = o.get("server", self.servers[0] if self.servers else "")
        uid = self.sessions[name].insert_cti(self._payload(o["payload"]), _names(o["keywords"]),
                                             privileges, server, o.get("description", ""),
                                             o.get("legal"))
        self.records[did] = uid
        return uid

    def _subscribe(self, cmd: Command) -> str:
        return ",".join(sorted(self.sessions[cmd.args[0]].subscribe(
            _names(cmd.options["keywords"]))))

    def _acquire(self, cmd: Command) -> str:
        did, name = cmd.args
        session = self.sessions[name]
        via = None
        if "via" in cmd.options:
            index = int(cmd.options["via"]) - 1
            if not 0 <= index < len(session.credentials):
                raise ScriptReferenceError(f"{name} has no pseudonym #{index + 1}", cmd.line)
            via = session.credentials[index].address
        ttl = int(cmd.options["ttl"]) if "ttl" in cmd.options else None
        privilege = PRIVILEGES[cmd.options.get("privilege", "read")]
        payload = session.acquire(self.records[did], privilege, ttl, via)
        return f"sha256={digest_bytes(payload).hex()[:16]}"

    def _sign(self, cmd: Command) -> str:
        ticks = self.sessions[cmd.args[1]].sign_legal_contract(self.records[cmd.args[0]])
        return f"signatures={len(ticks)}"

    def _rate(self, cmd: Command) -> str:
        score, discount = self.sessions[cmd.args[1]].rate(self.records[cmd.args[0]],
                                                          int(cmd.options["stars"]))
        return f"reputation={score} discount={discount}"

    def _vote(self, cmd: Command) -> str:
        action, subject, registrar = cmd.args
        address = self.sessions[subject].primary.address
        reporter = None
        if "reporter" in cmd.options:
            reporter = self.sessions[cmd.options["reporter"]].primary.address
        state = self.net.identity.consortium_vote(registrar, address, VOTE_ACTIONS[action],
                                                  reporter, cmd.options.get("note", ""))
        tally = f"{len(state.voters)}/{state.threshold}"
        if state.executed:
            suffix = " exposed" if state.exposed_name is not None else ""
            return f"executed {tally}{suffix}"
        withheld = " exposure withheld" if VOTE_ACTIONS[action] is VoteAction.EXPOSE_IDENTITY else ""
        return f"pending {tally}{withheld}"

    def _tick(self, cmd: Command) -> None:
        self.net.tick(int(cmd.args[0]))

    def _update_profile(self, cmd: Command) -> str:
        name = cmd.args[0]
        changes = {k: _literal(v) for k, v in cmd.options.items()}
        profile = self.profiles[name].updated(**changes)
        revoked = self.sessions[name].update_profile(profile)
        self.profiles[name] = profile
        return f"badges_revoked={revoked}"

    def _tamper(self, cmd: Command) -> str:
        uid = self.records[cmd.args[0]]
        bit = int(cmd.options.get("bit", "0"))
        server = self.net.server(self.net.activity.navigate(uid))
        asset = server.assets[uid]
        if bit >= 8 * len(asset.payload):
            raise ScriptReferenceError(f"bit {bit} outside payload", cmd.line)
        data = bytearray(asset.payload)
        data[bit // 8] ^= 0x80 >> (bit % 8)
        asset.payload = bytes(data)
        return f"bit={bit}"

    # -- outputs ---------------------------------------------------------------

    def _mappings(self) -> str:
        lines = ["# registrars " + ",".join(self.registrars)]
        for rid in self.registrars:
            for row in self.net.identity.registrar(rid).export_mappings().splitlines():
                lines.append(f"{rid}\t{row}")
        return "\n".join(lines) + "\n"

    def _transparency(self) -> str:
        lines = []
        for did, uid in self.records.items():
            lines.append(f"[{did} {uid}]")
            owner = self.net.activity.record(uid).owner
            for event in self.net.activity.transparency_report(owner, uid):
                lines.append(event.line())
        return "".join(line + "\n" for line in lines)

    def _files(self) -> dict[str, str]:
        report = [o.render() for o in self.outcomes]
        failures = [o for o in self.outcomes if not o.met]
        report.append(f"summary: {len(self.outcomes)} commands, {len(failures)} unmet expectations")
        for ledger in (self.net.identity_ledger, self.net.activity_ledger):
            report.append(f"{ledger.network.value}: {_type_counts(ledger)}")
        return {
            "identity.dump": self.net.identity_ledger.dump(),
            "activity.dump": self.net.activity_ledger.dump(),
            "mappings.tsv": self._mappings(),
            "transparency.txt": self._transparency(),
            "incentives.txt": self.net.incentives.summary(),
            "report.txt": "".join(line + "\n" for line in report),
        }


def _type_counts(ledger: Ledger) -> str:
    parts = []
    for tx_type in TxType:
        if tx_type.network is ledger.network:
            count = ledger.count(tx_type)
            if count:
                parts.append(f"{tx_type.tag}={count}")
    return " ".join(parts) or "empty"


def run_script(text: str, base_dir: str | Path = ".", config: TradeConfig | None = None,
               dump_dir: str | Path | None = None) -> ScenarioResult:
    result = ScenarioRunner(parse_script(text, base_dir), config).run()
    if dump_dir is not None:
        out = Path(dump_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, content in result.files.items():
            (out / name).write_text(content, encoding="utf-8")
    return result


def run_scenario(path: str | Path, config: TradeConfig | None = None,
                 dump_dir: str | Path | None = None) -> ScenarioResult:
    path = Path(path)
    return run_script(path.read_text(encoding="utf-8"), path.parent, config, dump_dir)
