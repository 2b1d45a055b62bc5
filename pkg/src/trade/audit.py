"""Offline anonymity and accountability audit over scenario dumps.

H1 (anonymity): no registered real name appears in either ledger dump,
neither in the dump text nor inside any decoded payload.

H2 (accountability): every pseudonym minted on the Identity ledger maps back
to exactly one real name in the registrar files, and a replayed consortium
vote exposes that name once a two-thirds majority is reached and nothing
below it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import MalformedDump
from .identity import Consortium, VoteAction, threshold
from .ledger import DumpEntry, TxType, load_dump


@dataclass
class MappingTable:
    registrars: list[str]
    rows: list[tuple[str, str, str]]  # (registrar, real name, address)

    def names(self) -> list[str]:
        return sorted({name for _, name, _ in self.rows})

    def owner(self, address: str) -> list[str]:
        return sorted({name for _, name, addr in self.rows if addr == address})


def load_mappings(text: str) -> MappingTable:
    registrars: list[str] = []
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        if raw.startswith("# registrars"):
            registrars = [r for r in raw[len("# registrars"):].strip().split(",") if r]
            continue
        parts = raw.split("\t")
        if len(parts) != 3:
            raise MalformedDump(f"mappings line {lineno}: expected 3 tab-separated fields")
        rows.append((parts[0], parts[1], parts[2]))
    if not registrars:
        registrars = sorted({r for r, _, _ in rows})
    return MappingTable(registrars, rows)


@dataclass
class Verdict:
    hypothesis: str
    passed: bool
    message: str
    offending: list[str] = field(default_factory=list)

    def render(self) -> str:
        head = f"{self.hypothesis} {'PASS' if self.passed else 'FAIL'}: {self.message}"
        return "\n".join([head] + ["  " + line for line in self.offending])


def _entry_mentions(entry: DumpEntry, name: str) -> bool:
    # Hex columns are compared after decoding; matching them as text would
    # flag names that happen to be spelled in hex digits.
    return name.encode() in entry.payload or name in entry.submitter


def anonymity_scan(dumps: dict[str, str], names: list[str]) -> Verdict:
    offending = []
    for label, text in dumps.items():
        for entry in load_dump(text):
            for name in names:
                if _entry_mentions(entry, name):
                    offending.append(f"{label}:{entry.line}: {entry.tx_type} reveals {name!r}")
    if offending:
        return Verdict("H1", False, f"{len(offending)} occurrence(s) of real names", offending)
    scanned = sum(len(t.splitlines()) for t in dumps.values())
    return Verdict("H1", True, f"0 of {len(names)} real names found in {scanned} ledger lines")


def accountability_replay(identity_text: str, mappings: MappingTable,
                          voters: int | None = None) -> Verdict:
    """Replay an exposure vote for every minted pseudonym.

    ``voters`` caps how many registrars vote; the default is exactly the
    two-thirds threshold.
    """
    entries = load_dump(identity_text)
    minted = [e.fields["address"] for e in entries if e.tx_type == TxType.TX_BLOCKCHAIN.tag]
    members = mappings.registrars
    if not members:
        return Verdict("H2", False, "no registrars in the mapping file")
    need = threshold(len(members))
    count = need if voters is None else voters
    offending = []
    exposed = 0
    for address in minted:
        owners = mappings.owner(address)
        if len(owners) != 1:
            offending.append(f"{address} maps to {owners or 'nobody'}")
            continue
        consortium = Consortium(members)
        revealed: list[str] = []

        def execute(case, final_voter, address=address):
            name = mappings.owner(address)[0]
            revealed.append(name)
            return name

        state = None
        for registrar in members[:count]:
            state = consortium.vote(registrar, address, VoteAction.EXPOSE_IDENTITY, execute,
                                    reporter="audit")
        if count >= need:
            if revealed != owners or state is None or state.exposed_name != owners[0]:
                offending.append(f"{address} exposed {revealed} instead of {owners}")
            else:
                exposed += 1
        elif revealed:
            offending.append(f"{address} exposed with only {count} of {need} votes")
    for e in entries:
        if e.tx_type == TxType.TX_EXPOSURE.tag and len(e.fields.get("voters", ())) < need:
            offending.append(f"identity.dump:{e.line}: exposure with {len(e.fields['voters'])} "
                             f"of {need} votes")
    if offending:
        return Verdict("H2", False, f"{len(offending)} accountability problem(s)", offending)
    if count < need:
        return Verdict("H2", True, f"exposure withheld: {count} of {len(members)} registrars "
                                   f"voted, {need} needed; {len(minted)} pseudonyms stay private")
    return Verdict("H2", True, f"{exposed} of {len(minted)} pseudonyms exposed correctly at "
                               f"{need} of {len(members)} votes")


def audit(identity_dump: str, activity_dump: str, mappings_text: str,
          voters: int | None = None) -> list[Verdict]:
    mappings = load_mappings(mappings_text)
    dumps = {"identity.dump": identity_dump, "activity.dump": activity_dump}
    return [anonymity_scan(dumps, mappings.names()),
            accountability_replay(identity_dump, mappings, voters)]


def audit_files(identity_path: str | Path, activity_path: str | Path, mappings_path: str | Path,
                voters: int | None = None) -> list[Verdict]:
    return audit(_read(identity_path), _read(activity_path), _read(mappings_path), voters)


def _read(path: str | Path) -> str:
    return Path(path).read_text(encoding="utf-8")
