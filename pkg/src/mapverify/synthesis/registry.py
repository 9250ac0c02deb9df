"""On-disk rule/predicate registry with journaled two-file registration.

Layout of a registry directory::

    ruleset.rules     rule declarations
    predicates.pdl    predicate definitions
    journal.log       append-only record of registrations and rejections
    journal.lock      present while a registration is in flight

Each file is replaced atomically (temp file, fsync, rename). Because a
registration touches two files, backups of both are taken before the first
rename and a BEGIN/COMMIT pair brackets the writes; ``recover`` rolls back
any BEGIN without a COMMIT.
"""

from __future__ import annotations

import datetime as _dt
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from mapverify._atomic import atomic_write
from mapverify.engine import LinkedRuleset, link
from mapverify.predicate_lang import BUILTINS, check, parse_pdl, print_def
from mapverify.rule_lang import parse_ruleset, print_rule
from mapverify.synthesis.contract import CandidateArtifact
from mapverify.synthesis.validate import RegistryState, ValidationVerdict

RULES_FILE = "ruleset.rules"
PDL_FILE = "predicates.pdl"
JOURNAL_FILE = "journal.log"
LOCK_FILE = "journal.lock"
BACKUP_SUFFIX = ".bak"

CRASH_POINTS = ("after-backup", "after-begin", "between-writes", "before-commit")


class RegistryError(RuntimeError):
    pass


class ConcurrentRegistrationError(RegistryError):
    pass


class SimulatedCrash(BaseException):
    """Raised by test crash hooks; BaseException so ordinary handlers do not swallow it."""


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


@dataclass(frozen=True)
class RegistrationResult:
    request_id: str
    added_rules: tuple[str, ...]
    added_predicates: tuple[str, ...]


class Registry:
    def __init__(self, root: str | Path, crash_hook: Callable[[str], None] | None = None):
        self.root = Path(root)
        self.crash_hook = crash_hook

    rules_path = property(lambda self: self.root / RULES_FILE)
    pdl_path = property(lambda self: self.root / PDL_FILE)
    journal_path = property(lambda self: self.root / JOURNAL_FILE)
    lock_path = property(lambda self: self.root / LOCK_FILE)

    @classmethod
    def init(cls, root: str | Path, rules_text: str, pdl_text: str, **kwargs) -> Registry:
        """Create a registry seeded with the given texts; they must link cleanly."""
        root = Path(root)
        if (root / RULES_FILE).exists() or (root / PDL_FILE).exists():
            raise RegistryError(f"registry already exists at {root}")
        root.mkdir(parents=True, exist_ok=True)
        preds = parse_pdl(pdl_text)
        check(preds)
        link(parse_ruleset(rules_text), preds)
        reg = cls(root, **kwargs)
        atomic_write(reg.rules_path, rules_text.encode("utf-8"))
        atomic_write(reg.pdl_path, pdl_text.encode("utf-8"))
        reg._journal({"event": "INIT"})
        return reg

    # ------------------------------------------------------------ reading

    def texts(self) -> tuple[str, str]:
        if not self.rules_path.is_file() or not self.pdl_path.is_file():
            raise RegistryError(f"no registry at {self.root} (run init first)")
        return (self.rules_path.read_text(encoding="utf-8"), self.pdl_path.read_text(encoding="utf-8"))

    def state(self) -> RegistryState:
        rules_text, pdl_text = self.texts()
        return RegistryState(tuple(parse_ruleset(rules_text)), tuple(parse_pdl(pdl_text)))

    def linked(self) -> LinkedRuleset:
        st = self.state()
        return link(st.rules, st.predicates)

    def journal(self) -> list[dict]:
        if not self.journal_path.is_file():
            return []
        return [json.loads(line) for line in self.journal_path.read_text(encoding="utf-8").splitlines()
                if line.strip()]

    # ------------------------------------------------------------ writing

    def _journal(self, entry: dict) -> None:
        entry = {"time": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"), **entry}
        with open(self.journal_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _crash(self, point: str) -> None:
        if self.crash_hook is not None:
            self.crash_hook(point)

    def _acquire(self) -> None:
        try:
            fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o644)
        except FileExistsError:
            raise ConcurrentRegistrationError(
                f"registration in progress or interrupted ({self.lock_path} exists); run recovery"
            ) from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))

    def _release(self) -> None:
        self.lock_path.unlink(missing_ok=True)

    def _backups(self) -> tuple[Path, Path]:
        return (self.rules_path.with_name(RULES_FILE + BACKUP_SUFFIX),
                self.pdl_path.with_name(PDL_FILE + BACKUP_SUFFIX))

    def record_rejection(self, request_id: str, verdict: ValidationVerdict, reason: str = "") -> None:
        self._journal({"event": "REJECT", "decision": "reject", "request_id": request_id,
                       "failed_stage": verdict.failed_stage, "reason": reason})

    def register(self, candidate: CandidateArtifact, request_id: str) -> RegistrationResult:
        """Append the candidate's rules and predicates to both files, all-or-nothing."""
        self._acquire()
        try:
            rules_text, pdl_text = self.texts()
            new_rules = parse_ruleset(candidate.rule_text)
            new_preds = parse_pdl(candidate.pdl_text)
            state = self.state()
            check(new_preds, BUILTINS, state.predicates)
            clash = {r.name for r in state.rules} & {r.name for r in new_rules}
            if clash:
                raise RegistryError(f"rule name(s) already registered: {', '.join(sorted(clash))}")
            link(tuple(state.rules) + tuple(new_rules), tuple(state.predicates) + tuple(new_preds))

            rules_out = _append(rules_text, request_id, (print_rule(r) for r in new_rules))
            pdl_out = _append(pdl_text, request_id, (print_def(p) for p in new_preds))

            rules_bak, pdl_bak = self._backups()
            atomic_write(rules_bak, rules_text.encode("utf-8"))
            atomic_write(pdl_bak, pdl_text.encode("utf-8"))
            self._crash("after-backup")
            self._journal({"event": "BEGIN", "request_id": request_id})
            self._crash("after-begin")
            atomic_write(self.rules_path, rules_out.encode("utf-8"))
            self._crash("between-writes")
            atomic_write(self.pdl_path, pdl_out.encode("utf-8"))
            self._crash("before-commit")
            self._journal({"event": "COMMIT", "decision": "approve", "request_id": request_id,
                           "rules": [r.name for r in new_rules], "predicates": [p.name for p in new_preds]})
            rules_bak.unlink(missing_ok=True)
            pdl_bak.unlink(missing_ok=True)
        except SimulatedCrash:
            # A crash leaves the lock and backups behind, as a real one would.
            raise
        except BaseException:
            if self.pending() == request_id:
                self._rollback(request_id)
            self._release()
            raise
        self._release()
        return RegistrationResult(request_id, tuple(r.name for r in new_rules), tuple(p.name for p in new_preds))

    def _rollback(self, request_id: str) -> None:
        rules_bak, pdl_bak = self._backups()
        if not rules_bak.is_file() or not pdl_bak.is_file():
            raise RegistryError("interrupted registration has no backups; cannot roll back")
        atomic_write(self.rules_path, rules_bak.read_bytes())
        atomic_write(self.pdl_path, pdl_bak.read_bytes())
        self._journal({"event": "ROLLBACK", "request_id": request_id})

    def pending(self) -> str | None:
        """Request id of a BEGIN without a matching COMMIT or ROLLBACK, if any."""
        open_id = None
        for entry in self.journal():
            ev = entry.get("event")
            if ev == "BEGIN":
                open_id = entry.get("request_id")
            elif ev in ("COMMIT", "ROLLBACK"):
                open_id = None
        return open_id

    def recover(self, force: bool = False) -> str | None:
        """Roll back an interrupted registration; returns its request id (None if nothing to do)."""
        if self.lock_path.exists() and not force:
            try:
                pid = int(self.lock_path.read_text().strip() or "0")
            except ValueError:
                pid = 0
            if pid and pid != os.getpid() and _pid_alive(pid):
                raise ConcurrentRegistrationError(f"registration held by live process {pid}")
        open_id = self.pending()
        if open_id is not None:
            self._rollback(open_id)
        rules_bak, pdl_bak = self._backups()
        rules_bak.unlink(missing_ok=True)
        pdl_bak.unlink(missing_ok=True)
        self._release()
        return open_id


def _append(text: str, request_id: str, lines) -> str:
    body = text if not text or text.endswith("\n") else text + "\n"
    return body + f"# {request_id}\n" + "".join(line + "\n" for line in lines)


def review_and_register(registry: Registry, candidate: CandidateArtifact, verdict: ValidationVerdict,
                        request_id: str, approve: bool, reason: str = "") -> RegistrationResult | None:
    """Apply a reviewer decision. Only accepted verdicts can be registered."""
    if registry.lock_path.exists():
        raise ConcurrentRegistrationError(f"{registry.lock_path} exists; run recovery first")
    if not approve:
        registry.record_rejection(request_id, verdict, reason or "rejected by reviewer")
        return None
    if not verdict.accepted:
        raise RegistryError(f"candidate failed validation at {verdict.failed_stage}; cannot register")
    return registry.register(candidate, request_id)
