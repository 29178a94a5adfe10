"""Commit handling on top of the tagged engine.

A commit pair closes a session for good: the step leaves a memory with no
backward rule, and everything the session's history depends on becomes
permanent with it.  Lockedness is the least set containing the commit
memories and closed under "produced something a locked memory consumed",
walking back through fork splits.

Locked memories are never backward-enabled to begin with (their forward
consequences are exactly what makes them locked), so the filtered
relation below equals the unfiltered one; the filter doubles as an
invariant check.
"""

from __future__ import annotations

from .primitives import PrimitiveTable
from .respi import (
    CommitMem,
    Mem,
    RConfig,
    RRedex,
    Tag,
    enabled_backward,
    mem_head,
    mem_id,
    mem_tail,
)
from .syntax import (
    Accept,
    Branch,
    Commit,
    If,
    MAccept,
    MBranch,
    MReceive,
    MRequest,
    MSelect,
    MSend,
    Par,
    Process,
    Rec,
    Receive,
    Request,
    Restrict,
    Select,
    Send,
)


def locked_memories(conf: RConfig) -> set[str]:
    """Memory ids that can never be undone."""
    mems = conf.mems()
    by_tail: dict[Tag, list[Mem]] = {}
    for m in mems:
        for t in mem_tail(m):
            by_tail.setdefault(t, []).append(m)
    work = [m for m in mems if isinstance(m, CommitMem)]
    locked = {mem_id(m) for m in work}
    while work:
        m = work.pop()
        for t in mem_head(m):
            for producer in by_tail.get(t, []):
                if mem_id(producer) not in locked:
                    locked.add(mem_id(producer))
                    work.append(producer)
    return locked


def enabled_backward_r(
    conf: RConfig, prims: PrimitiveTable | None = None
) -> list[RRedex]:
    """Backward redexes with the locked set filtered out (a no-op check)."""
    raw = enabled_backward(conf, prims)
    locked = locked_memories(conf)
    stuck = [r.mem for r in raw if r.mem in locked]
    assert not stuck, f"locked memories enumerated as reversible: {stuck}"
    return raw


def lint_subordinate_commits(p: Process) -> list[str]:
    """Warn about commits guarded by actions of a different session.

    Such a commit only fires once the guarding session has progressed, so
    it silently couples the two histories; usually a protocol smell.
    """
    warnings: list[str] = []

    def go(q: Process, guards: frozenset[str]) -> None:
        match q:
            case Commit(subj, body):
                others = sorted(guards - {subj.name})
                if others:
                    warnings.append(
                        f"commit on {subj.name} is guarded by actions on "
                        f"{', '.join(others)}"
                    )
                go(body, guards | {subj.name})
            case Send(subj, _, body) | Receive(subj, _, body) | Select(subj, _, body):
                go(body, guards | {subj.name})
            case Branch(subj, branches) | MBranch(subj, _, branches):
                for _, b in branches:
                    go(b, guards | {subj.name})
            case MSend(subj, _, _, body) | MReceive(subj, _, _, body) | MSelect(subj, _, _, body):
                go(body, guards | {subj.name})
            case Request(_, _, body) | Accept(_, _, body) | Rec(_, body) | Restrict(_, body):
                go(body, guards)
            case MRequest(_, _, _, body) | MAccept(_, _, _, body):
                go(body, guards)
            case If(_, t, e):
                go(t, guards)
                go(e, guards)
            case Par(l, r):
                go(l, guards)
                go(r, guards)

    go(p, frozenset())
    return warnings
