"""Four-state race behaviour machine."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

log = logging.getLogger(__name__)


class BehaviorState(enum.Enum):
    GBFREE = "GBFree"
    TRAILING = "Trailing"
    OVERTAKE = "Overtake"
    REACTIVE = "Reactive"


@dataclass(frozen=True)
class Conditions:
    opp: bool = False
    ot: bool = False
    done: bool = False
    ofc: bool = False
    ic: bool = False

    def as_tuple(self):
        return (self.opp, self.ot, self.done, self.ofc, self.ic)


def transition(state: BehaviorState, c: Conditions) -> tuple[BehaviorState, str]:
    """Next state and the name of the condition that caused it ("" for a self-loop)."""
    if state is BehaviorState.REACTIVE:
        if c.ic and not c.ofc:
            return BehaviorState.GBFREE, "ic"
        return state, ""
    if c.ofc:
        return BehaviorState.REACTIVE, "ofc"
    if state is BehaviorState.GBFREE:
        return (BehaviorState.TRAILING, "opp") if c.opp else (state, "")
    if state is BehaviorState.TRAILING:
        if c.ot:
            return BehaviorState.OVERTAKE, "ot"
        if not c.opp:
            return BehaviorState.GBFREE, "!opp"
        return state, ""
    # Overtake
    if c.done:
        return BehaviorState.GBFREE, "done"
    if not c.ot:
        return BehaviorState.TRAILING, "!ot"
    return state, ""


@dataclass
class StateMachine:
    state: BehaviorState = BehaviorState.GBFREE
    log: list = field(default_factory=list)

    def step(self, c: Conditions, t: float = 0.0) -> BehaviorState:
        nxt, cause = transition(self.state, c)
        if nxt is not self.state:
            self.log.append((t, self.state.value, nxt.value, cause))
            log.debug("t=%.2f %s -> %s (%s)", t, self.state.value, nxt.value, cause)
            self.state = nxt
        return self.state

    def force(self, state: BehaviorState, cause: str, t: float = 0.0) -> None:
        if state is not self.state:
            self.log.append((t, self.state.value, state.value, cause))
            self.state = state
