"""Multi-agent cooperation: voting, role-based message routing (including the
sealed-bid auction mode), and debate rounds until consensus."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

from ..errors import NoBids
from ..interaction import Persona
from ..textutil import canonical_answer

DEFAULT_MESSAGE_CAP = 100
DEFAULT_DEBATE_ROUNDS = 5


# --- voting ------------------------------------------------------------------

@dataclass(frozen=True)
class Winner:
    option: str


@dataclass(frozen=True)
class Tie:
    options: frozenset[str]


@dataclass(frozen=True)
class QuorumNotMet:
    votes: int
    quorum: int


VoteOutcome = Winner | Tie | QuorumNotMet


def cooperate_voting(agents: Sequence[str],
                     proposal_fn: Callable[[str], Optional[str]],
                     quorum: int) -> VoteOutcome:
    """One canonicalised vote per agent; abstentions (None or errors) cast
    nothing. Plurality wins; equal-max counts surface as a Tie."""
    if quorum < 1:
        raise ValueError("quorum must be >= 1")
    tally: dict[str, int] = {}
    votes = 0
    for agent in agents:
        try:
            proposal = proposal_fn(agent)
        except Exception:
            proposal = None
        if proposal is None:
            continue
        key = canonical_answer(proposal)
        tally[key] = tally.get(key, 0) + 1
        votes += 1
    if votes < quorum:
        return QuorumNotMet(votes=votes, quorum=quorum)
    top = max(tally.values())
    leaders = {option for option, count in tally.items() if count == top}
    if len(leaders) > 1:
        return Tie(options=frozenset(leaders))
    return Winner(option=next(iter(leaders)))


# --- role-based cooperation ----------------------------------------------------

@dataclass(frozen=True)
class Message:
    sender: str
    tags: frozenset[str]
    content: str


@dataclass
class RoleAgent:
    """A persona bound to a responder; the bus calls respond per delivery."""

    persona: Persona
    respond: Callable[[Message], Sequence[Message]]

    @property
    def name(self) -> str:
        return self.persona.roles[0]


@dataclass
class BusTranscript:
    messages: list[Message] = field(default_factory=list)
    cap_exceeded: bool = False


def cooperate_roles(agents: Sequence[RoleAgent],
                    subscriptions: Mapping[str, set[str]],
                    initial: Message,
                    message_cap: int = DEFAULT_MESSAGE_CAP) -> BusTranscript:
    """Tag-routed message bus.

    Every published message enters the transcript; it is delivered to each
    agent (other than its sender) whose role subscriptions intersect its
    tags. The run ends when the bus drains or the cap is reached.
    """
    for agent in agents:
        if not agent.persona.roles:
            raise ValueError(f"agent {agent.persona.id} has no role")

    transcript = BusTranscript()
    queue: list[Message] = []

    def publish(message: Message) -> bool:
        if len(transcript.messages) >= message_cap:
            transcript.cap_exceeded = True
            return False
        transcript.messages.append(message)
        queue.append(message)
        return True

    publish(initial)
    while queue and not transcript.cap_exceeded:
        message = queue.pop(0)
        for agent in agents:
            if agent.name == message.sender:
                continue
            listened = set()
            for role in agent.persona.roles:
                listened |= set(subscriptions.get(role, set()))
            if not (listened & message.tags):
                continue
            for produced in agent.respond(message):
                if not publish(produced):
                    break
            if transcript.cap_exceeded:
                break
    return transcript


# --- auction ---------------------------------------------------------------------

@dataclass(frozen=True)
class Bid:
    bidder: str
    amount: float
    timestamp: int

    def __post_init__(self):
        if not (math.isfinite(self.amount) and self.amount >= 0):
            raise ValueError("bid amount must be finite and non-negative")


def cooperate_auction(auctioneer_task: str, bidders: Sequence[str],
                      bid_fn: Callable[[str], Optional[Bid]]) -> tuple[str, float]:
    """Sealed-bid first-price auction.

    Highest amount wins; ties fall to the earliest timestamp, then the
    lexicographically smallest agent id. The winner pays their own bid.
    """
    if not bidders:
        raise ValueError("auction needs at least one bidder")
    bids = [bid for bidder in bidders if (bid := bid_fn(bidder)) is not None]
    if not bids:
        raise NoBids(auctioneer_task)
    best = min(bids, key=lambda bid: (-bid.amount, bid.timestamp, bid.bidder))
    return best.bidder, best.amount


# --- debate ------------------------------------------------------------------------

@dataclass(frozen=True)
class Consensus:
    answer: str
    rounds: int


@dataclass(frozen=True)
class NoConsensus:
    answers: tuple[str, ...]  # final answer per agent, in agent order
    rounds: int


DebateOutcome = Consensus | NoConsensus
DebateAgent = Callable[[str, Sequence[str]], str]  # (topic, previous answers) -> answer


def cooperate_debate(agents: Sequence[DebateAgent], topic: str,
                     max_rounds: int = DEFAULT_DEBATE_ROUNDS) -> DebateOutcome:
    """Each round every agent answers given everyone's previous answers;
    consensus is unanimous canonical agreement."""
    if len(agents) < 2:
        raise ValueError("debate needs at least two agents")
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")

    previous: list[str] = []
    answers: list[str] = []
    for round_number in range(1, max_rounds + 1):
        answers = [agent(topic, tuple(previous)) for agent in agents]
        canonical = {canonical_answer(answer) for answer in answers}
        if len(canonical) == 1:
            return Consensus(answer=next(iter(canonical)), rounds=round_number)
        previous = answers
    return NoConsensus(answers=tuple(answers), rounds=max_rounds)
