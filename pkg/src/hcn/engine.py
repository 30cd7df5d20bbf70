"""Per-dialog execution loop: featurize the user turn, track entities, run the
recurrent policy, mask and select an action, substitute entities, dispatch
APIs.

Domain knowledge enters through a :class:`DomainPack`: developer code that
owns entity extraction, entity state, the action mask, context features,
action templates and API dispatch.  The engine treats the entity state as an
opaque value and never inspects it.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

import numpy as np

from . import neural
from .features import Featurizer

log = logging.getLogger(__name__)

_SLOT_RE = re.compile(r"<([a-z_]+)>")


class RenderError(ValueError):
    """A template slot has no tracked entity value."""


@dataclass(frozen=True)
class ActionTemplate:
    """One system action: text with entity slots, or an API call."""

    id: int
    kind: str  # "text" or "api"
    surface: str
    api_name: str | None = None

    def __post_init__(self):
        if self.kind not in ("text", "api"):
            raise ValueError(f"unknown template kind {self.kind!r}")

    @property
    def slots(self) -> list[str]:
        return _SLOT_RE.findall(self.surface)


def render_action(template: ActionTemplate, resolver) -> str:
    """Replace every ``<slot>`` marker using ``resolver`` (mapping or callable).

    A slot without a value is an error naming the slot; the action mask should
    have prevented the action from being selected.
    """
    get = resolver.get if hasattr(resolver, "get") else resolver

    def substitute(match):
        value = get(match.group(1))
        if value is None:
            raise RenderError(f"no tracked value for slot <{match.group(1)}> in template {template.id}")
        return str(value)

    return _SLOT_RE.sub(substitute, template.surface)


class DomainPack:
    """Developer-code interface consumed by the engine.

    Subclasses provide the action inventory and the domain logic around it.
    ``observe_action`` is called after every emitted system action so packs
    can track what the system said (offers made, confirmations pending);
    the default keeps the state unchanged.
    """

    templates: list[ActionTemplate] = []

    @property
    def action_count(self) -> int:
        return len(self.templates)

    def initial_state(self):
        raise NotImplementedError

    def extract_entities(self, text: str) -> list[tuple[str, str]]:
        raise NotImplementedError

    def update_state(self, state, mentions, text: str, db_rows=None):
        raise NotImplementedError

    def action_mask(self, state) -> np.ndarray:
        raise NotImplementedError

    def context_features(self, state, mentions) -> np.ndarray:
        raise NotImplementedError

    def slot_value(self, state, slot: str, template: ActionTemplate) -> str | None:
        raise NotImplementedError

    def dispatch_api(self, template: ActionTemplate, state):
        """Run an API action; returns ``(state, api_features)``."""
        return state, np.zeros(0)

    def observe_action(self, state, template: ActionTemplate, rendered: str):
        return state

    def resolver(self, state, template: ActionTemplate):
        return lambda slot: self.slot_value(state, slot, template)


@dataclass
class TurnRecord:
    """Inputs and outputs of one engine step, kept for replay and RL."""

    observation: np.ndarray
    mask: np.ndarray
    probs: np.ndarray
    action: int


@dataclass
class Session:
    """State of one live dialog; single-threaded, cheap, isolated."""

    pack: DomainPack
    params: neural.LstmParameters
    featurizer: Featurizer
    use_mask: bool = True
    lstm_state: neural.LstmState = None
    entity_state: object = None
    previous_action: int | None = None
    api_features: np.ndarray = None
    transcript: list[tuple[str, str]] = field(default_factory=list)
    history: list[TurnRecord] = field(default_factory=list)

    def __post_init__(self):
        if self.lstm_state is None:
            self.lstm_state = neural.LstmState.zeros(self.params.hidden)
        if self.entity_state is None:
            self.entity_state = self.pack.initial_state()
        if self.api_features is None:
            self.api_features = np.zeros(self.featurizer.layout.api)


def new_session(
    pack: DomainPack,
    params: neural.LstmParameters,
    featurizer: Featurizer,
    use_mask: bool = True,
) -> Session:
    """Fresh session: zeroed LSTM state, empty entity state, no previous action."""
    if pack.action_count != params.action_count:
        raise ValueError(
            f"pack has {pack.action_count} actions but parameters expect {params.action_count}"
        )
    if featurizer.layout.obs_size != params.obs_size:
        raise ValueError(
            f"featurizer produces {featurizer.layout.obs_size}-dim observations, "
            f"parameters expect {params.obs_size}"
        )
    return Session(pack=pack, params=params, featurizer=featurizer, use_mask=use_mask)


def select_action(dist: neural.ActionDistribution, mode: str, rng=None) -> int:
    """Greedy argmax (ties to the lowest id) or a sample from the distribution."""
    if mode == "greedy":
        return dist.argmax()
    if mode == "sample":
        if rng is None:
            raise ValueError("sample mode needs an rng")
        return int(rng.choice(len(dist.probs), p=dist.probs))
    raise ValueError(f"unknown selection mode {mode!r}")


def step(session: Session, user_text: str, mode: str = "greedy", rng=None) -> tuple[int, str]:
    """Run one full cycle of the loop and return ``(action_id, rendered)``.

    API actions do not consume a user turn: callers should immediately step
    again with an empty utterance after an API action, mirroring the silent
    turns of the dialog corpora.
    """
    pack = session.pack
    mentions = pack.extract_entities(user_text)
    session.entity_state = pack.update_state(session.entity_state, mentions, user_text)
    if session.use_mask:
        mask = np.asarray(pack.action_mask(session.entity_state), dtype=float)
    else:
        mask = np.ones(pack.action_count)
    context = pack.context_features(session.entity_state, mentions)
    obs = session.featurizer.observe(user_text, context, session.api_features)

    action_count = session.params.action_count
    prev_onehot = np.zeros(action_count)
    if session.previous_action is not None:
        prev_onehot[session.previous_action] = 1.0
    x = np.concatenate([obs.vector, prev_onehot, mask])
    session.lstm_state = neural.lstm_step(session.params, session.lstm_state, x)

    try:
        dist = neural.output_distribution(session.params, session.lstm_state.hidden, mask)
    except neural.MaskError:
        # domain-pack bug; keep interactive sessions alive on the unmasked policy
        log.warning("all-zero action mask at inference; falling back to unmasked softmax")
        dist = neural.output_distribution(
            session.params, session.lstm_state.hidden, np.ones(action_count)
        )
    action_id = select_action(dist, mode, rng)
    template = pack.templates[action_id]
    rendered = render_action(template, pack.resolver(session.entity_state, template))
    session.entity_state = pack.observe_action(session.entity_state, template, rendered)
    if template.kind == "api":
        session.entity_state, api_features = pack.dispatch_api(template, session.entity_state)
        session.api_features = np.asarray(api_features, dtype=float)
        if len(session.api_features) != session.featurizer.layout.api:
            session.api_features = np.zeros(session.featurizer.layout.api)

    session.transcript.append(("USER", user_text))
    session.transcript.append(("API" if template.kind == "api" else "SYS", rendered))
    session.history.append(TurnRecord(obs.vector, mask, dist.probs.copy(), action_id))
    session.previous_action = action_id
    return action_id, rendered


def format_transcript(session: Session) -> str:
    """Chat transcript: alternating ``USER:`` / ``SYS:`` / ``API:`` lines."""
    return "\n".join(f"{speaker}: {text}" for speaker, text in session.transcript)
