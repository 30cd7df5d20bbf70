"""Domain pack for the restaurant dialog tasks.

Holds the developer-code side of the model for the two transcript corpora:
string-match entity extraction over value lexicons, most-recent-wins entity
tracking, rating-sorted database results, system-utterance templatization,
common-sense action masking, binary context features, and the table of
queries known (from training data) to yield no results.

Two task flavours exist: the synthetic booking task (4 slots: cuisine,
location, party_size, price; 4 context features) and the human-computer task
(3 slots; 14 context features; rare system actions folded into an UNK action
that is masked at inference).
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..engine import ActionTemplate, DomainPack
from .data import BabiDialog, DbRow

log = logging.getLogger(__name__)

TASK5_SLOTS = ("cuisine", "location", "party_size", "price")
TASK6_SLOTS = ("cuisine", "location", "price")

DONTCARE = "dontcare"
UNK_SURFACE = "UNK"

# attribute name -> entity/lexicon type
_ATTR_TYPES = {
    "R_cuisine": "cuisine",
    "R_location": "location",
    "R_price": "price",
    "R_number": "party_size",
    "R_phone": "phone",
    "R_address": "address",
    "R_post_code": "post_code",
}

# extraction priority when two values could claim the same span
_TYPE_PRIORITY = (
    "name", "phone", "address", "post_code",
    "cuisine", "location", "party_size", "price",
)

# phrases mapping straight to a dontcare slot value
_DONTCARE_PHRASES = {
    "any kind of food": "cuisine",
    "any type of food": "cuisine",
    "any food": "cuisine",
    "any part of town": "location",
    "any area": "location",
    "anywhere": "location",
    "any price range": "price",
    "any price": "price",
}
# bare dontcare markers resolved against the slot the system last asked for
_BARE_DONTCARE = ("any", "dont care", "dontcare", "i dont care", "it doesnt matter", "doesnt matter")

_NO_RESULT_MARKERS = ("there is no", "there are no")


# --- lexicons ----------------------------------------------------------------


def build_lexicons(
    kb_rows: list[DbRow] | None = None,
    dialogs: list[BabiDialog] | None = None,
    task: int = 5,
) -> dict[str, list[str]]:
    """Per-type entity value lists from the knowledge base and/or transcripts.

    Restaurant names come from row names, typed values from row attributes,
    and api_call arguments contribute positionally.  The wildcard argument
    tokens of the human-computer task (``R_location`` etc.) are registered as
    values of their slot so calls with unconstrained slots templatize cleanly.
    """
    values: dict[str, set[str]] = {}

    def add(kind, value):
        values.setdefault(kind, set()).add(value)

    for row in kb_rows or []:
        add("name", row.name)
        kind = _ATTR_TYPES.get(row.attribute)
        if kind:
            add(kind, row.value)
    api_slots = TASK5_SLOTS if task == 5 else TASK6_SLOTS
    for dialog in dialogs or []:
        for t, turn in enumerate(dialog.turns):
            for row in dialog.db_blocks.get(t, []):
                add("name", row.name)
                kind = _ATTR_TYPES.get(row.attribute)
                if kind:
                    add(kind, row.value)
            if turn.system.startswith("api_call"):
                args = turn.system.split(" ")[1:]
                for kind, value in zip(api_slots, args):
                    if not value.startswith("R_"):
                        add(kind, value)
        for row in dialog.db_blocks.get(len(dialog.turns), []):
            add("name", row.name)
    if task == 6:
        for slot in TASK6_SLOTS:
            add(slot, f"R_{slot}")
    return {kind: sorted(vals) for kind, vals in values.items()}


class _Matcher:
    """Longest-match-first token-span scanner over the lexicons."""

    def __init__(self, lexicons: dict[str, list[str]]):
        self.by_first: dict[str, list[tuple[int, tuple[str, ...], str, str]]] = {}
        prio = {kind: i for i, kind in enumerate(_TYPE_PRIORITY)}
        for kind, vals in lexicons.items():
            for value in vals:
                toks = tuple(value.lower().split(" "))
                entry = (-len(toks), toks, kind, value)
                self.by_first.setdefault(toks[0], []).append(entry)
        for entries in self.by_first.values():
            entries.sort(key=lambda e: (e[0], prio.get(e[2], 99)))

    def scan(self, tokens: list[str]):
        """Yield ``(start, end, kind, value)`` spans, longest match first."""
        lowered = [t.lower() for t in tokens]
        i = 0
        while i < len(tokens):
            hit = None
            for neg_len, toks, kind, value in self.by_first.get(lowered[i], []):
                n = -neg_len
                if tuple(lowered[i : i + n]) == toks:
                    hit = (i, i + n, kind, value)
                    break
            if hit:
                yield hit
                i = hit[1]
            else:
                i += 1


def extract_entities(text: str, lexicons: dict[str, list[str]], matcher: _Matcher | None = None):
    """String-match mentions: ``[(type, value), ...]`` in utterance order.

    Dontcare phrases yield ``(slot, "dontcare")``; a bare dontcare marker
    yields ``("*", "dontcare")`` for the caller to ground against the slot
    most recently asked for.
    """
    matcher = matcher or _Matcher(lexicons)
    mentions = [(kind, value) for _, _, kind, value in matcher.scan(text.split())]
    lowered = f" {' '.join(text.lower().split())} "
    matched_phrase = False
    for phrase, slot in _DONTCARE_PHRASES.items():
        if f" {phrase} " in lowered:
            mentions.append((slot, DONTCARE))
            matched_phrase = True
    if not matched_phrase and lowered.strip() in _BARE_DONTCARE:
        mentions.append(("*", DONTCARE))
    return mentions


def templatize(utterance: str, matcher: _Matcher) -> str:
    """Replace entity value spans with ``<type>`` markers."""
    tokens = utterance.split(" ")
    out = []
    spans = {start: (end, kind) for start, end, kind, _ in matcher.scan(tokens)}
    i = 0
    while i < len(tokens):
        if i in spans:
            end, kind = spans[i]
            out.append(f"<{kind}>")
            i = end
        else:
            out.append(tokens[i])
            i += 1
    return " ".join(out)


# --- template inventory -------------------------------------------------------


def build_template_inventory(
    dialogs: list[BabiDialog],
    lexicons: dict[str, list[str]],
    unk_min_count: int | None = None,
) -> list[ActionTemplate]:
    """One template per distinct templatized system utterance, in first-occurrence
    order.  With ``unk_min_count``, surfaces seen fewer times are folded into a
    single UNK action appended at the end."""
    matcher = _Matcher(lexicons)
    order: list[str] = []
    counts: Counter = Counter()
    for dialog in dialogs:
        for turn in dialog.turns:
            surface = templatize(turn.system, matcher)
            if surface not in counts:
                order.append(surface)
            counts[surface] += 1
    if unk_min_count:
        order = [s for s in order if counts[s] >= unk_min_count]
    templates = []
    for i, surface in enumerate(order):
        if surface.startswith("api_call"):
            templates.append(ActionTemplate(i, "api", surface, api_name="api_call"))
        else:
            templates.append(ActionTemplate(i, "text", surface))
    if unk_min_count:
        templates.append(ActionTemplate(len(templates), "text", UNK_SURFACE))
    return templates


# --- entity state -------------------------------------------------------------


@dataclass
class RestaurantRow:
    name: str
    attrs: dict[str, str] = field(default_factory=dict)

    @property
    def rating(self) -> int:
        try:
            return int(self.attrs.get("R_rating", 0))
        except ValueError:
            return 0


def group_db_rows(rows: list[DbRow]) -> list[RestaurantRow]:
    """Group attribute rows per restaurant, then sort by rating descending
    (stable, so arrival order breaks ties)."""
    grouped: dict[str, RestaurantRow] = {}
    for row in rows:
        grouped.setdefault(row.name, RestaurantRow(row.name)).attrs[row.attribute] = row.value
    return sorted(grouped.values(), key=lambda r: -r.rating)


@dataclass
class BabiState:
    slots: dict[str, str] = field(default_factory=dict)
    db: list[RestaurantRow] = field(default_factory=list)
    db_queried: bool = False
    offered: set[str] = field(default_factory=set)
    current_offer: str | None = None
    last_asked_slot: str | None = None

    @property
    def results_empty(self) -> bool:
        return self.db_queried and not self.db

    def next_unoffered(self) -> RestaurantRow | None:
        for row in self.db:
            if row.name not in self.offered:
                return row
        return None

    def restaurant(self, name: str) -> RestaurantRow | None:
        for row in self.db:
            if row.name == name:
                return row
        return None


def update_entity_state(
    state: BabiState, mentions, db_rows: list[DbRow] | None = None, slots=TASK5_SLOTS
) -> BabiState:
    """Most-recent-wins slot updates; incoming db rows replace the result list."""
    for kind, value in mentions:
        if kind == "*" and value == DONTCARE:
            if state.last_asked_slot:
                state.slots[state.last_asked_slot] = DONTCARE
        elif kind in slots:
            state.slots[kind] = value
    if db_rows:
        state.db = group_db_rows(db_rows)
        state.offered = set()
        state.current_offer = None
    return state


# --- empty-query table ---------------------------------------------------------


@dataclass
class EmptyQueryTable:
    """Slot-value combinations the training transcripts show to be empty,
    plus the cuisines that are empty on their own."""

    combos: set[frozenset] = field(default_factory=set)
    cuisines: set[str] = field(default_factory=set)

    @staticmethod
    def _constraints(slots: dict[str, str]) -> frozenset:
        return frozenset((s, v) for s, v in slots.items() if v != DONTCARE)

    def query_empty(self, slots: dict[str, str]) -> bool:
        query = self._constraints(slots)
        return bool(query) and any(combo <= query for combo in self.combos)

    def cuisine_empty(self, slots: dict[str, str]) -> bool:
        return slots.get("cuisine") in self.cuisines

    def record(self, slots: dict[str, str]) -> None:
        combo = self._constraints(slots)
        if combo:
            self.combos.add(combo)
            if len(combo) == 1 and next(iter(combo))[0] == "cuisine":
                self.cuisines.add(next(iter(combo))[1])


def mine_empty_query_table(dialogs: list[BabiDialog], lexicons: dict[str, list[str]]) -> EmptyQueryTable:
    """Scan the training transcripts for no-results system responses issued
    before any database call, and record the query state at those turns."""
    matcher = _Matcher(lexicons)
    table = EmptyQueryTable()
    for dialog in dialogs:
        state = BabiState()
        for t, turn in enumerate(dialog.turns):
            mentions = extract_entities(turn.user, lexicons, matcher)
            update_entity_state(state, mentions, dialog.db_blocks.get(t))
            lowered = turn.system.lower()
            if any(marker in lowered for marker in _NO_RESULT_MARKERS) and not state.db_queried:
                table.record(state.slots)
            if turn.system.startswith("api_call"):
                state.db_queried = True
                state.db = []
    return table


# --- context features -----------------------------------------------------------


def compute_context_features(
    state: BabiState, mentions, empty_table: EmptyQueryTable, task: int
) -> np.ndarray:
    """Binary feature vector: 4 entries for the synthetic task (slot presence),
    14 for the human-computer task (presence in state and utterance, database
    status, result presentation status, and the two empty-query lookups)."""
    if task == 5:
        return np.array([1.0 if slot in state.slots else 0.0 for slot in TASK5_SLOTS])
    mention_kinds = {kind for kind, _ in mentions}
    feats = [1.0 if slot in state.slots else 0.0 for slot in TASK6_SLOTS]
    feats += [1.0 if slot in mention_kinds else 0.0 for slot in TASK6_SLOTS]
    feats.append(1.0 if state.db_queried else 0.0)
    feats.append(1.0 if state.results_empty else 0.0)
    feats.append(1.0 if state.db_queried and state.db else 0.0)
    feats.append(1.0 if state.offered else 0.0)
    feats.append(1.0 if state.db and all(r.name in state.offered for r in state.db) else 0.0)
    feats.append(1.0 if state.next_unoffered() is not None else 0.0)
    feats.append(1.0 if empty_table.query_empty(state.slots) else 0.0)
    feats.append(1.0 if empty_table.cuisine_empty(state.slots) else 0.0)
    return np.array(feats)


def context_size(task: int) -> int:
    return 4 if task == 5 else 14


# --- the pack -------------------------------------------------------------------


class BabiPack(DomainPack):
    """Developer code for the restaurant tasks, bound to a template inventory.

    Template classification (documented rule table):

    * ask-templates: for the synthetic task, the four known prompts, matched
      on their distinctive words; for the human-computer task, question-mark
      templates naming a slot ("food", "part of town", "price range").
      An ask for a slot already known is masked.
    * api templates: ``api_call`` surfaces.  The synthetic task requires all
      four slots before a call; the human-computer task requires at least one
      constraint and renders unconstrained slots as ``R_<slot>`` wildcards.
    * offer templates introduce a new venue: surfaces containing
      ``option: <name>`` or starting with ``<name> is a``.  They are masked
      unless an unpresented database result is available; rendering one marks
      the venue as presented.
    * every other template is permitted whenever its slots are renderable
      from tracked state.
    * The UNK action (folded rare surfaces) is masked at inference and only
      enabled for training replay.
    """

    _ASK_RULES_TASK5 = (
        ("cuisine", ("cuisine",)),
        ("location", ("where should it be",)),
        ("party_size", ("how many people",)),
        ("price", ("price range",)),
    )
    _ASK_RULES_TASK6 = (
        ("cuisine", ("kind of food", "type of food")),
        ("location", ("part of town", "what area")),
        ("price", ("price range",)),
    )

    def __init__(
        self,
        task: int,
        templates: list[ActionTemplate],
        lexicons: dict[str, list[str]],
        empty_table: EmptyQueryTable | None = None,
        kb_rows: list[DbRow] | None = None,
    ):
        if task not in (5, 6):
            raise ValueError("task must be 5 or 6")
        self.task = task
        self.slots = TASK5_SLOTS if task == 5 else TASK6_SLOTS
        self.templates = templates
        self.lexicons = lexicons
        self.matcher = _Matcher(lexicons)
        self.empty_table = empty_table or EmptyQueryTable()
        self.kb = group_db_rows(kb_rows) if kb_rows else []
        self.surface_to_id = {t.surface: t.id for t in templates}
        self.unk_id = self.surface_to_id.get(UNK_SURFACE)
        self.allow_unk = False  # training replay flips this on
        self.ask_slot: dict[int, str] = {}
        self.offer_ids: set[int] = set()
        rules = self._ASK_RULES_TASK5 if task == 5 else self._ASK_RULES_TASK6
        for tpl in templates:
            if "<name>" in tpl.surface and (
                "option: <name>" in tpl.surface or tpl.surface.startswith("<name> is a")
            ):
                self.offer_ids.add(tpl.id)
                continue
            if tpl.kind == "api" or "<name>" in tpl.surface:
                continue
            if task == 6 and not tpl.surface.rstrip().endswith("?"):
                continue
            for slot, needles in rules:
                if any(needle in tpl.surface.lower() for needle in needles):
                    self.ask_slot[tpl.id] = slot
                    break

    # -- engine interface ------------------------------------------------

    def initial_state(self) -> BabiState:
        return BabiState()

    def extract_entities(self, text: str):
        return extract_entities(text, self.lexicons, self.matcher)

    def update_state(self, state: BabiState, mentions, text: str, db_rows=None) -> BabiState:
        return update_entity_state(state, mentions, db_rows, slots=self.slots)

    def action_mask(self, state: BabiState) -> np.ndarray:
        mask = np.zeros(len(self.templates))
        for tpl in self.templates:
            mask[tpl.id] = 1.0 if self._permitted(tpl, state) else 0.0
        return mask

    def context_features(self, state: BabiState, mentions) -> np.ndarray:
        return compute_context_features(state, mentions, self.empty_table, self.task)

    def slot_value(self, state: BabiState, slot: str, template: ActionTemplate) -> str | None:
        target = None
        if "<name>" in template.surface:
            if template.id in self.offer_ids:
                target = state.next_unoffered()
            else:
                name = state.current_offer
                target = state.restaurant(name) if name else state.next_unoffered()
        if slot == "name":
            return target.name if target else None
        if slot in ("phone", "address", "post_code"):
            if target is None and state.current_offer:
                target = state.restaurant(state.current_offer)
            if target is None:
                target = state.next_unoffered()
            return target.attrs.get(f"R_{slot}") if target else None
        if slot in TASK5_SLOTS:
            if target is not None:
                attr = {"cuisine": "R_cuisine", "location": "R_location",
                        "price": "R_price", "party_size": "R_number"}[slot]
                value = target.attrs.get(attr)
                if value is not None:
                    return value
            value = state.slots.get(slot)
            if template.kind == "api" and self.task == 6 and (value is None or value == DONTCARE):
                return f"R_{slot}"
            if value == DONTCARE:
                return None
            return value
        return None

    def dispatch_api(self, template: ActionTemplate, state: BabiState):
        """Query the bundled knowledge base for live chat sessions; replayed
        transcripts carry their results inline instead."""
        if self.kb:
            keys = {"cuisine": "R_cuisine", "location": "R_location", "price": "R_price"}
            state.db = [
                row
                for row in self.kb
                if all(
                    row.attrs.get(attr) == state.slots[slot]
                    for slot, attr in keys.items()
                    if state.slots.get(slot) not in (None, DONTCARE)
                )
            ]
            state.offered = set()
            state.current_offer = None
        return state, np.zeros(0)

    def observe_action(self, state: BabiState, template: ActionTemplate, rendered: str) -> BabiState:
        if template.kind == "api":
            state.db_queried = True
            state.db = []
            state.offered = set()
            state.current_offer = None
            return state
        if template.id in self.ask_slot:
            state.last_asked_slot = self.ask_slot[template.id]
        if "<name>" in template.surface:
            if template.id in self.offer_ids:
                target = state.next_unoffered()
                if target is not None:
                    state.offered.add(target.name)
                    state.current_offer = target.name
            elif state.current_offer is None:
                target = state.next_unoffered()
                if target is not None:
                    state.current_offer = target.name
        return state

    # -- replay support ----------------------------------------------------

    def label_for(self, system_utterance: str) -> int:
        surface = templatize(system_utterance, self.matcher)
        label = self.surface_to_id.get(surface)
        if label is None:
            if self.unk_id is not None:
                return self.unk_id
            raise ValueError(f"system utterance not in template inventory: {system_utterance!r}")
        return label

    def iter_replay_turns(self, dialog: BabiDialog):
        for t, turn in enumerate(dialog.turns):
            yield turn.user, dialog.db_blocks.get(t), turn.system

    # -- mask rules ----------------------------------------------------------

    def _renderable(self, template: ActionTemplate, state: BabiState) -> bool:
        return all(self.slot_value(state, slot, template) is not None for slot in template.slots)

    def _permitted(self, template: ActionTemplate, state: BabiState) -> bool:
        if template.surface == UNK_SURFACE:
            return self.allow_unk
        if template.kind == "api":
            if self.task == 5:
                return all(state.slots.get(s) not in (None, DONTCARE) for s in self.slots)
            return any(s in state.slots for s in self.slots)
        slot = self.ask_slot.get(template.id)
        if slot is not None and slot in state.slots:
            return False
        if template.id in self.offer_ids:
            return state.next_unoffered() is not None
        return self._renderable(template, state)
