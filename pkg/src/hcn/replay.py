"""Teacher-forced replay of labeled dialogs through a domain pack.

Replay drives the developer code with the true transcript: entity state is
updated from the real user turns (plus any attached database rows), and the
previous-action input at each step is the *labeled* action, not the model's
own choice.  This produces the per-turn observations, masks and labels that
supervised training consumes, and, when parameters are supplied, the model's
greedy predictions with their rendered surface strings for evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import neural
from .engine import DomainPack, render_action
from .features import Featurizer


@dataclass
class ReplayResult:
    observations: list[np.ndarray] = field(default_factory=list)
    masks: list[np.ndarray] = field(default_factory=list)
    labels: list[int] = field(default_factory=list)
    references: list[str] = field(default_factory=list)
    predictions: list[int] = field(default_factory=list)
    rendered: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.labels)


def replay_dialog(
    pack: DomainPack,
    featurizer: Featurizer,
    dialog,
    use_mask: bool = True,
    for_training: bool = False,
    params: neural.LstmParameters | None = None,
) -> ReplayResult:
    """Replay one labeled dialog.

    ``for_training`` additionally permits the UNK action (when the pack has
    one) so folded labels stay mask-consistent; at evaluation time UNK stays
    masked.  With ``params`` the model is stepped alongside the replay and its
    greedy predictions are rendered against the replayed entity state.
    """
    result = ReplayResult()
    state = pack.initial_state()
    action_count = pack.action_count
    lstm = neural.LstmState.zeros(params.hidden) if params is not None else None
    prev_label: int | None = None

    had_unk = getattr(pack, "allow_unk", None)
    if had_unk is not None:
        pack.allow_unk = bool(for_training)
    try:
        for user_text, db_rows, reference in pack.iter_replay_turns(dialog):
            mentions = pack.extract_entities(user_text)
            state = pack.update_state(state, mentions, user_text, db_rows=db_rows)
            if use_mask:
                mask = np.asarray(pack.action_mask(state), dtype=float)
            else:
                mask = np.ones(action_count)
            context = pack.context_features(state, mentions)
            obs = featurizer.observe(user_text, context)
            label = pack.label_for(reference)

            result.observations.append(obs.vector)
            result.masks.append(mask)
            result.labels.append(label)
            result.references.append(reference)

            if params is not None:
                prev_onehot = np.zeros(action_count)
                if prev_label is not None:
                    prev_onehot[prev_label] = 1.0
                x = np.concatenate([obs.vector, prev_onehot, mask])
                lstm = neural.lstm_step(params, lstm, x)
                dist = neural.output_distribution(params, lstm.hidden, mask)
                predicted = dist.argmax()
                template = pack.templates[predicted]
                try:
                    rendered = render_action(template, pack.resolver(state, template))
                except Exception:
                    rendered = template.surface
                result.predictions.append(predicted)
                result.rendered.append(rendered)

            # the *true* action drives the developer-code state forward
            label_template = pack.templates[label]
            state = pack.observe_action(state, label_template, reference)
            prev_label = label
    finally:
        if had_unk is not None:
            pack.allow_unk = had_unk
    return result


def verify_mask_consistency(pack, featurizer, dialogs) -> list[tuple[int, int, int]]:
    """Return ``(dialog_index, turn, label)`` for every labeled action that the
    training-time mask would forbid.  Empty means the mask rules agree with the
    data."""
    violations = []
    for d, dialog in enumerate(dialogs):
        result = replay_dialog(pack, featurizer, dialog, use_mask=True, for_training=True)
        for t, (mask, label) in enumerate(zip(result.masks, result.labels)):
            if not mask[label]:
                violations.append((d, t, label))
    return violations
