"""Loader and serializer for the restaurant dialog transcript format.

Each dialog is a block of lines separated by a blank line.  Every line starts
with a 1-based counter that increments per line within the dialog.  A line
containing a tab is a turn, ``N user<TAB>system``; a line without a tab is a
database result row, ``N restaurant attribute value``, attached to the turn
that follows it.  The literal user text ``<SILENCE>`` denotes an empty user
input and is preserved on re-serialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

SILENCE = "<SILENCE>"


@dataclass(frozen=True)
class DbRow:
    name: str
    attribute: str
    value: str


@dataclass
class Turn:
    user: str
    system: str


@dataclass
class BabiDialog:
    """Turns plus per-turn database blocks.

    ``db_blocks[t]`` holds the rows that appeared immediately before turn
    ``t``; index ``len(turns)`` holds any trailing rows.
    """

    turns: list[Turn] = field(default_factory=list)
    db_blocks: dict[int, list[DbRow]] = field(default_factory=dict)

    def user_utterances(self) -> list[str]:
        return [t.user for t in self.turns]

    def system_utterances(self) -> list[str]:
        return [t.system for t in self.turns]


def _finish(dialog: BabiDialog, pending: list[DbRow], dialogs: list[BabiDialog]) -> None:
    if pending:
        dialog.db_blocks[len(dialog.turns)] = list(pending)
        pending.clear()
    if dialog.turns or dialog.db_blocks:
        dialogs.append(dialog)


def parse_babi_text(text: str, source: str = "<string>") -> list[BabiDialog]:
    dialogs: list[BabiDialog] = []
    dialog = BabiDialog()
    pending: list[DbRow] = []
    expected = 1
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            _finish(dialog, pending, dialogs)
            dialog = BabiDialog()
            expected = 1
            continue
        head, _, rest = line.partition(" ")
        try:
            counter = int(head)
        except ValueError:
            raise ValueError(f"{source}:{lineno}: malformed line counter {head!r}") from None
        if counter != expected:
            raise ValueError(
                f"{source}:{lineno}: line counter {counter}, expected {expected} "
                "(missing blank-line separator?)"
            )
        expected += 1
        if "\t" in rest:
            user, _, system = rest.partition("\t")
            if pending:
                dialog.db_blocks[len(dialog.turns)] = list(pending)
                pending.clear()
            dialog.turns.append(Turn("" if user == SILENCE else user, system))
        else:
            fields = rest.split(" ")
            if len(fields) != 3:
                raise ValueError(f"{source}:{lineno}: expected 'name attribute value', got {rest!r}")
            pending.append(DbRow(*fields))
    _finish(dialog, pending, dialogs)
    return dialogs


def load_babi_dialogs(path) -> list[BabiDialog]:
    with open(path, encoding="utf-8") as fh:
        return parse_babi_text(fh.read(), source=str(path))


def serialize_babi_dialogs(dialogs: list[BabiDialog]) -> str:
    """Inverse of the parser; round-trips the distributed files byte for byte."""
    blocks = []
    for dialog in dialogs:
        lines = []
        counter = 1
        for t, turn in enumerate(dialog.turns):
            for row in dialog.db_blocks.get(t, []):
                lines.append(f"{counter} {row.name} {row.attribute} {row.value}")
                counter += 1
            user = turn.user if turn.user else SILENCE
            lines.append(f"{counter} {user}\t{turn.system}")
            counter += 1
        for row in dialog.db_blocks.get(len(dialog.turns), []):
            lines.append(f"{counter} {row.name} {row.attribute} {row.value}")
            counter += 1
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def load_kb_rows(path) -> list[DbRow]:
    """Knowledge-base file: ``N name attribute value`` lines, no dialogs."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 'N name attribute value'")
            rows.append(DbRow(parts[1], parts[2], parts[3]))
    return rows
