"""Synthetic personnel directory with controlled ambiguity.

People have a canonical first name, optional nicknames, a last name and one
or more phone entries.  Generation guarantees at least 10% of people share a
first name with somebody else (so disambiguation dialogs are reachable) and
at least 30% have two or more phone types (so phone-type logic is exercised).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

NICKNAMES = {
    "michael": ("mike",),
    "joseph": ("joe", "joey"),
    "william": ("bill", "will"),
    "robert": ("bob", "rob"),
    "elizabeth": ("liz", "beth"),
    "jennifer": ("jen", "jenny"),
    "katherine": ("kate", "katie"),
    "margaret": ("peggy", "meg"),
    "richard": ("rick",),
    "thomas": ("tom", "tommy"),
    "christopher": ("chris",),
    "patricia": ("pat", "tricia"),
    "daniel": ("dan", "danny"),
    "steven": ("steve",),
    "susan": ("sue",),
    "edward": ("ed", "eddie"),
}

FIRST_NAMES = tuple(NICKNAMES) + (
    "anna", "david", "maria", "kevin", "laura", "peter", "sara", "omar",
    "nina", "carl", "ruth", "victor",
)
LAST_NAMES = (
    "adamson", "baker", "chen", "davis", "evans", "foster", "garcia", "harris",
    "ivanov", "jones", "kim", "lopez", "miller", "nguyen", "olsen", "park",
    "quinn", "rossi", "smith", "turner", "ueda", "vance", "walker", "young",
)

PHONE_TYPES = ("work", "mobile", "home")
PHONE_TYPE_SYNONYMS = {"cell": "mobile", "cellphone": "mobile", "office": "work"}


def canonical_phone_type(value: str) -> str:
    return PHONE_TYPE_SYNONYMS.get(value, value)


@dataclass(frozen=True)
class Person:
    firstname: str
    nicknames: tuple[str, ...]
    lastname: str
    phones: dict  # phonetype -> number

    @property
    def full_name(self) -> str:
        return f"{self.firstname} {self.lastname}"

    @property
    def key(self) -> str:
        return self.full_name


@dataclass
class Directory:
    people: list[Person] = field(default_factory=list)

    def __post_init__(self):
        self._nick_to_first: dict[str, set[str]] = {}
        for person in self.people:
            for nick in person.nicknames:
                self._nick_to_first.setdefault(nick, set()).add(person.firstname)

    def canonical_first(self, name: str) -> str:
        """Resolve a nickname to its canonical first name when unambiguous."""
        firsts = self._nick_to_first.get(name)
        if firsts and len(firsts) == 1:
            return next(iter(firsts))
        return name

    def match(self, firstname: str | None = None, lastname: str | None = None) -> list[Person]:
        out = []
        for person in self.people:
            if firstname and firstname != person.firstname and firstname not in person.nicknames:
                continue
            if lastname and lastname != person.lastname:
                continue
            out.append(person)
        return out

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for p in self.people:
                phones = ",".join(f"{t}:{n}" for t, n in p.phones.items())
                fh.write(f"{p.firstname}|{','.join(p.nicknames)}|{p.lastname}|{phones}\n")

    @classmethod
    def load(cls, path) -> "Directory":
        people = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("|")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 |-separated fields")
            first, nicks, last, phones = parts
            phone_map = {}
            for entry in phones.split(","):
                ptype, _, number = entry.partition(":")
                if not number:
                    raise ValueError(f"{path}:{lineno}: bad phone entry {entry!r}")
                phone_map[ptype] = number
            people.append(Person(first, tuple(n for n in nicks.split(",") if n), last, phone_map))
        return cls(people)


def generate_directory(seed: int, n_people: int) -> Directory:
    """Deterministic directory of ``n_people`` with ambiguity guarantees."""
    if n_people < 2:
        raise ValueError("need at least 2 people")
    rng = random.Random(seed)
    people: list[Person] = []
    used = set()
    for i in range(n_people):
        while True:
            first, last = rng.choice(FIRST_NAMES), rng.choice(LAST_NAMES)
            if (first, last) not in used:
                used.add((first, last))
                break
        people.append(_make_person(rng, first, last, i))

    # force shared first names onto at least 10% of people
    need_shared = max(2, (n_people + 9) // 10)
    while _shared_count(people) < need_shared:
        donor, victim = rng.sample(range(n_people), 2)
        first = people[donor].firstname
        if (first, people[victim].lastname) in used:
            continue
        used.discard((people[victim].firstname, people[victim].lastname))
        used.add((first, people[victim].lastname))
        people[victim] = _make_person(rng, first, people[victim].lastname, victim)

    # at least 30% with two or more phone types
    need_multi = (3 * n_people + 9) // 10
    multi = [i for i, p in enumerate(people) if len(p.phones) >= 2]
    singles = [i for i, p in enumerate(people) if len(p.phones) < 2]
    rng.shuffle(singles)
    while len(multi) < need_multi and singles:
        i = singles.pop()
        p = people[i]
        extra = next(t for t in PHONE_TYPES if t not in p.phones)
        phones = dict(p.phones)
        phones[extra] = _number(rng)
        people[i] = Person(p.firstname, p.nicknames, p.lastname, phones)
        multi.append(i)
    return Directory(people)


def _shared_count(people: list[Person]) -> int:
    by_first: dict[str, int] = {}
    for p in people:
        by_first[p.firstname] = by_first.get(p.firstname, 0) + 1
    return sum(n for n in by_first.values() if n > 1)


def _number(rng: random.Random) -> str:
    return f"555-{rng.randrange(10000):04d}"


def _make_person(rng: random.Random, first: str, last: str, index: int) -> Person:
    types = ["work"]
    if rng.random() < 0.35:
        types.append("mobile")
    if rng.random() < 0.15:
        types.append("home")
    phones = {t: _number(rng) for t in types}
    return Person(first, NICKNAMES.get(first, ()), last, phones)
