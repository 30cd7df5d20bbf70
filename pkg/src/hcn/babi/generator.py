"""Synthetic restaurant-booking corpus in the standard transcript format.

Generates rule-scripted dialogs that follow the synthetic booking task's
shape: greeting, a booking request carrying zero or more of the four slots,
prompts for the missing slots, a database call (optionally revised), inline
database results, rating-ordered venue offers with rejections, and a closing
exchange, plus a knowledge-base file covering every venue.  Entity values are
split into two disjoint halves so an out-of-vocabulary test set can be drawn
from values never seen in training.

The system side uses exactly sixteen distinct surfaces, so templatization of
a generated training set reproduces the expected 16-template inventory.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from .data import BabiDialog, DbRow, Turn, serialize_babi_dialogs

CUISINES_IN = ("british", "french", "indian", "italian", "spanish")
CUISINES_OOV = ("cantonese", "japanese", "korean", "thai", "vietnamese")
LOCATIONS_IN = ("bombay", "london", "madrid", "paris", "rome")
LOCATIONS_OOV = ("beijing", "berlin", "hanoi", "seoul", "tokyo")
PRICES = ("cheap", "moderate", "expensive")
SIZES = ("two", "four", "six", "eight")
RATINGS = tuple(range(1, 9))

SYS_HELLO = "hello what can i help you with today"
SYS_ON_IT = "i'm on it"
SYS_ASK = {
    "cuisine": "any preference on a type of cuisine",
    "location": "where should it be",
    "party_size": "how many people would be in your party",
    "price": "which price range are looking for",
}
SYS_OPTIONS = "ok let me look into some options for you"
SYS_UPDATE = "sure is there anything else to update"
SYS_OFFER = "what do you think of this option: {name}"
SYS_ANOTHER = "sure let me find an other option for you"
SYS_RESERVE = "great let me do the reservation"
SYS_HERE_IT_IS = "here it is {value}"
SYS_ANYTHING_ELSE = "is there anything i can help you with"
SYS_WELCOME = "you're welcome"

GREETINGS = ("good morning", "hello", "hi", "good evening")
REQUESTS = (
    "can you book a table",
    "can you make a restaurant reservation",
    "i'd like to book a table",
    "may i have a table",
)
SLOT_PHRASES = {
    "cuisine": ("with {v} food", "serving {v} food"),
    "location": ("in {v}",),
    "party_size": ("for {v} people", "we will be {v}"),
    "price": ("in a {v} price range",),
}
REJECTIONS = ("no this does not work for me", "do you have something else")
ACCEPTS = ("let's do it", "it's perfect")
ASK_PHONE = "may i have the phone number of the restaurant"
ASK_ADDRESS = "do you have its address"
THANKS = ("thanks", "thank you")
BYES = ("no thank you", "no thanks")

SLOT_ORDER = ("cuisine", "location", "party_size", "price")
DB_ATTR_ORDER = ("R_phone", "R_cuisine", "R_address", "R_location", "R_number", "R_price", "R_rating")


def restaurant_name(location: str, price: str, cuisine: str, rating: int) -> str:
    return f"resto_{location}_{price}_{cuisine}_{rating}stars"


@dataclass(frozen=True)
class Venue:
    name: str
    cuisine: str
    location: str
    price: str
    rating: int
    number: str

    def attrs(self) -> dict[str, str]:
        return {
            "R_phone": f"{self.name}_phone",
            "R_cuisine": self.cuisine,
            "R_address": f"{self.name}_address",
            "R_location": self.location,
            "R_number": self.number,
            "R_price": self.price,
            "R_rating": str(self.rating),
        }

    def db_rows(self) -> list[DbRow]:
        attrs = self.attrs()
        return [DbRow(self.name, attr, attrs[attr]) for attr in DB_ATTR_ORDER]


def build_kb(seed: int = 0) -> list[Venue]:
    """Every (location, price, cuisine, rating) combination across both halves."""
    rng = random.Random(seed)
    venues = []
    for cuisines, locations in ((CUISINES_IN, LOCATIONS_IN), (CUISINES_OOV, LOCATIONS_OOV)):
        for location in locations:
            for price in PRICES:
                for cuisine in cuisines:
                    for rating in RATINGS:
                        venues.append(
                            Venue(
                                restaurant_name(location, price, cuisine, rating),
                                cuisine,
                                location,
                                price,
                                rating,
                                rng.choice(SIZES),
                            )
                        )
    return venues


def kb_file_text(venues: list[Venue]) -> str:
    lines = []
    for venue in venues:
        attrs = venue.attrs()
        for attr in DB_ATTR_ORDER:
            lines.append(f"1 {venue.name} {attr} {attrs[attr]}")
    return "\n".join(lines) + "\n"


def _slot_phrase(rng: random.Random, slot: str, value: str) -> str:
    return rng.choice(SLOT_PHRASES[slot]).format(v=value)


def _answer(rng: random.Random, slot: str, value: str) -> str:
    text = _slot_phrase(rng, slot, value)
    if rng.random() < 0.3:
        text += " please"
    return text


def generate_dialog(rng: random.Random, oov: bool = False) -> BabiDialog:
    cuisines = CUISINES_OOV if oov else CUISINES_IN
    locations = LOCATIONS_OOV if oov else LOCATIONS_IN
    goal = {
        "cuisine": rng.choice(cuisines),
        "location": rng.choice(locations),
        "party_size": rng.choice(SIZES),
        "price": rng.choice(PRICES),
    }
    dialog = BabiDialog()
    turns = dialog.turns

    turns.append(Turn(rng.choice(GREETINGS), SYS_HELLO))

    upfront = [s for s in SLOT_ORDER if rng.random() < 0.5]
    request = rng.choice(REQUESTS) + "".join(
        f" {_slot_phrase(rng, s, goal[s])}" for s in upfront
    )
    turns.append(Turn(request, SYS_ON_IT))

    missing = [s for s in SLOT_ORDER if s not in upfront]
    if missing:
        turns.append(Turn("", SYS_ASK[missing[0]]))
        for prev, nxt in zip(missing, missing[1:]):
            turns.append(Turn(_answer(rng, prev, goal[prev]), SYS_ASK[nxt]))
        turns.append(Turn(_answer(rng, missing[-1], goal[missing[-1]]), SYS_OPTIONS))
    else:
        turns.append(Turn("", SYS_OPTIONS))

    def api_call() -> str:
        return "api_call {cuisine} {location} {party_size} {price}".format(**goal)

    turns.append(Turn("", api_call()))

    if rng.random() < 0.25:
        for _ in range(rng.choice((1, 1, 2))):
            slot = rng.choice(SLOT_ORDER)
            pool = {
                "cuisine": cuisines,
                "location": locations,
                "party_size": SIZES,
                "price": PRICES,
            }[slot]
            goal[slot] = rng.choice([v for v in pool if v != goal[slot]])
            update = "instead could it be " + _slot_phrase(rng, slot, goal[slot])
            turns.append(Turn(update, SYS_UPDATE))
        turns.append(Turn("", api_call()))

    k = rng.randint(2, 4)
    ratings = sorted(rng.sample(RATINGS, k), reverse=True)
    results = [
        Venue(
            restaurant_name(goal["location"], goal["price"], goal["cuisine"], r),
            goal["cuisine"],
            goal["location"],
            goal["price"],
            r,
            rng.choice(SIZES),
        )
        for r in ratings
    ]
    rows = []
    for venue in results:
        rows.extend(venue.db_rows())
    dialog.db_blocks[len(turns)] = rows

    rejects = rng.randint(0, k - 1)
    turns.append(Turn("", SYS_OFFER.format(name=results[0].name)))
    for j in range(rejects):
        turns.append(Turn(rng.choice(REJECTIONS), SYS_ANOTHER))
        turns.append(Turn("", SYS_OFFER.format(name=results[j + 1].name)))
    accepted = results[rejects]
    turns.append(Turn(rng.choice(ACCEPTS), SYS_RESERVE))

    if rng.random() < 0.5:
        turns.append(Turn(ASK_PHONE, SYS_HERE_IT_IS.format(value=f"{accepted.name}_phone")))
    if rng.random() < 0.3:
        turns.append(Turn(ASK_ADDRESS, SYS_HERE_IT_IS.format(value=f"{accepted.name}_address")))

    turns.append(Turn(rng.choice(THANKS), SYS_ANYTHING_ELSE))
    turns.append(Turn(rng.choice(BYES), SYS_WELCOME))
    return dialog


def generate_dialogs(n: int, seed: int, oov: bool = False) -> list[BabiDialog]:
    rng = random.Random(seed)
    return [generate_dialog(rng, oov=oov) for _ in range(n)]


def generate_corpus(
    out_dir,
    n_train: int = 1000,
    n_dev: int = 500,
    n_test: int = 500,
    n_oov: int = 500,
    seed: int = 0,
) -> dict[str, Path]:
    """Write kb + train/dev/test/OOV-test transcript files; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "kb": out / "task5-gen-kb.txt",
        "train": out / "task5-gen-trn.txt",
        "dev": out / "task5-gen-dev.txt",
        "test": out / "task5-gen-tst.txt",
        "test_oov": out / "task5-gen-tst-OOV.txt",
    }
    paths["kb"].write_text(kb_file_text(build_kb(seed)), encoding="utf-8")
    splits = (
        ("train", n_train, seed + 1, False),
        ("dev", n_dev, seed + 2, False),
        ("test", n_test, seed + 3, False),
        ("test_oov", n_oov, seed + 4, True),
    )
    for name, n, split_seed, oov in splits:
        dialogs = generate_dialogs(n, split_seed, oov=oov)
        paths[name].write_text(serialize_babi_dialogs(dialogs), encoding="utf-8")
    return paths
