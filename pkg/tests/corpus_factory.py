"""Deterministic synthetic restaurant corpus used by CLI and acceptance
tests: 8 fields, 12 field combinations, patterned reference texts."""

from __future__ import annotations

import json
import random

NAMES = [
    "Aromi", "Zizzi", "Cotto", "Strada", "Fitzbillies",
    "Giraffe", "Wildwood", "Cocum", "Clowns", "Bibimbap",
]
EAT_TYPES = ["restaurant", "pub", "coffee shop"]
FOODS = ["Chinese", "Indian", "Italian", "Japanese", "French", "Fast food"]
AREAS = ["riverside", "city centre"]
PRICES = ["cheap", "moderate", "expensive"]
RATINGS = ["low", "average", "high"]
FAMILY = ["yes", "no"]

# 12 field combinations over the 8 fields (name/eatType/food always present).
COMBOS = [
    ("name", "eatType", "food"),
    ("name", "eatType", "food", "area"),
    ("name", "eatType", "food", "near"),
    ("name", "eatType", "food", "priceRange"),
    ("name", "eatType", "food", "customer_rating"),
    ("name", "eatType", "food", "familyFriendly"),
    ("name", "eatType", "food", "area", "near"),
    ("name", "eatType", "food", "area", "priceRange"),
    ("name", "eatType", "food", "near", "customer_rating"),
    ("name", "eatType", "food", "priceRange", "familyFriendly"),
    ("name", "eatType", "food", "area", "customer_rating", "familyFriendly"),
    ("name", "eatType", "food", "area", "near", "priceRange", "customer_rating", "familyFriendly"),
]

AUGMENTATION = {
    "constant": {"article": ["a", "an"]},
    "replacements": {
        "familyFriendly": {
            "yes": ["family friendly"],
            "no": ["not family friendly"],
        }
    },
}


def article_for(word: str) -> str:
    return "an" if word[0].lower() in "aeiou" else "a"


def render_text(values: dict[str, str]) -> str:
    """One reference text; deterministic function of the values."""
    art = article_for(values["food"])
    parts = [f"{values['name']} is {art} {values['food']} {values['eatType']}"]
    if "area" in values:
        parts.append(f"in the {values['area']}")
    if "near" in values:
        parts.append(f"near {values['near']}")
    sentence2 = []
    if "priceRange" in values:
        sentence2.append(f"prices are {values['priceRange']}")
    if "customer_rating" in values:
        sentence2.append(f"it has a {values['customer_rating']} customer rating")
    if "familyFriendly" in values:
        fam = "family friendly" if values["familyFriendly"] == "yes" else "not family friendly"
        sentence2.append(f"it is {fam}")
    text = " ".join(parts) + " ."
    if sentence2:
        text += " " + " and ".join(sentence2) + " ."
    return text


def build_records(n_examples: int = 200, seed: int = 7) -> list[dict]:
    rng = random.Random(seed)
    rows = []
    for i in range(n_examples):
        combo = COMBOS[i % len(COMBOS)]
        name = rng.choice(NAMES)
        values = {
            "name": name,
            "eatType": rng.choice(EAT_TYPES),
            "food": rng.choice(FOODS),
        }
        if "area" in combo:
            values["area"] = rng.choice(AREAS)
        if "near" in combo:
            values["near"] = rng.choice([x for x in NAMES if x != name])
        if "priceRange" in combo:
            values["priceRange"] = rng.choice(PRICES)
        if "customer_rating" in combo:
            values["customer_rating"] = rng.choice(RATINGS)
        if "familyFriendly" in combo:
            values["familyFriendly"] = rng.choice(FAMILY)
        rows.append(
            {
                "id": f"ex{i:04d}",
                "data": {f: [values[f]] for f in combo},
                "text": render_text(values),
            }
        )
    return rows


def write_corpus_file(path: str, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def synthetic_phrase_table() -> dict:
    """Phrase table for the synthetic corpus. Only closed-class fields get
    entries (as in restaurant-domain practice); open-class fields match
    through the implicit raw-value phrasing during recall checks."""
    return {
        "food": {"Fast food": ["Fast food", "fast food"]},
        "priceRange": {
            "cheap": ["prices are cheap", "cheap"],
            "moderate": ["prices are moderate", "moderate"],
            "expensive": ["prices are expensive", "expensive"],
        },
        "customer_rating": {
            "low": ["low customer rating", "one star"],
            "average": ["average customer rating", "three star"],
            "high": ["high customer rating", "five star"],
        },
        "familyFriendly": {
            "family friendly": ["is family friendly"],
            "not family friendly": ["is not family friendly"],
        },
    }


OOD_AREAS = ["Times Square", "Central Park", "Union Station"]
OOD_FOODS = ["Thai", "Russian", "German"]
OOD_NAMES = ["McDonald's", "Subway", "Starbucks", "KFC"]


def build_ood_inputs() -> list[dict]:
    """54 novel-entity inputs over the seen (area, eatType, food, name, near)
    field combination, drawn from the 3 x 3 x 4 x 3 novel-entity grid."""
    rows = []
    i = 0
    for area in OOD_AREAS:
        for food in OOD_FOODS:
            for name in OOD_NAMES:
                for near in OOD_NAMES:
                    if near == name:
                        continue
                    if i % 2 == 0:  # every other grid point -> 54 of 108
                        rows.append(
                            {
                                "id": f"ood{len(rows):03d}",
                                "data": {
                                    "name": [name],
                                    "eatType": [EAT_TYPES[i % 3]],
                                    "food": [food],
                                    "area": [area],
                                    "near": [near],
                                },
                            }
                        )
                    i += 1
    assert len(rows) == 54
    return rows


def novel_entity_strings() -> set[str]:
    return set(OOD_AREAS) | set(OOD_FOODS) | set(OOD_NAMES)
