#!/usr/bin/env python3
"""Writes the small planted-word training files under data/toy/."""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data" / "toy"
FILLER = "people say many things about this issue every day in town".split()
TOPICS = ["MUSLIMS", "MIGRANTS", "WOMEN", "JEWS", "LGBT+", "POC"]


def filler(rng, n=4):
    return " ".join(rng.choice(FILLER) for _ in range(n))


def write(name, rows):
    with open(OUT / name, "w") as f:
        for r in rows:
            f.write(json.dumps(r) + "\n")


def values(rng, n):
    cues = {"Self-direction: thought": "imagine", "Security: personal": "safe"}
    rows = []
    for _ in range(n):
        labels = [l for l in cues if rng.random() < 0.5] or [rng.choice(list(cues))]
        words = filler(rng).split() + [cues[l] for l in labels]
        rng.shuffle(words)
        rows.append({"text": " ".join(words), "l2_labels": labels})
    return rows


def argtype(rng, n):
    cues = {"facts": "statistics", "humor": "joke", "question": "why", "positive": "wonderful"}
    rows = []
    for _ in range(n):
        label = rng.choice(list(cues))
        rows.append({"hate": "they are a problem " + filler(rng, 2),
                     "counter": filler(rng) + " " + cues[label],
                     "labels": [label], "topic": rng.choice(TOPICS)})
    return rows


def single_label(rng, n, cues):
    rows = []
    for _ in range(n):
        label = rng.choice(list(cues))
        rows.append({"text": filler(rng) + " " + cues[label], "label": label})
    return rows


def dialogues(rng, n):
    openers = ["they take our jobs", "they are dangerous", "they do not belong here", "they ruin everything"]
    replies = ["that is not true , most of them work hard", "numbers show crime is not higher",
               "everyone deserves respect and safety", "why blame a whole group for one person ?"]
    rows = []
    for i in range(n):
        turns = [{"hate": rng.choice(openers) + " " + filler(rng, 2), "counter": rng.choice(replies)}
                 for _ in range(rng.randint(1, 2))]
        rows.append({"dialogue_id": "gen-%03d" % i, "topic": rng.choice(TOPICS), "turns": turns})
    return rows


def main():
    rng = random.Random(7)
    write("values_train.jsonl", values(rng, 120))
    write("values_val.jsonl", values(rng, 30))
    write("argtype_train.jsonl", argtype(rng, 120))
    write("argtype_val.jsonl", argtype(rng, 30))
    big5 = {"openness": "novel", "agreeableness": "kind", "neuroticism": "worried"}
    write("big5_train.jsonl", single_label(rng, 90, big5))
    write("big5_val.jsonl", single_label(rng, 30, big5))
    write("generation_dialogues.jsonl", dialogues(rng, 60))


if __name__ == "__main__":
    main()
