#!/usr/bin/env python3
"""Writes data/fixtures/<name>.json from a description independent of the C++ code."""
import json
import pathlib
import sys

TRACKS = [
    ("t01", "Hotel California", "Eagles", 391),
    ("t02", "Bohemian Rhapsody", "Queen", 354),
    ("t03", "Imagine", "John Lennon", 183),
    ("t04", "Stairway to Heaven", "Led Zeppelin", 482),
    ("t05", "Billie Jean", "Michael Jackson", 294),
    ("t06", "Smells Like Teen Spirit", "Nirvana", 301),
    ("t07", "Yesterday", "The Beatles", 125),
    ("t08", "Wonderwall", "Oasis", 258),
    ("t09", "Take Five", "The Dave Brubeck Quartet", 324),
    ("t10", "Clair de Lune", "Claude Debussy", 300),
    ("t11", "Africa", "Toto", 295),
    ("t12", "Hallelujah", "Leonard Cohen", 279),
]

NOTES = [
    "# Weekly Notes",
    "Finish the quarterly report draft.",
    "Review pull requests from the team.",
    "Plan the offsite agenda.",
    "Book travel for the conference.",
]


def doc(id_, title, paragraphs):
    return {"id": id_, "title": title, "paragraphs": paragraphs, "font_size": 14}


def base():
    return {
        "format_version": 1,
        "player": {
            "volume": 0.5,
            "queue": ["t02", "t05", "t08", "t11", "t03"],
            "current_index": 1,
            "favorites": ["t01", "t04", "t09"],
            "history": [{"track_id": t, "timestamp": i + 1} for i, t in enumerate(["t07", "t02", "t10", "t12", "t05"])],
        },
        "library": {t[0]: {"id": t[0], "title": t[1], "artist": t[2], "duration": t[3]} for t in TRACKS},
        "editor": {"tabs": [{"id": "tab1", "document_id": "doc1"}], "active_tab": "tab1"},
        "documents": {"doc1": doc("doc1", "notes.md", list(NOTES))},
        "current_route": "home",
        "logical_clock": 5,
    }


def fixtures():
    default = base()
    empty = base()
    empty["documents"]["doc1"]["paragraphs"] = []
    three = base()
    three["documents"]["doc2"] = doc("doc2", "todo.md", ["# Todo", "Water the plants.", "Call the bank."])
    three["documents"]["doc3"] = doc("doc3", "ideas.md", ["# Ideas", "A playlist generator for rainy days."])
    three["editor"] = {
        "tabs": [{"id": f"tab{i}", "document_id": f"doc{i}"} for i in (1, 2, 3)],
        "active_tab": "tab2",
    }
    return {"default": default, "empty-editor": empty, "three-tabs": three}


if __name__ == "__main__":
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "data/fixtures")
    out.mkdir(parents=True, exist_ok=True)
    for name, value in fixtures().items():
        (out / f"{name}.json").write_text(json.dumps(value, indent=2, sort_keys=True) + "\n")
