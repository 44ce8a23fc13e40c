"""Regenerate tests/data/ from the hand-written world below.

    python tests/make_fixture.py

Every sentence carries the triplets it states, so triplets can be bound to
the chunk that holds the sentence under FIXTURE_CHUNKING.
"""

from __future__ import annotations

import json
from pathlib import Path

from kgrag.corpus import ChunkingConfig, Document, chunk_document, make_chunk_id

FIXTURE_CHUNKING = ChunkingConfig(max_units=16)
DATA = Path(__file__).parent / "data"

WORLD: dict[str, list[tuple[str, list[tuple[str, str, str]]]]] = {
    "Alder Voss": [
        ("Alder Voss is a novelist from Kettleby.", [("Alder Voss", "from", "Kettleby")]),
        ("Voss wrote the novel The Glass Orchard.", [("Alder Voss", "wrote", "The Glass Orchard")]),
        ("He studied at Marrow University.", [("Alder Voss", "studied at", "Marrow University")]),
    ],
    "Kettleby": [
        ("Kettleby is a market town in the county of Fennshire.", [("Kettleby", "located in", "Fennshire")]),
        ("The River Quell flows through Kettleby.", [("River Quell", "flows through", "Kettleby")]),
        ("Kettleby hosts an annual lantern festival.", [("Kettleby", "hosts", "lantern festival")]),
    ],
    "River Quell": [
        ("The River Quell is 212 kilometres long.", [("River Quell", "length", "212 kilometres")]),
        ("It rises in the Dunmore Hills.", [("River Quell", "rises in", "Dunmore Hills")]),
        ("The river empties into the Sable Sea.", [("River Quell", "empties into", "Sable Sea")]),
    ],
    "The Glass Orchard": [
        ("The Glass Orchard is a 1998 novel by Alder Voss.", [("The Glass Orchard", "author", "Alder Voss")]),
        ("The novel won the Hallam Prize.", [("The Glass Orchard", "won", "Hallam Prize")]),
        ("It was adapted into a film directed by Mira Castell.", [("The Glass Orchard", "adapted by", "Mira Castell")]),
    ],
    "Mira Castell": [
        ("Mira Castell is a film director born in Port Anselm.", [("Mira Castell", "born in", "Port Anselm")]),
        ("Castell directed the film Winter Lanterns.", [("Mira Castell", "directed", "Winter Lanterns")]),
    ],
    "Port Anselm": [
        ("Port Anselm is a coastal city on the Sable Sea.", [("Port Anselm", "located on", "Sable Sea")]),
        ("Port Anselm is the capital of Fennshire.", [("Port Anselm", "capital of", "Fennshire")]),
    ],
    "Hallam Prize": [
        ("The Hallam Prize is a literary award founded in 1952.", [("Hallam Prize", "founded in", "1952")]),
        ("It is presented in Port Anselm each spring.", [("Hallam Prize", "presented in", "Port Anselm")]),
    ],
    "Marrow University": [
        ("Marrow University is a public university in Brindlemoor.", [("Marrow University", "located in", "Brindlemoor")]),
        ("Its founder was Tobias Marrow.", [("Marrow University", "founded by", "Tobias Marrow")]),
    ],
    "Brindlemoor": [
        ("Brindlemoor is a city in the Dunmore Hills.", [("Brindlemoor", "located in", "Dunmore Hills")]),
        ("Brindlemoor is known for its wool trade.", [("Brindlemoor", "known for", "wool trade")]),
    ],
    "Tobias Marrow": [
        ("Tobias Marrow was a shipping merchant.", [("Tobias Marrow", "occupation", "shipping merchant")]),
        ("Marrow was born in Kettleby in 1801.", [("Tobias Marrow", "born in", "Kettleby")]),
    ],
    "Winter Lanterns": [
        ("Winter Lanterns is a 2011 drama film.", [("Winter Lanterns", "genre", "drama film")]),
        ("The film stars Jonah Pell.", [("Winter Lanterns", "stars", "Jonah Pell")]),
        ("It was shot in Kettleby during the lantern festival.", [("Winter Lanterns", "filmed in", "Kettleby")]),
    ],
    "Jonah Pell": [
        ("Jonah Pell is an actor from Brindlemoor.", [("Jonah Pell", "from", "Brindlemoor")]),
        ("Pell also plays cello in the band The Low Tides.", [("Jonah Pell", "member of", "The Low Tides")]),
    ],
    "The Low Tides": [
        ("The Low Tides are a folk band formed in Port Anselm.", [("The Low Tides", "formed in", "Port Anselm")]),
        ("Their debut album is Saltwater Hymns.", [("The Low Tides", "debut album", "Saltwater Hymns")]),
    ],
    "Saltwater Hymns": [
        ("Saltwater Hymns is the 2006 debut album of The Low Tides.", [("Saltwater Hymns", "album by", "The Low Tides")]),
        ("It was recorded at Gull Rock Studio.", [("Saltwater Hymns", "recorded at", "Gull Rock Studio")]),
    ],
    "Gull Rock Studio": [
        ("Gull Rock Studio is a recording studio on Gull Island.", [("Gull Rock Studio", "located on", "Gull Island")]),
        ("The studio was built by Enid Farrow.", [("Gull Rock Studio", "built by", "Enid Farrow")]),
    ],
    "Enid Farrow": [
        ("Enid Farrow is a sound engineer.", [("Enid Farrow", "occupation", "sound engineer")]),
        ("Farrow studied at Marrow University.", [("Enid Farrow", "studied at", "Marrow University")]),
    ],
    "Gull Island": [
        ("Gull Island lies in the Sable Sea.", [("Gull Island", "lies in", "Sable Sea")]),
        ("The island has a population of 900.", [("Gull Island", "population", "900")]),
    ],
    "Dunmore Hills": [
        ("The Dunmore Hills are a range of low mountains in Fennshire.", [("Dunmore Hills", "located in", "Fennshire")]),
        ("The highest point is Crag Tor.", [("Dunmore Hills", "highest point", "Crag Tor")]),
    ],
    "Fennshire": [
        ("Fennshire is a county on the northern coast.", [("Fennshire", "located on", "northern coast")]),
        ("Its county town is Port Anselm.", [("Fennshire", "county town", "Port Anselm")]),
    ],
    "Sable Sea": [
        ("The Sable Sea is a shallow inland sea.", [("Sable Sea", "type", "inland sea")]),
        ("Its largest port is Port Anselm.", [("Sable Sea", "largest port", "Port Anselm")]),
    ],
    "Lantern Festival": [
        ("The lantern festival began in 1850.", []),
        ("Paper lanterns are floated on the water at dusk.", []),
    ],
}

QUESTIONS = [
    ("q1", "Which river flows through the hometown of Alder Voss?", "River Quell", [("Alder Voss", 0), ("Kettleby", 1)]),
    ("q2", "Who directed the film adaptation of the novel that won the Hallam Prize?", "Mira Castell",
     [("The Glass Orchard", 1), ("The Glass Orchard", 2)]),
    ("q3", "In which city was the director of Winter Lanterns born?", "Port Anselm", [("Mira Castell", 0), ("Mira Castell", 1)]),
    ("q4", "Where was the debut album of the band of Jonah Pell recorded?", "Gull Rock Studio",
     [("Jonah Pell", 1), ("The Low Tides", 1), ("Saltwater Hymns", 1)]),
    ("q5", "Who founded the university where Enid Farrow studied?", "Tobias Marrow", [("Enid Farrow", 1), ("Marrow University", 1)]),
    ("q6", "What sea does the river through Kettleby empty into?", "Sable Sea", [("Kettleby", 1), ("River Quell", 2)]),
]

CATEGORIES = {
    "Alder Voss": "person",
    "Mira Castell": "person",
    "Jonah Pell": "person",
    "Enid Farrow": "person",
    "Kettleby": "town",
    "Brindlemoor": "town",
    "Port Anselm": "town",
    "Fennshire": "county",
}


def contexts_for(gold_titles: list[str], offset: int) -> list[str]:
    titles = list(dict.fromkeys(gold_titles))
    pool = sorted(WORLD)
    for title in pool[offset:] + pool[:offset]:
        if len(titles) == 10:
            break
        if title not in titles:
            titles.append(title)
    return titles


def main() -> None:
    DATA.mkdir(exist_ok=True)
    records = []
    for n, (qid, question, answer, support) in enumerate(QUESTIONS):
        titles = contexts_for([t for t, _ in support], 4 * n)
        records.append({
            "_id": qid,
            "question": question,
            "answer": answer,
            "supporting_facts": [[t, i] for t, i in support],
            "context": [[t, [s for s, _ in WORLD[t]]] for t in titles],
        })
    (DATA / "world.json").write_text(json.dumps(records, indent=1) + "\n", encoding="utf-8")

    docs = [{"doc_id": t, "title": t, "text": " ".join(s for s, _ in sents)} for t, sents in WORLD.items()]
    with open(DATA / "world_docs.jsonl", "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps(d) + "\n")

    with open(DATA / "world_triplets.jsonl", "w", encoding="utf-8") as fh:
        for title, sents in WORLD.items():
            doc = Document(title, title, "", tuple(s for s, _ in sents))
            _, placement = chunk_document(doc, FIXTURE_CHUNKING)
            for (_, triplets), seq in zip(sents, placement):
                for h, r, t in triplets:
                    rec = {"head": h, "relation": r, "tail": t, "chunk_id": make_chunk_id(title, seq)}
                    fh.write(json.dumps(rec) + "\n")

    with open(DATA / "world_categories.jsonl", "w", encoding="utf-8") as fh:
        for entity, category in CATEGORIES.items():
            fh.write(json.dumps({"entity": entity, "category": category}) + "\n")


if __name__ == "__main__":
    main()
