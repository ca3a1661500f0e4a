#!/usr/bin/env python3
"""Ingest a synthetic article collection and look at what comes out.

Generates a planted corpus (four document classes, each with its own topic
words and structurally related equations), runs the full ingestion
pipeline, and prints the collection statistics plus a few artifacts:
vocabulary head, deduplicated equations, held-out items.
"""

from eqvec import ingest_corpus
from eqvec.corpus import IngestParams
from eqvec.synthetic import planted_corpus


def main() -> None:
    pc = planted_corpus(n_docs=60, seed=7)
    data = ingest_corpus(pc.documents, IngestParams(seed=11))

    s = data.stats
    print("documents\twords\tequations\tunits")
    print(f"{s['documents']}\t{s['words']}\t{s['equations']}\t{s['units']}")

    print("\nmost frequent vocabulary entries:")
    for form in data.word_vocab.forms[:8]:
        i = data.word_vocab.id_of(form)
        print(f"  {form:16s} id={i:<4d} tf={int(data.word_vocab.freqs[i])}")

    print("\ncorpus frequency stop list (dropped on top of fixed stopwords):")
    print(" ", ", ".join(data.word_vocab.stop_forms[:10]), "...")

    print("\nequations with repeated occurrences:")
    for rec in data.registry.records[:6]:
        print(f"  eq {rec.eq_id}  x{rec.occurrence_count}   {rec.latex}")

    singles = sum(1 for r in data.registry.records if r.occurrence_count == 1)
    print(f"\nsingletons: {singles} of {len(data.registry)} equations")

    item = data.heldout_valid[0]
    words = [data.word_vocab.forms[i] for cls, i in item.context if cls == "word"]
    print("\none held-out item:")
    print(f"  target    {data.word_vocab.forms[item.target]!r}")
    print(f"  context   {words} + equation {item.eq_id}")
    print(f"  negatives {item.negatives[:5]}...")


if __name__ == "__main__":
    main()
