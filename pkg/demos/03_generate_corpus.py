"""
Synthetic question-answer corpus generation
===========================================

The generator produces (question, answer, context) triples with gold
parses, gold constraints, and a gold standalone statement, split into
train/dev/test. Four answer shapes are covered: a direct explanation,
a complement ("Also, ..."), a condition ("... if ..."), and an
alternative ("But ... instead"). Everything is deterministic under the
seed, and the target vocabulary is closed over the inputs plus a fixed
function-word list, which is what makes desk-scale training feasible.
"""

from collections import Counter

from restate import datagen

corpus = datagen.build_corpus(seed=0, split_sizes=(1000, 100, 400))
train = datagen.split_of(corpus, "train")
print("train size:", len(train))
print("category counts:", dict(Counter(i.category for i in train)))
print()

# one sample per category, with its gold constraints
seen = set()
for inst in train:
    if inst.category in seen:
        continue
    seen.add(inst.category)
    print("[%s / %s]  (domain: %s)" % (inst.category, inst.polarity,
                                       inst.domain))
    print("  Q:", inst.question)
    print("  A:", inst.answer)
    print("  context:", inst.context)
    print("  target:", inst.target)
    print("  constraints:", [c.text for c in datagen.gold_constraints(inst)])
    print()
    if len(seen) == 4:
        break

# the closed-vocabulary property: every model-side target token is in the
# fixed pool the grammar can emit (display strings keep capitalization,
# the tokenizer normalizes it away)
pool = datagen.vocabulary_tokens()
missing = set()
for inst in corpus:
    rec = datagen.model_record(inst)
    missing.update(t for t in rec["target_tokens"] if t not in pool)
print("target tokens outside the closed vocabulary:", sorted(missing) or "none")
