"""
Scoring rewrites: overlap metrics and audits
============================================

The evaluation module scores a system's outputs against gold targets
with corpus BLEU and ROUGE-L, and audits properties that n-gram overlap
cannot see: constraint coverage (did every gold constraint make it into
the output, verbatim or by paraphrase), polarity (does the output lead
with the right yes/no), style (no first-person tokens), and context
(does the output name the product). Reports print as a one-row-per-
system scoreboard.
"""

from restate import datagen
from restate.evaluation import bleu, build_report, corpus_rouge_l, text_table
from restate.flags import SatisfierConfig
from restate.vocab import tokenize

corpus = datagen.build_corpus(seed=0, split_sizes=(1000, 100, 400))
test = datagen.split_of(corpus, "test")[:40]

targets = {i.id: tokenize(i.target) for i in test}

# a perfect system echoes the gold target
echo = [{"id": i.id, "output_tokens": targets[i.id]} for i in test]

# a lazy system answers with a bare polarity word and the product name
lazy = [{"id": i.id,
         "output_tokens": [i.polarity, ",", *i.context.split(), "."]}
        for i in test]

# a sloppy system drops every second token of the target
sloppy = [{"id": i.id, "output_tokens": targets[i.id][::2]} for i in test]

# audit with the jump gate off so paraphrase credit is a superset of
# verbatim credit; note that even echoing the gold target satisfies only
# about half the constraints verbatim (the rest are realized inflected,
# e.g. "have a camera" -> "has a camera"), which is exactly the gap the
# paraphrase-aware coverage column closes
audit = SatisfierConfig(mode="semantic", threshold_b=0.0)
reports = {
    "echo": build_report(echo, test, config=audit),
    "lazy": build_report(lazy, test, config=audit),
    "sloppy": build_report(sloppy, test, config=audit),
}
print(text_table(reports))

# the metrics are also available standalone, on plain token lists
hyps = [o["output_tokens"] for o in sloppy]
refs = [targets[i.id] for i in test]
print("sloppy BLEU    %.2f" % bleu(hyps, refs))
print("sloppy ROUGE-L %.3f" % corpus_rouge_l(hyps, refs))
