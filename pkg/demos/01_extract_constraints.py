"""
Constraint extraction from bracketed parses
===========================================

Walk a handful of constituency trees and show which phrases become
rewrite constraints: noun phrases keep their own yield, while a noun phrase sitting under
a verb, preposition, adverb, or adjective phrase promotes the span to
the parent's full yield. Single-pronoun noun phrases contribute nothing,
which is what lets "Does it have a camera?" constrain on "have a
camera" without forcing the literal token "it" into the rewrite.
"""

from restate.treebank import extract_constraints, parse_bracketed

TREES = [
    # plain object NP under a VP: the VP's yield becomes the constraint
    "(SQ (VBZ Does) (NP (PRP it)) (VP (VB have) (NP (DT a) (NN camera))))",
    # nested NP with a PP attachment: inner NP and PP each contribute
    "(NP (NP (NNP dell) (NN monitor)) (PP (IN with) (NP (DT a) (NN stand))))",
    # pronoun subject is excluded, full verb phrase survives
    "(S (NP (PRP I)) (VP (VBP install) (NP (NN snapchat))))",
    # adjective-phrase parent promotes the inner NP to the full ADJP yield
    "(ADJP (JJ worth) (NP (DT the) (NN price)))",
]

for tree_str in TREES:
    tree = parse_bracketed(tree_str)
    print(" ".join(tree.leaves()))
    for c in extract_constraints(tree):
        print("    %-4s -> %r  (tokens %d..%d)" % (c.label, c.text,
                                                   c.start, c.end))
    print()
