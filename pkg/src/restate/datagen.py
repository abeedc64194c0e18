"""Synthetic polar-question corpus over templated product domains.

Every instance pairs a yes/no product question with a short answer and
a product-title context, plus the decontextualized statement the
rewriter should produce. Templates emit their own bracketed parses, so
gold constraints come straight from the extraction algorithm with no
parser dependency. Four answer shapes are covered: a bare explanation,
a complement clause ("also , ..."), a conditional clause ("if it is
..."), and a negative answer naming an alternative ("but ... instead").
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace

from .treebank import (Constraint, concat_pqa, constraint_token_rows,
                       extract_constraints, parse_bracketed, serialize)
from .vocab import tokenize

CATEGORIES = ("explanation", "complement", "condition", "alternative")

# closed-class tokens targets may use even when absent from the inputs
FUNCTION_WORDS = frozenset({
    ",", ".", "?", "the", "a", "an", "it", "this", "you", "yes", "no",
    "not", "is", "does", "do", "can", "has", "have", "also", "but",
    "if", "instead", "on", "in",
})

DEFAULT_SPLIT_SIZES = (1000, 100, 400)
SPLIT_NAMES = ("train", "dev", "test")


class InvalidMix(ValueError):
    """Raised for malformed category mixes or instance counts."""


@dataclass(frozen=True)
class PQAInstance:
    """One question/answer/context triple with its gold rewrite."""

    id: str
    question: str
    answer: str
    context: str
    category: str
    polarity: str
    target: str
    question_parse: str
    answer_parse: str
    constraints: tuple = ()
    domain: str = ""
    split: str = ""


DOMAINS = {
    "electronics": {
        "products": (("samsung galaxy a20", "phone"),
                     ("dell xps 13", "laptop"),
                     ("sony bravia x80", "tv"),
                     ("apple ipad mini", "tablet")),
        "features": ("bluetooth", "a camera", "a touchscreen",
                     "an hdmi port", "wireless charging",
                     "a memory card slot"),
        "things": ("snapchat", "twitter", "netflix", "zoom"),
        "verbs": ("install", "run", "download", "stream"),
        "prep": "on",
        "variants": ("pro", "plus"),
    },
    "kitchenware": {
        "products": (("ninja blast max", "blender"),
                     ("instant duo 7", "cooker"),
                     ("oxo steel pro", "kettle"),
                     ("lodge classic 10", "skillet")),
        "features": ("presets", "a timer", "a glass lid", "a steel blade",
                     "a safety lock", "a steam vent"),
        "things": ("soup", "rice", "oatmeal", "stew"),
        "verbs": ("make", "cook"),
        "prep": "in",
        "variants": ("deluxe", "compact"),
    },
    "outdoor": {
        "products": (("coleman sundome 4", "tent"),
                     ("osprey talon 22", "backpack"),
                     ("yeti tundra 45", "cooler"),
                     ("garmin etrex 32", "gps")),
        "features": ("a compass", "a drain plug", "a rain cover",
                     "a hip belt", "side pockets", "a carry handle"),
        "things": ("gear", "ice", "maps", "food"),
        "verbs": ("store", "keep", "pack"),
        "prep": "in",
        "variants": ("xl", "ultralight"),
    },
}

_DETERMINERS = frozenset({"a", "an", "the"})
_ADJECTIVES = frozenset({"wireless", "side"})
_PLURALS = frozenset({"presets", "pockets", "maps"})


# ---------------------------------------------------------------------------
# parse-fragment builders


def _tag_for(tok):
    if tok in _DETERMINERS:
        return "DT"
    if tok in _ADJECTIVES:
        return "JJ"
    if tok in _PLURALS:
        return "NNS"
    return "NN"


def _np_phrase(text):
    parts = " ".join("(%s %s)" % (_tag_for(t), t) for t in text.split())
    return "(NP %s)" % parts


def _np_product(name, kind):
    parts = " ".join("(NNP %s)" % t for t in name.split())
    return "(NP (DT the) %s (NN %s))" % (parts, kind)


def _np_this(kind):
    return "(NP (DT this) (NN %s))" % kind


_NP_IT = "(NP (PRP it))"
_NP_YOU = "(NP (PRP you))"
_COND_SBAR = ("(SBAR (IN if) (S (NP (PRP it)) (VP (VBZ is)%s "
              "(NP (DT the) (NN %s) (NN model)))))")


def _cond_sbar(variant, polarity):
    return _COND_SBAR % (" (RB not)" if polarity == "no" else "", variant)


def _vp_have(feature, polarity):
    if polarity == "yes":
        return "(VP (VBZ has) %s)" % _np_phrase(feature)
    return "(VP (VBZ does) (RB not) (VB have) %s)" % _np_phrase(feature)


def _vp_can(verb, thing, prep, polarity):
    inner = "(VP (VB %s) %s (PP (IN %s) %s))" % (
        verb, _np_phrase(thing), prep, _NP_IT)
    if polarity == "yes":
        return "(VP (MD can) %s)" % inner
    return "(VP (MD can) (RB not) %s)" % inner


def _sentence(lead, subject, vp, tail=""):
    return "(S %s %s %s%s (. .))" % (lead, subject, vp, tail)


_LEAD_YES = "(INTJ (UH yes)) (, ,)"
_LEAD_NO = "(INTJ (UH no)) (, ,)"
_LEAD_ALSO = "(ADVP (RB also)) (, ,)"
_LEAD_BUT = "(CC but)"
_TAIL_INSTEAD = " (ADVP (RB instead))"


# ---------------------------------------------------------------------------
# instance assembly


def _question(family, qstyle, product, feature, verb, thing, prep):
    """Build (parse, declared constraint texts) for the question."""
    name, kind = product
    if family == "have":
        subject = {"name": _np_product(name, kind),
                   "this": _np_this(kind),
                   "it": _NP_IT}[qstyle]
        parse = "(SBARQ (VBZ does) %s (VP (VB have) %s) (. ?))" % (
            subject, _np_phrase(feature))
        return parse, [("VP", "have " + feature)]
    obj = _np_this(kind) if qstyle == "this" else _NP_IT
    parse = ("(SBARQ (MD can) %s (VP (VB %s) %s (PP (IN %s) %s))"
             " (. ?))") % (_NP_YOU, verb, _np_phrase(thing), prep, obj)
    core = "%s %s %s" % (verb, thing, prep)
    if qstyle == "this":
        return parse, [("VP", "%s this %s" % (core, kind)),
                       ("PP", "%s this %s" % (prep, kind))]
    return parse, [("VP", core + " it")]


def _answer(family, category, polarity, feature, feature2, verb, verb2,
            thing, thing2, prep, variant):
    """Build (parse, declared constraint texts) for the answer."""
    lead = _LEAD_YES if polarity == "yes" else _LEAD_NO
    if family == "have":
        first_vp = _vp_have(feature, polarity)
        first_text = ("has " + feature if polarity == "yes"
                      else "does not have " + feature)
        subject = _NP_IT
        second_map = {
            "complement": (_LEAD_ALSO, _vp_have(feature2, polarity), "",
                           "has " + feature2 if polarity == "yes"
                           else "does not have " + feature2),
            "alternative": (_LEAD_BUT, _vp_have(feature2, "yes"),
                            _TAIL_INSTEAD, "has " + feature2),
        }
    else:
        first_vp = _vp_can(verb, thing, prep, polarity)
        first_text = "%s %s %s it" % (verb, thing, prep)
        subject = _NP_YOU
        second_map = {
            "complement": (_LEAD_ALSO, _vp_can(verb2, thing2, prep, polarity),
                           "", "%s %s %s it" % (verb2, thing2, prep)),
            "alternative": (_LEAD_BUT, _vp_can(verb, thing2, prep, "yes"),
                            _TAIL_INSTEAD, "%s %s %s it" % (verb, thing2, prep)),
        }
    if category == "explanation":
        return _sentence(lead, subject, first_vp), [("VP", first_text)]
    if category == "condition":
        tail = " " + _cond_sbar(variant, polarity)
        cond_text = ("is the %s model" % variant if polarity == "yes"
                     else "is not the %s model" % variant)
        return (_sentence(lead, subject, first_vp, tail),
                [("VP", first_text), ("VP", cond_text)])
    lead2, vp2, tail2, text2 = second_map[category]
    parse = "(S %s %s)" % (_sentence(lead, subject, first_vp),
                           _sentence(lead2, subject, vp2, tail2))
    return parse, [("VP", first_text), ("VP", text2)]


def _target(family, category, polarity, product, feature, feature2,
            verb, verb2, thing, thing2, prep, variant):
    name, kind = product
    full = "the %s %s" % (name, kind)
    lead = "Yes," if polarity == "yes" else "No,"
    if family == "have":
        first = ("%s has %s" % (full, feature) if polarity == "yes"
                 else "%s does not have %s" % (full, feature))
        second = {
            "complement": ("it has %s" % feature2 if polarity == "yes"
                           else "it does not have %s" % feature2),
            "alternative": "it has %s instead" % feature2,
        }
    else:
        core = ("you can %s %s %s" if polarity == "yes"
                else "you can not %s %s %s")
        first = (core % (verb, thing, prep)) + " " + full
        second = {
            "complement": (("you can %s %s %s it" if polarity == "yes"
                            else "you can not %s %s %s it")
                           % (verb2, thing2, prep)),
            "alternative": "you can %s %s %s it instead" % (verb, thing2, prep),
        }
    if category == "explanation":
        return "%s %s ." % (lead, first)
    if category == "condition":
        cond = ("if it is the %s model" if polarity == "yes"
                else "if it is not the %s model") % variant
        return "%s %s %s ." % (lead, first, cond)
    joiner = "Also ," if category == "complement" else "But"
    return "%s %s . %s %s ." % (lead, first, joiner, second[category])


def make_instance(iid, category, polarity, domain, product, family, qstyle,
                  feature, feature2, verb, verb2, thing, thing2, variant):
    """Deterministic instance kernel; generate() samples the arguments."""
    if category not in CATEGORIES:
        raise InvalidMix("unknown category %r" % category)
    prep = DOMAINS[domain]["prep"]
    q_parse, q_decl = _question(family, qstyle, product, feature, verb,
                                thing, prep)
    a_parse, a_decl = _answer(family, category, polarity, feature, feature2,
                              verb, verb2, thing, thing2, prep, variant)
    target = _target(family, category, polarity, product, feature, feature2,
                     verb, verb2, thing, thing2, prep, variant)
    q_tree = parse_bracketed(q_parse)
    a_tree = parse_bracketed(a_parse)
    constraints = tuple(extract_constraints(q_tree, a_tree))
    declared = ([("question",) + d for d in q_decl]
                + [("answer",) + d for d in a_decl])
    got = [(c.source, c.label, c.text) for c in constraints]
    if got != declared:
        raise AssertionError("template constraints drifted: %r vs %r"
                             % (got, declared))
    return PQAInstance(
        id=iid,
        question=" ".join(q_tree.leaves()),
        answer=" ".join(a_tree.leaves()),
        context="%s %s" % product,
        category=category,
        polarity=polarity,
        target=target,
        question_parse=q_parse,
        answer_parse=a_parse,
        constraints=constraints,
        domain=domain,
    )


def _sample_instance(iid, category, rng):
    domain = rng.choice(sorted(DOMAINS))
    inv = DOMAINS[domain]
    product = rng.choice(inv["products"])
    family = rng.choice(("have", "verb"))
    qstyle = rng.choice(("name", "this", "it") if family == "have"
                        else ("this", "it"))
    polarity = "no" if category == "alternative" else rng.choice(("yes", "no"))
    feature, feature2 = rng.sample(inv["features"], 2)
    thing, thing2 = rng.sample(inv["things"], 2)
    verb = rng.choice(inv["verbs"])
    verb2 = rng.choice(inv["verbs"])
    variant = rng.choice(inv["variants"])
    return make_instance(iid, category, polarity, domain, product, family,
                         qstyle, feature, feature2, verb, verb2, thing,
                         thing2, variant)


def _quotas(mix, n):
    """Largest-remainder apportionment of n over the category mix."""
    shares = [(cat, mix.get(cat, 0.0) * n) for cat in CATEGORIES]
    base = {cat: int(s) for cat, s in shares}
    left = n - sum(base.values())
    by_frac = sorted(shares, key=lambda cs: (-(cs[1] - int(cs[1])),
                                             CATEGORIES.index(cs[0])))
    for cat, _ in by_frac[:left]:
        base[cat] += 1
    return base


def _check_mix(mix, n):
    if n < 1:
        raise InvalidMix("need at least one instance, got %d" % n)
    for cat, p in mix.items():
        if cat not in CATEGORIES:
            raise InvalidMix("unknown category %r" % cat)
        if p < 0:
            raise InvalidMix("negative share for %r" % cat)
    total = sum(mix.values())
    if abs(total - 1.0) > 1e-6:
        raise InvalidMix("mix sums to %g, expected 1" % total)


def generate(seed, n, category_mix=None):
    """Produce n instances with category frequencies matching the mix.

    Counts are apportioned exactly (largest remainder), instances are
    shuffled, and all sampling flows from the one seed, so the same
    call always returns the same corpus.
    """
    if category_mix is None:
        category_mix = {cat: 1.0 / len(CATEGORIES) for cat in CATEGORIES}
    _check_mix(category_mix, n)
    quotas = _quotas(category_mix, n)
    slots = [cat for cat in CATEGORIES for _ in range(quotas[cat])]
    rng = random.Random(seed)
    rng.shuffle(slots)
    return [_sample_instance("pqa-%05d" % i, cat, rng)
            for i, cat in enumerate(slots)]


def gold_constraints(instance):
    """Re-extract the constraint list from the instance's stored parses."""
    q_tree = parse_bracketed(instance.question_parse)
    a_tree = parse_bracketed(instance.answer_parse)
    return extract_constraints(q_tree, a_tree)


# ---------------------------------------------------------------------------
# first-person style variants


_SUBJECT_SWAP = {"it": "mine", "you": "i"}


def _sentence_nodes(root):
    kids = [c for c in root.children if not c.is_leaf() and c.label == "S"]
    return kids if kids else [root]


def _swap_tokens(node, pos_map):
    if node.is_leaf():
        new = pos_map.get(node.start)
        return replace(node, token=new) if new else node
    return replace(node, children=tuple(_swap_tokens(c, pos_map)
                                        for c in node.children))


def first_person_variants(instance, rate, rng=None):
    """Rewrite the answer's sentence subjects into first person.

    With probability rate the answer's subject pronouns become
    first-person ("it has ..." -> "mine has ...", "you can ..." ->
    "i can ..."), while the target keeps its second-person framing.
    The answer parse and gold constraints are rebuilt to match.
    """
    if not (0.0 <= rate <= 1.0):
        raise ValueError("rate must lie in [0, 1]")
    if rng is None:
        rng = random.Random("fp:" + instance.id)
    if rng.random() >= rate:
        return instance
    tree = parse_bracketed(instance.answer_parse)
    swaps = {}
    for sent in _sentence_nodes(tree):
        for child in sent.children:
            if child.is_leaf() or child.label != "NP":
                continue
            leaf_nodes = child.leaf_nodes()
            if len(leaf_nodes) == 1 and leaf_nodes[0].label == "PRP":
                new = _SUBJECT_SWAP.get(leaf_nodes[0].token)
                if new:
                    swaps[leaf_nodes[0].start] = new
            break  # only the first NP of each sentence is its subject
    if not swaps:
        return instance
    new_tree = _swap_tokens(tree, swaps)
    new_parse = serialize(new_tree)
    q_tree = parse_bracketed(instance.question_parse)
    constraints = tuple(extract_constraints(q_tree, new_tree))
    return replace(instance,
                   answer=" ".join(new_tree.leaves()),
                   answer_parse=new_parse,
                   constraints=constraints)


# ---------------------------------------------------------------------------
# corpus assembly and serialization


def build_corpus(seed, split_sizes=DEFAULT_SPLIT_SIZES, category_mix=None,
                 first_person_rate=0.3):
    """Generate a full train/dev/test corpus from one root seed."""
    if len(split_sizes) != len(SPLIT_NAMES):
        raise InvalidMix("expected %d split sizes" % len(SPLIT_NAMES))
    n = sum(split_sizes)
    instances = generate(seed, n, category_mix)
    style_rng = random.Random("%s:style" % seed)
    out = []
    cursor = 0
    bounds = []
    for name, size in zip(SPLIT_NAMES, split_sizes):
        bounds.append((cursor, cursor + size, name))
        cursor += size
    for i, inst in enumerate(instances):
        inst = first_person_variants(inst, first_person_rate, style_rng)
        for lo, hi, name in bounds:
            if lo <= i < hi:
                inst = replace(inst, split=name)
                break
        out.append(inst)
    return out


def _constraint_to_json(c):
    return {"tokens": list(c.tokens), "start": c.start, "end": c.end,
            "label": c.label, "source": c.source}


def _constraint_from_json(d):
    return Constraint(tokens=tuple(d["tokens"]), start=d["start"],
                      end=d["end"], label=d["label"], source=d["source"])


def instance_to_json(inst):
    return {
        "id": inst.id,
        "question": inst.question,
        "answer": inst.answer,
        "context": inst.context,
        "category": inst.category,
        "polarity": inst.polarity,
        "target": inst.target,
        "question_parse": inst.question_parse,
        "answer_parse": inst.answer_parse,
        "constraints": [_constraint_to_json(c) for c in inst.constraints],
        "domain": inst.domain,
        "split": inst.split,
    }


def instance_from_json(d):
    return PQAInstance(
        id=d["id"], question=d["question"], answer=d["answer"],
        context=d["context"], category=d["category"], polarity=d["polarity"],
        target=d["target"], question_parse=d["question_parse"],
        answer_parse=d["answer_parse"],
        constraints=tuple(_constraint_from_json(c) for c in d["constraints"]),
        domain=d["domain"], split=d.get("split", ""))


def write_corpus(instances, path):
    with open(path, "w") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_json(inst)) + "\n")


def read_corpus(path):
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(instance_from_json(json.loads(line)))
    return out


def split_of(instances, name):
    return [inst for inst in instances if inst.split == name]


def model_record(inst):
    """Flatten an instance into the dict the training loop consumes."""
    x_tokens, layout = concat_pqa(tokenize(inst.question),
                                  tokenize(inst.answer),
                                  tokenize(inst.context))
    rows = constraint_token_rows(list(inst.constraints), layout)
    return {
        "id": inst.id,
        "x_tokens": x_tokens,
        "target_tokens": tokenize(inst.target),
        "constraint_rows": [list(r) for r in rows],
        "constraint_texts": [c.text for c in inst.constraints],
    }


def vocabulary_tokens():
    """Every token the template grammar can emit, plus function words.

    Gives a closed, draw-independent vocabulary so models never meet an
    unknown token regardless of which instances a seed happens to pick.
    """
    pool = set(FUNCTION_WORDS)
    pool.update(_SUBJECT_SWAP.values())
    pool.update(["yes", "no", "model", "mine"])
    for inv in DOMAINS.values():
        pool.add(inv["prep"])
        for name, kind in inv["products"]:
            pool.update(name.split())
            pool.add(kind)
        for group in ("features", "things", "verbs", "variants"):
            for phrase in inv[group]:
                pool.update(phrase.split())
    return sorted(pool)
