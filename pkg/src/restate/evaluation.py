"""Corpus metrics and output audits.

BLEU is corpus-level (modified n-gram precisions with a brevity
penalty); the optional smoothing adds one to numerator and denominator
of any zero-count order, and both numbers are reported side by side.
ROUGE-L uses the longest common subsequence with beta = 1.2 weighting
recall, the usual summary form. Coverage audits replay the mention-flag
machine offline against each system output, in lexical and semantic
mode, so the numbers mean exactly what the decoder saw.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field

from . import datagen
from .flags import FIRST_PERSON, SatisfierConfig, contains_contiguous, replay_flags
from .similarity import HashedNgramEmbedder, SpanSimilarity
from .vocab import tokenize


class EmptyCorpus(ValueError):
    """Raised when scoring is asked for zero (or misaligned) pairs."""


class EmptyInput(ValueError):
    """Raised when a single-pair metric gets an empty sequence."""


class IdMismatch(ValueError):
    """Raised when outputs and gold instances disagree on ids."""


# ---------------------------------------------------------------------------
# n-gram metrics


def _ngram_counts(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses, references, max_order=4, smooth=False):
    """Corpus BLEU in [0, 100] over aligned token-list pairs."""
    if len(hypotheses) != len(references):
        raise EmptyCorpus("got %d hypotheses for %d references"
                          % (len(hypotheses), len(references)))
    if not hypotheses:
        raise EmptyCorpus("nothing to score")
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp = list(hyp)
        ref = list(ref)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            counts = _ngram_counts(hyp, n)
            if not counts:
                continue
            ref_counts = _ngram_counts(ref, n)
            totals[n - 1] += sum(counts.values())
            matches[n - 1] += sum(min(c, ref_counts[g])
                                  for g, c in counts.items())
    log_sum = 0.0
    for n in range(max_order):
        m, t = matches[n], totals[n]
        if smooth and m == 0:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            return 0.0
        log_sum += math.log(m / t)
    if hyp_len == 0:
        return 0.0
    brevity = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_sum / max_order)


def lcs_length(a, b):
    """Longest common subsequence length, iterative over one DP row."""
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l_scores(hypothesis, reference, beta=1.2):
    """LCS precision / recall / F for one pair of token lists."""
    hyp = list(hypothesis)
    ref = list(reference)
    if not hyp or not ref:
        raise EmptyInput("both sequences must be non-empty")
    l = lcs_length(hyp, ref)
    if l == 0:
        return 0.0, 0.0, 0.0
    p = l / len(hyp)
    r = l / len(ref)
    f = (1 + beta * beta) * p * r / (r + beta * beta * p)
    return p, r, f


def rouge_l(hypothesis, reference, beta=1.2):
    return rouge_l_scores(hypothesis, reference, beta)[2]


def corpus_rouge_l(hypotheses, references, beta=1.2):
    """Mean per-pair ROUGE-L F over the corpus."""
    if len(hypotheses) != len(references):
        raise EmptyCorpus("got %d hypotheses for %d references"
                          % (len(hypotheses), len(references)))
    if not hypotheses:
        raise EmptyCorpus("nothing to score")
    return sum(rouge_l(h, r, beta)
               for h, r in zip(hypotheses, references)) / len(hypotheses)


# ---------------------------------------------------------------------------
# audits


def _aligned_outputs(outputs, instances):
    if len(outputs) != len(instances):
        raise IdMismatch("got %d outputs for %d instances"
                         % (len(outputs), len(instances)))
    toks = []
    for out, inst in zip(outputs, instances):
        if out["id"] != inst.id:
            raise IdMismatch("output %r does not match instance %r"
                             % (out["id"], inst.id))
        toks.append(list(out["output_tokens"]))
    return toks


def _rate(num, den):
    return num / den if den else 0.0


def coverage_audit(outputs, instances, embedder=None, config=None):
    """Fraction of gold constraints the outputs satisfy, by flag replay.

    outputs: list of {"id", "output_tokens"} aligned with instances.
    Returns micro-averaged lexical and semantic rates, plus the same
    split per category and the per-instance satisfaction lists.
    """
    toks = _aligned_outputs(outputs, instances)
    if embedder is None:
        embedder = HashedNgramEmbedder()
    base = config if config is not None else SatisfierConfig()
    modes = {
        "lexical": (SatisfierConfig(threshold_a=base.threshold_a,
                                    threshold_b=base.threshold_b,
                                    mode="lexical"), None),
        "semantic": (SatisfierConfig(threshold_a=base.threshold_a,
                                     threshold_b=base.threshold_b,
                                     mode="semantic"),
                     SpanSimilarity(embedder)),
    }
    hits = {m: 0 for m in modes}
    total = 0
    per_cat = {}
    detail = []
    for inst, out in zip(instances, toks):
        rec = datagen.model_record(inst)
        rows = [tuple(r) for r in rec["constraint_rows"]]
        cat = per_cat.setdefault(inst.category,
                                 {"total": 0, "lexical": 0, "semantic": 0})
        total += len(rows)
        cat["total"] += len(rows)
        row_detail = {"id": inst.id}
        for mode, (cfg, scorer) in modes.items():
            m = replay_flags(rec["x_tokens"], rows, out, cfg, scorer=scorer)
            hits[mode] += m.satisfied_count()
            cat[mode] += m.satisfied_count()
            row_detail[mode] = list(m.satisfied)
        detail.append(row_detail)
    return {
        "lexical": _rate(hits["lexical"], total),
        "semantic": _rate(hits["semantic"], total),
        "n_constraints": total,
        "per_category": {
            c: {"lexical": _rate(v["lexical"], v["total"]),
                "semantic": _rate(v["semantic"], v["total"]),
                "n_constraints": v["total"]}
            for c, v in sorted(per_cat.items())},
        "per_instance": detail,
    }


def correctness_audit(outputs, instances):
    """Leading-polarity, second-person framing, and context-mention rates."""
    toks = _aligned_outputs(outputs, instances)
    agg = {"polarity": 0, "style": 0, "context": 0}
    per_cat = {}
    for inst, out in zip(instances, toks):
        cat = per_cat.setdefault(inst.category,
                                 {"n": 0, "polarity": 0, "style": 0,
                                  "context": 0})
        cat["n"] += 1
        checks = {
            "polarity": bool(out) and out[0] == inst.polarity,
            "style": not (set(out) & FIRST_PERSON),
            "context": contains_contiguous(out, tokenize(inst.context)),
        }
        for key, ok in checks.items():
            if ok:
                agg[key] += 1
                cat[key] += 1
    n = len(instances)
    return {
        "polarity": _rate(agg["polarity"], n),
        "style": _rate(agg["style"], n),
        "context": _rate(agg["context"], n),
        "n_instances": n,
        "per_category": {
            c: {k: _rate(v[k], v["n"]) for k in ("polarity", "style", "context")}
            for c, v in sorted(per_cat.items())},
    }


# ---------------------------------------------------------------------------
# report assembly


@dataclass
class EvalReport:
    """Single-system scorecard; rates in [0, 1], BLEU in [0, 100].

    bertscore stays None: it needs a pretrained masked LM, so the slot
    exists only for downstream tooling to fill in.
    """

    n_instances: int
    bleu: float
    bleu_smoothed: float
    rouge_l_f: float
    coverage_lexical: float
    coverage_semantic: float
    polarity_accuracy: float
    style_accuracy: float
    context_accuracy: float
    per_category: dict = field(default_factory=dict)
    bertscore: float | None = None

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def build_report(outputs, instances, embedder=None, config=None):
    """Score one system's outputs against gold instances."""
    toks = _aligned_outputs(outputs, instances)
    refs = [tokenize(inst.target) for inst in instances]
    cov = coverage_audit(outputs, instances, embedder=embedder, config=config)
    cor = correctness_audit(outputs, instances)
    per_category = {}
    by_cat = {}
    for i, inst in enumerate(instances):
        by_cat.setdefault(inst.category, []).append(i)
    for cat, idxs in sorted(by_cat.items()):
        h = [toks[i] for i in idxs]
        r = [refs[i] for i in idxs]
        per_category[cat] = {
            "n": len(idxs),
            "bleu": bleu(h, r),
            "bleu_smoothed": bleu(h, r, smooth=True),
            "rouge_l_f": corpus_rouge_l(h, r),
            "coverage_lexical": cov["per_category"][cat]["lexical"],
            "coverage_semantic": cov["per_category"][cat]["semantic"],
            "polarity_accuracy": cor["per_category"][cat]["polarity"],
            "style_accuracy": cor["per_category"][cat]["style"],
            "context_accuracy": cor["per_category"][cat]["context"],
        }
    return EvalReport(
        n_instances=len(instances),
        bleu=bleu(toks, refs),
        bleu_smoothed=bleu(toks, refs, smooth=True),
        rouge_l_f=corpus_rouge_l(toks, refs),
        coverage_lexical=cov["lexical"],
        coverage_semantic=cov["semantic"],
        polarity_accuracy=cor["polarity"],
        style_accuracy=cor["style"],
        context_accuracy=cor["context"],
        per_category=per_category,
    )


_COLUMNS = [
    ("bleu", "BLEU", "%7.2f"),
    ("bleu_smoothed", "BLEU+1", "%7.2f"),
    ("rouge_l_f", "ROUGE-L", "%7.3f"),
    ("coverage_lexical", "COV-LEX", "%7.3f"),
    ("coverage_semantic", "COV-SEM", "%7.3f"),
    ("polarity_accuracy", "POLARITY", "%8.3f"),
    ("style_accuracy", "STYLE", "%7.3f"),
    ("context_accuracy", "CONTEXT", "%7.3f"),
]


def text_table(reports):
    """Plain-text scoreboard: one row per system, one column per metric."""
    width = max([len("system")] + [len(name) for name in reports])
    header = ["system".ljust(width)] + [h for _, h, _ in _COLUMNS]
    lines = ["  ".join(header)]
    for name, rep in reports.items():
        row = [name.ljust(width)]
        for key, head, fmt in _COLUMNS:
            cell = fmt % getattr(rep, key)
            row.append(cell.rjust(len(head)))
        lines.append("  ".join(row))
    return "\n".join(lines) + "\n"
