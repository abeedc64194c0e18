"""Decoding strategies: greedy, length-normalized beam, and a banked
beam search that organizes hypotheses by constraint progress.

All three drive a FlagTracker alongside the model so every generated
token updates the mention flags the next step conditions on. Scores
sum the log-probabilities of every chosen token (the stop token
included once a hypothesis finishes) and are compared after dividing
by the number of chosen tokens raised to a configurable exponent.

The beam search expands only the argmax continuation at width 1, so it
degenerates to the greedy loop; at any width it also scores the pure
argmax trajectory as a baseline candidate, which makes the greedy
result a floor for the returned normalized score.

The banked search buckets hypotheses by verbatim constraint progress:
a finished constraint counts its full token length, an in-progress one
the length of the contiguous prefix matched so far. Only hypotheses in
the full-coverage bank may stop, so every finished result contains all
constraint tokens in order; when nothing covers everything within the
budget the best partial comes back flagged unsatisfiable instead of
failing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .flags import FlagTracker, SatisfierConfig
from .model.transformer import Seq2SeqModel


@dataclass
class Hypothesis:
    ids: list
    logps: list
    tracker: FlagTracker
    pointers: list = field(default_factory=list)
    finished: bool = False

    @property
    def score(self) -> float:
        return float(sum(self.logps))

    @property
    def satisfied_count(self) -> int:
        return int(sum(bool(s) for s in self.tracker.m.satisfied))

    def normalized(self, alpha: float) -> float:
        return self.score / max(1, len(self.logps)) ** alpha


@dataclass
class DecodeResult:
    tokens: list
    token_ids: list
    score: float
    normalized_score: float
    tracker: FlagTracker
    satisfied: list
    finished: bool
    unsatisfiable: bool = False
    warnings: list = field(default_factory=list)

    @property
    def flag_matrix(self) -> np.ndarray:
        return self.tracker.matrix()


def _masked_logprobs(model, henc, hyp):
    lp = model.predict_next_from_states(henc, hyp.ids, hyp.tracker.matrix())
    lp = np.array(lp, dtype=np.float64)
    lp[model.vocab.pad_id] = -np.inf
    lp[model.vocab.bos_id] = -np.inf
    return lp


def _result_from(model, hyp, alpha, unsatisfiable=False, warnings=()):
    return DecodeResult(
        tokens=[model.vocab.tokens[i] for i in hyp.ids],
        token_ids=list(hyp.ids),
        score=hyp.score,
        normalized_score=hyp.normalized(alpha),
        tracker=hyp.tracker,
        satisfied=list(hyp.tracker.m.satisfied),
        finished=hyp.finished,
        unsatisfiable=unsatisfiable,
        warnings=list(warnings),
    )


def _new_tracker(x_tokens, constraint_rows, config, scorer):
    return FlagTracker(list(x_tokens), [tuple(r) for r in constraint_rows],
                       config, scorer=scorer)


def _clamp_budget(model, max_len):
    """Keep prefix + stop inside the decoder's positional table."""
    cfg = getattr(model, "config", None)
    if cfg is None:
        return max_len
    return max(1, min(max_len, cfg.max_len - 1))


def _greedy_hyp(model, henc, x_tokens, constraint_rows, config, scorer,
                max_len):
    """Run the argmax loop. Returns the raw hypothesis; finished means
    the stop token was the argmax within budget (its logp is counted)."""
    hyp = Hypothesis([], [], _new_tracker(x_tokens, constraint_rows,
                                          config, scorer))
    for _ in range(max_len):
        lp = _masked_logprobs(model, henc, hyp)
        nxt = int(np.argmax(lp))
        hyp.logps.append(float(lp[nxt]))
        if nxt == model.vocab.eos_id:
            hyp.finished = True
            break
        hyp.ids.append(nxt)
        hyp.tracker.step(model.vocab.tokens[nxt])
    return hyp


def _close(model, henc, hyp):
    """Finished copy of a live hypothesis with the stop logp appended."""
    lp = _masked_logprobs(model, henc, hyp)
    return Hypothesis(list(hyp.ids), hyp.logps + [float(lp[model.vocab.eos_id])],
                      hyp.tracker, list(hyp.pointers), True)


def greedy_decode(model: Seq2SeqModel, x_tokens, constraint_rows,
                  config: SatisfierConfig, scorer=None, max_len: int = 48,
                  alpha: float = 0.7) -> DecodeResult:
    """Pick the argmax token every step (ties: smallest id); stop at the
    end token or after max_len tokens."""
    max_len = _clamp_budget(model, max_len)
    henc = model.encode(list(x_tokens))
    hyp = _greedy_hyp(model, henc, x_tokens, constraint_rows, config,
                      scorer, max_len)
    return _result_from(model, hyp, alpha)


def _rank_key(item):
    hyp, sc = item
    return (-sc, tuple(hyp.ids))


def _extend(model, hyp, nxt, lp_val):
    child = Hypothesis(hyp.ids + [nxt], hyp.logps + [lp_val],
                       hyp.tracker.clone(), list(hyp.pointers))
    child.tracker.step(model.vocab.tokens[nxt])
    return child


def beam_decode(model: Seq2SeqModel, x_tokens, constraint_rows,
                config: SatisfierConfig, scorer=None, beam_size: int = 4,
                alpha: float = 0.7, max_len: int = 48) -> DecodeResult:
    """Length-normalized beam search.

    Live hypotheses are ranked by cumulative log-probability, finished
    ones by score / chosen_tokens ** alpha; ties prefer the smallest
    token id sequence. Width 1 reproduces the greedy loop exactly, and
    the greedy trajectory is always among the scored candidates.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    x_tokens = list(x_tokens)
    max_len = _clamp_budget(model, max_len)
    henc = model.encode(x_tokens)
    done = []
    seed = _greedy_hyp(model, henc, x_tokens, constraint_rows, config,
                       scorer, max_len)
    if not seed.finished:
        seed = _close(model, henc, seed)
    done.append((seed, seed.normalized(alpha)))
    if beam_size == 1:
        # the seeded argmax trajectory is the entire width-1 search
        done.sort(key=_rank_key)
        return _result_from(model, done[0][0], alpha)
    live = [Hypothesis([], [], _new_tracker(x_tokens, constraint_rows,
                                            config, scorer))]
    width = beam_size + 1  # keep slots for live paths when eos ranks high
    for _ in range(max_len):
        cands = []
        for hyp in live:
            lp = _masked_logprobs(model, henc, hyp)
            k = min(width, int(np.isfinite(lp).sum()))
            top = np.argpartition(-lp, k - 1)[:k]
            for nxt in sorted(top, key=lambda i: (-lp[i], i)):
                nxt = int(nxt)
                if nxt == model.vocab.eos_id:
                    fin = Hypothesis(list(hyp.ids),
                                     hyp.logps + [float(lp[nxt])],
                                     hyp.tracker, finished=True)
                    done.append((fin, fin.normalized(alpha)))
                else:
                    cands.append(_extend(model, hyp, nxt, float(lp[nxt])))
        ranked = sorted(((h, h.score) for h in cands), key=_rank_key)
        live = [h for h, _ in ranked[:beam_size]]
        if not live:
            break
    for hyp in live:  # budget exhausted: close survivors for final ranking
        fin = _close(model, henc, hyp)
        done.append((fin, fin.normalized(alpha)))
    done.sort(key=_rank_key)
    return _result_from(model, done[0][0], alpha)


def _constraint_tokens(x_tokens, constraint_rows):
    return [[x_tokens[i] for i in row] for row in constraint_rows]


def _bank_of(hyp, lens):
    return sum(ln if p >= ln else p for p, ln in zip(hyp.pointers, lens))


def _advance_pointers(hyp, ctoks, token):
    for ci, toks in enumerate(ctoks):
        p = hyp.pointers[ci]
        if p >= len(toks):
            continue  # lexically complete, stays complete
        if token == toks[p]:
            hyp.pointers[ci] = p + 1
        else:
            hyp.pointers[ci] = 1 if token == toks[0] else 0


def constrained_beam_decode(model: Seq2SeqModel, x_tokens, constraint_rows,
                            config: SatisfierConfig, scorer=None,
                            beam_size: int = 4, alpha: float = 0.7,
                            max_len: int = 48) -> DecodeResult:
    """Banked beam search keyed by verbatim constraint progress.

    Bank b holds hypotheses whose matched constraint tokens sum to b;
    each bank keeps its own top beam_size, every unfinished constraint's
    next needed token is always a candidate, and only the full-coverage
    bank may emit the stop token. Finished results therefore contain
    every constraint verbatim and in token order. If the budget runs
    out first, the closest partial is returned with unsatisfiable=True
    and a warning.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    x_tokens = list(x_tokens)
    constraint_rows = [tuple(r) for r in constraint_rows]
    if not constraint_rows:
        return beam_decode(model, x_tokens, constraint_rows, config,
                           scorer=scorer, beam_size=beam_size, alpha=alpha,
                           max_len=max_len)
    max_len = _clamp_budget(model, max_len)
    henc = model.encode(x_tokens)
    ctoks = _constraint_tokens(x_tokens, constraint_rows)
    lens = [len(t) for t in ctoks]
    full = sum(lens)
    root = Hypothesis([], [], _new_tracker(x_tokens, constraint_rows,
                                           config, scorer),
                      pointers=[0] * len(ctoks))
    banks = {0: [root]}
    done = []
    for _ in range(max_len):
        cands = []
        for bank_hyps in banks.values():
            for hyp in bank_hyps:
                lp = _masked_logprobs(model, henc, hyp)
                k = min(beam_size, int(np.isfinite(lp).sum()))
                top = np.argpartition(-lp, k - 1)[:k]
                wanted = {int(i) for i in top}
                for ci, toks in enumerate(ctoks):
                    p = hyp.pointers[ci]
                    if p < lens[ci]:
                        tid = model.vocab.index.get(toks[p])
                        if tid is not None:
                            wanted.add(tid)
                wanted.add(model.vocab.eos_id)
                at_full = _bank_of(hyp, lens) >= full
                for nxt in sorted(wanted):
                    if not np.isfinite(lp[nxt]):
                        continue
                    if nxt == model.vocab.eos_id:
                        if at_full:
                            fin = Hypothesis(list(hyp.ids),
                                             hyp.logps + [float(lp[nxt])],
                                             hyp.tracker,
                                             list(hyp.pointers), True)
                            done.append((fin, fin.normalized(alpha)))
                        continue
                    child = _extend(model, hyp, nxt, float(lp[nxt]))
                    _advance_pointers(child, ctoks, model.vocab.tokens[nxt])
                    cands.append(child)
        banks = {}
        for child in cands:
            banks.setdefault(_bank_of(child, lens), []).append(child)
        for b in banks:
            ranked = sorted(((h, h.score) for h in banks[b]), key=_rank_key)
            banks[b] = [h for h, _ in ranked[:beam_size]]
        if not banks:
            break
    # force-close any fully covered survivor so it can still be returned
    for hyps in banks.values():
        for hyp in hyps:
            if _bank_of(hyp, lens) >= full:
                fin = _close(model, henc, hyp)
                done.append((fin, fin.normalized(alpha)))
    if done:
        done.sort(key=_rank_key)
        return _result_from(model, done[0][0], alpha)
    # nothing reached full coverage: surface the closest partial
    pool = [h for hyps in banks.values() for h in hyps]
    if not pool:
        raise RuntimeError("search emptied without any hypothesis")
    pool.sort(key=lambda h: (-_bank_of(h, lens), -h.normalized(alpha),
                             tuple(h.ids)))
    best = pool[0]
    warn = ("constraints not satisfiable within %d steps; "
            "returning best partial (%d/%d constraint tokens)"
            % (max_len, _bank_of(best, lens), full))
    return _result_from(model, best, alpha, unsatisfiable=True,
                        warnings=[warn])


def run_decoder(name: str, model, x_tokens, constraint_rows, config,
                scorer=None, beam_size: int = 4, alpha: float = 0.7,
                max_len: int = 48) -> DecodeResult:
    """Dispatch by decoder name: 'greedy', 'beam', or 'cbs'."""
    if name == "greedy":
        return greedy_decode(model, x_tokens, constraint_rows, config,
                             scorer=scorer, max_len=max_len, alpha=alpha)
    if name == "beam":
        return beam_decode(model, x_tokens, constraint_rows, config,
                           scorer=scorer, beam_size=beam_size, alpha=alpha,
                           max_len=max_len)
    if name == "cbs":
        return constrained_beam_decode(model, x_tokens, constraint_rows,
                                       config, scorer=scorer,
                                       beam_size=beam_size, alpha=alpha,
                                       max_len=max_len)
    raise ValueError("unknown decoder %r" % name)
