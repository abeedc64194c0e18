"""Adam training loop for the rewriter.

Batches are padded to the longest example; the per-example flag
matrices are rebuilt offline from the gold target with replay_flags,
so teacher forcing sees exactly the flag columns a decoder would have
produced while emitting the reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import flags as flags_mod
from ..vocab import Vocabulary
from . import nn
from .transformer import ModelConfig, Seq2SeqModel, build_flag_matrix_batch


class NonFiniteLoss(FloatingPointError):
    """Raised when the training loss stops being a finite number."""


@dataclass
class TrainingConfig:
    lr: float = 3e-4
    batch_size: int = 16
    epochs: int = 20
    seed: int = 0
    label_smoothing: float = 0.0
    clip_norm: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    log_every: int = 0  # 0: log once per epoch

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size/epochs out of range")


class Adam:
    """Adam with bias correction over a named parameter dict."""

    def __init__(self, params, config: TrainingConfig):
        self.cfg = config
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        c = self.cfg
        self.t += 1
        b1t = 1.0 - c.beta1 ** self.t
        b2t = 1.0 - c.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g
            mhat = self.m[k] / b1t
            vhat = self.v[k] / b2t
            params[k] -= c.lr * mhat / (np.sqrt(vhat) + c.adam_eps)


@dataclass
class TrainingExample:
    """One teacher-forcing row: source tokens, target tokens, flag matrix.

    m has len(x_tokens) rows and len(y_tokens) + 1 columns: the leading
    initialization column plus one column per emitted token. Decoder
    position t consumes column t, so the position that predicts EOS
    reads the state reached after the final real token.
    """

    x_tokens: list
    y_tokens: list
    m: np.ndarray | None = None


def example_from_record(rec, config: flags_mod.SatisfierConfig, scorer=None):
    """Build a TrainingExample from a dataset record dict.

    Expects keys x_tokens, target_tokens, constraint_rows; the flag
    matrix is replayed against the gold target.
    """
    rows = [tuple(r) for r in rec["constraint_rows"]]
    m = flags_mod.replay_flags(rec["x_tokens"], rows, rec["target_tokens"],
                               config, scorer=scorer)
    return TrainingExample(list(rec["x_tokens"]), list(rec["target_tokens"]),
                           m.matrix())


def assemble_batch(examples, vocab: Vocabulary):
    """Pad a list of TrainingExamples into training tensors.

    Returns (src, tgt_in, tgt_out, m_batch). tgt_in = BOS + y (padded),
    tgt_out = y + EOS (padded); m_batch column t holds the flag state
    consumed at decoder position t.
    """
    b = len(examples)
    ls = max(len(e.x_tokens) for e in examples)
    ly = max(len(e.y_tokens) for e in examples) + 1  # +1 for EOS / BOS shift
    src = np.full((b, ls), vocab.pad_id, dtype=np.int64)
    tgt_in = np.full((b, ly), vocab.pad_id, dtype=np.int64)
    tgt_out = np.full((b, ly), vocab.pad_id, dtype=np.int64)
    ms = []
    for i, e in enumerate(examples):
        x = vocab.encode(list(e.x_tokens))
        y = vocab.encode(list(e.y_tokens))
        src[i, :len(x)] = x
        tgt_in[i, 0] = vocab.bos_id
        tgt_in[i, 1:len(y) + 1] = y
        tgt_out[i, :len(y)] = y
        tgt_out[i, len(y)] = vocab.eos_id
        if e.m is None:
            ms.append(None)
        else:
            m = np.asarray(e.m)
            if m.shape != (len(e.x_tokens), len(e.y_tokens) + 1):
                raise nn.ShapeMismatch(
                    "flag matrix %s does not match (%d, %d)"
                    % (m.shape, len(e.x_tokens), len(e.y_tokens) + 1))
            ms.append(m)
    if all(m is None for m in ms):
        m_batch = None
    else:
        m_batch = build_flag_matrix_batch(ms, ls, ly)
    return src, tgt_in, tgt_out, m_batch


def train(model: Seq2SeqModel, examples, config: TrainingConfig,
          log=None) -> list[tuple[int, int, float]]:
    """Run the full loop; returns [(epoch, step, loss), ...] log rows."""
    opt = Adam(model.params, config)
    rng = np.random.default_rng(config.seed)
    rows = []
    n = len(examples)
    if n == 0:
        raise ValueError("no training examples")
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        nb = 0
        for start in range(0, n, config.batch_size):
            batch = [examples[j] for j in order[start:start + config.batch_size]]
            src, tgt_in, tgt_out, m_batch = assemble_batch(batch, model.vocab)
            loss, grads = model.loss_and_grads(
                src, tgt_in, tgt_out, m_batch,
                label_smoothing=config.label_smoothing)
            if not np.isfinite(loss):
                raise NonFiniteLoss("loss became %r at epoch %d step %d"
                                    % (loss, epoch, step))
            gn = nn.global_norm(grads.values())
            if config.clip_norm > 0 and gn > config.clip_norm:
                scale = config.clip_norm / gn
                for k in grads:
                    grads[k] *= scale
            # keep flag row 0 pinned whatever the optimizer state does
            grads["flag.ek"][0] = 0.0
            grads["flag.ev"][0] = 0.0
            opt.step(model.params, grads)
            model.params["flag.ek"][0] = 0.0
            model.params["flag.ev"][0] = 0.0
            step += 1
            epoch_loss += loss
            nb += 1
            if config.log_every and step % config.log_every == 0:
                rows.append((epoch, step, loss))
                if log:
                    log("epoch %d step %d loss %.6f" % (epoch, step, loss))
        if not config.log_every:
            rows.append((epoch, step, epoch_loss / max(nb, 1)))
            if log:
                log("epoch %d step %d mean_loss %.6f"
                    % (epoch, step, epoch_loss / max(nb, 1)))
    return rows


def build_model(train_token_lists, model_config: ModelConfig) -> Seq2SeqModel:
    """Vocabulary from the training token streams, then a fresh model."""
    vocab = Vocabulary.build(train_token_lists)
    return Seq2SeqModel(model_config, vocab)
