"""Loss functions over blocks of (source, candidates) examples.

Inputs follow one layout: ``u_vecs`` is (B, d) with one source vector per
example and ``cand_vecs`` is (B, m, d) where column 0 holds the observed
target and columns 1..m-1 hold sampled negatives. Losses and gradients
come back per example so the trainer can scatter them onto shared rows.

A candidate that coincides with its source contributes a constant score
term; its gradient rows are zero for the ball kind (where the distance is
not differentiable) and cancel on scatter for the flat kinds.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import TRANSLATIONAL, score_between, score_pair_grads

RANKING = "ranking"
FERMI_DIRAC = "fermi_dirac"
OBJECTIVE_KINDS = (RANKING, FERMI_DIRAC)

DEFAULT_RADIUS = 2.0
DEFAULT_TEMPERATURE = 0.1


@dataclass
class ObjectiveGrads:
    """Per-example losses and gradients for one block."""

    loss: np.ndarray
    grad_source: np.ndarray
    grad_candidates: np.ndarray
    grad_translation: np.ndarray | None = None

    @property
    def total_loss(self):
        return float(self.loss.sum())


def _validate_block(u_vecs, cand_vecs):
    u_vecs = np.asarray(u_vecs, dtype=np.float64)
    cand_vecs = np.asarray(cand_vecs, dtype=np.float64)
    if u_vecs.ndim != 2 or cand_vecs.ndim != 3:
        raise ValueError("expected u_vecs (B, d) and cand_vecs (B, m, d)")
    if cand_vecs.shape[0] != u_vecs.shape[0] or cand_vecs.shape[2] != u_vecs.shape[1]:
        raise ValueError("u_vecs and cand_vecs disagree on B or d")
    if cand_vecs.shape[1] < 1:
        raise ValueError("need at least the positive candidate")
    return u_vecs, cand_vecs


def _contract(kind, u_vecs, cand_vecs, translation, coeff):
    """Chain-rule contraction of d(loss)/d(score) onto the score gradients."""
    u_b = u_vecs[:, None, :]
    du, dcand, ok = score_pair_grads(kind, u_b, cand_vecs, translation)
    coeff = np.where(ok, coeff, 0.0)
    grad_source = np.einsum("bm,bmd->bd", coeff, du)
    grad_candidates = coeff[..., None] * dcand
    grad_translation = None
    if kind == TRANSLATIONAL:
        # The offset enters every pair the same way as the source vector.
        grad_translation = np.einsum("bm,bmd->d", coeff, du)
    return grad_source, grad_candidates, grad_translation


def ranking_loss_and_grads(kind, u_vecs, cand_vecs, translation=None):
    """Negative log-likelihood of the positive under a softmax over
    negated scores:

        L = s_0 + log sum_i exp(-s_i)

    The coefficient on each score is delta_{i0} - softmax(-s)_i, so with a
    single candidate the loss and all gradients are exactly zero.
    """
    u_vecs, cand_vecs = _validate_block(u_vecs, cand_vecs)
    scores = score_between(kind, u_vecs[:, None, :], cand_vecs, translation)
    neg = -scores
    shift = neg.max(axis=1, keepdims=True)
    lse = shift[:, 0] + np.log(np.exp(neg - shift).sum(axis=1))
    loss = scores[:, 0] + lse
    softmax = np.exp(neg - lse[:, None])
    coeff = -softmax
    coeff[:, 0] += 1.0
    return ObjectiveGrads(loss, *_contract(kind, u_vecs, cand_vecs, translation, coeff))


def link_probability(score, radius, temperature):
    """Probability that a pair at the given score is linked:

        P(s) = 1 / (exp((s - radius) / temperature) + 1)

    Computed through logaddexp so extreme scores saturate cleanly.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    z = (np.asarray(score, dtype=np.float64) - radius) / temperature
    return np.exp(-np.logaddexp(0.0, z))


def fermi_dirac_loss_and_grads(
    kind, u_vecs, cand_vecs, translation=None,
    radius=DEFAULT_RADIUS, temperature=DEFAULT_TEMPERATURE,
):
    """Binary cross-entropy under :func:`link_probability`.

    The positive candidate is scored as a link, the rest as non-links:

        L = -log P(s_0) - sum_{i>0} log(1 - P(s_i))

    d(loss)/d(score) is (1 - P(s_0)) / temperature on the positive and
    -P(s_i) / temperature on each negative.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    u_vecs, cand_vecs = _validate_block(u_vecs, cand_vecs)
    scores = score_between(kind, u_vecs[:, None, :], cand_vecs, translation)
    z = (scores - radius) / temperature
    log_p = -np.logaddexp(0.0, z)
    log_1mp = -np.logaddexp(0.0, -z)
    loss = -log_p[:, 0] - log_1mp[:, 1:].sum(axis=1)
    coeff = -np.exp(log_p) / temperature
    coeff[:, 0] = np.exp(log_1mp[:, 0]) / temperature
    return ObjectiveGrads(loss, *_contract(kind, u_vecs, cand_vecs, translation, coeff))


def objective_loss_and_grads(
    objective, kind, u_vecs, cand_vecs, translation=None,
    radius=DEFAULT_RADIUS, temperature=DEFAULT_TEMPERATURE,
):
    """Dispatch on the objective name."""
    if objective == RANKING:
        return ranking_loss_and_grads(kind, u_vecs, cand_vecs, translation)
    if objective == FERMI_DIRAC:
        return fermi_dirac_loss_and_grads(
            kind, u_vecs, cand_vecs, translation,
            radius=radius, temperature=temperature,
        )
    raise ValueError(f"unknown objective: {objective!r}")
