"""Detection training objective with closed-form gradients.

The loss sums, over bands, a normalized binary cross-entropy over anchor
scores plus a balance-weighted, normalized smooth-L1 over box offsets that
only ground-truth-positive anchors contribute to:

    sum_b [ (1/N_cls) sum_i BCE(p_i, p*_i)
            + balance * (1/N_reg) sum_i p*_i * smooth_l1(t_i - t*_i) ]

Everything here is float64 NumPy with hand-derived gradients so the result
can be checked against finite differences; the torch training path mirrors
these formulas and is tested for agreement with this implementation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_BALANCE = 10.0
_PROB_EPS = 1e-12


@dataclass
class BandDetectionBatch:
    """One band's anchor scores and offsets with their targets.

    Rows align across the four arrays. Label -1 marks an ignored anchor:
    such rows are dropped from every term before anything is computed.
    ``n_cls``/``n_reg`` override the normalizers when the retained rows
    stand in for a larger population.
    """

    cls_probs: np.ndarray
    cls_labels: np.ndarray
    reg_preds: np.ndarray
    reg_targets: np.ndarray
    n_cls: int | None = None
    n_reg: int | None = None

    def __post_init__(self) -> None:
        self.cls_probs = np.asarray(self.cls_probs, dtype=np.float64).reshape(-1)
        self.cls_labels = np.asarray(self.cls_labels, dtype=np.float64).reshape(-1)
        self.reg_preds = np.asarray(self.reg_preds, dtype=np.float64).reshape(-1, 4)
        self.reg_targets = np.asarray(self.reg_targets, dtype=np.float64).reshape(-1, 4)
        n = len(self.cls_probs)
        if len(self.cls_labels) != n or len(self.reg_preds) != n or len(self.reg_targets) != n:
            raise ValueError("batch arrays must have matching row counts")
        used = self.cls_labels != -1.0
        if not used.all():
            self.cls_probs = self.cls_probs[used]
            self.cls_labels = self.cls_labels[used]
            self.reg_preds = self.reg_preds[used]
            self.reg_targets = self.reg_targets[used]
        if len(self.cls_probs) == 0:
            raise ValueError("a band batch needs at least one non-ignored anchor")
        if np.any(self.cls_labels < 0) or np.any(self.cls_labels > 1):
            raise ValueError("anchor labels must be -1 (ignore) or lie in [0, 1]")
        if np.any(self.cls_probs < 0) or np.any(self.cls_probs > 1):
            raise ValueError("predicted probabilities must lie in [0, 1]")
        if self.n_cls is None:
            self.n_cls = len(self.cls_probs)
        if self.n_reg is None:
            self.n_reg = len(self.cls_probs)
        if self.n_cls <= 0 or self.n_reg <= 0:
            raise ValueError("normalizers must be positive")


@dataclass
class DetectionBatch:
    """All bands' anchor batches plus the classification/regression balance."""

    bands: dict
    balance: float = DEFAULT_BALANCE

    def __post_init__(self) -> None:
        if not self.bands:
            raise ValueError("need at least one band batch")
        if self.balance < 0:
            raise ValueError("balance must be non-negative")


@dataclass
class DetectionLossResult:
    value: float
    prob_grads: dict = field(default_factory=dict)
    offset_grads: dict = field(default_factory=dict)


def _bce_and_grad(p: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise binary cross-entropy and its derivative in p.

    Probabilities are clamped away from {0, 1}; where clamping engages the
    function is locally constant in p, so the derivative there is zero.
    A zero label contributes exactly nothing through the log(p) branch
    (and symmetrically for label one), even at saturated probabilities.
    """
    pc = np.clip(p, _PROB_EPS, 1.0 - _PROB_EPS)
    pos = np.where(y > 0.0, -y * np.log(pc), 0.0)
    neg = np.where(y < 1.0, -(1.0 - y) * np.log1p(-pc), 0.0)
    dpos = np.where(y > 0.0, -y / pc, 0.0)
    dneg = np.where(y < 1.0, (1.0 - y) / (1.0 - pc), 0.0)
    interior = (p > _PROB_EPS) & (p < 1.0 - _PROB_EPS)
    return pos + neg, np.where(interior, dpos + dneg, 0.0)


def _smooth_l1_and_grad(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise smooth-L1 of a residual and its derivative."""
    a = np.abs(d)
    val = np.where(a < 1.0, 0.5 * d * d, a - 0.5)
    grad = np.where(a < 1.0, d, np.sign(d))
    return val, grad


def detection_loss(
    batch,
    balance: float | None = None,
) -> DetectionLossResult:
    """Total detection loss over bands plus gradients for every input.

    ``batch`` is a :class:`DetectionBatch`, or a bare mapping of band keys
    to :class:`BandDetectionBatch` (then ``balance`` defaults to 10). The
    returned gradients are keyed identically: ``prob_grads[band][i]`` is
    dL/dp_i and ``offset_grads[band][i, c]`` is dL/dt_ic.
    """
    if isinstance(batch, DetectionBatch):
        batches = batch.bands
        if balance is None:
            balance = batch.balance
    else:
        batches = batch
    if balance is None:
        balance = DEFAULT_BALANCE
    if not batches:
        raise ValueError("need at least one band batch")
    total = 0.0
    prob_grads: dict = {}
    offset_grads: dict = {}
    for band, batch in batches.items():
        bce, dbce = _bce_and_grad(batch.cls_probs, batch.cls_labels)
        total += float(bce.sum()) / batch.n_cls
        prob_grads[band] = dbce / batch.n_cls

        residual = batch.reg_preds - batch.reg_targets
        sl1, dsl1 = _smooth_l1_and_grad(residual)
        weights = batch.cls_labels[:, None]
        total += balance * float((weights * sl1).sum()) / batch.n_reg
        offset_grads[band] = balance * weights * dsl1 / batch.n_reg
    return DetectionLossResult(total, prob_grads, offset_grads)
