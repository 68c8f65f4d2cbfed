"""Negative-sampling losses for the three model variants.

All losses are negated log-likelihoods, so training minimizes them.

``hsg``
    ``-log sig(th_c . th_v) - log sig(-th_n . th_v)`` on free embeddings.
``hsg-sr``
    the ``hsg`` loss plus ``gamma * |th_u - f(Y_u)|^2`` for every distinct
    content node ``u`` of the triplet.
``se-hsg``
    the ``hsg`` loss on resolved vectors: content nodes are represented by
    their encoding ``f(Y_u)`` and own no free row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .exceptions import ConfigError
from .textenc import encode_batch, encode_batch_backward

__all__ = [
    "VARIANTS",
    "normalize_variant",
    "log_sigmoid",
    "Parameters",
    "Objective",
    "triplet_loss_hsg",
    "triplet_loss_hsg_sr",
    "triplet_loss_se_hsg",
    "hetero_softmax",
]

VARIANTS = ("hsg", "hsg-sr", "se-hsg")


def normalize_variant(name):
    key = str(name).strip().lower().replace("_", "-")
    if key not in VARIANTS:
        raise ConfigError(f"unknown variant {name!r}; choose one of {', '.join(VARIANTS)}")
    return key


def log_sigmoid(x):
    """``log(sigmoid(x))`` without overflow, split on the sign of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = -np.log1p(np.exp(-x[pos]))
    out[~pos] = x[~pos] - np.log1p(np.exp(x[~pos]))
    return out


def _sgns(rv, rc, rn):
    sp = np.einsum("ij,ij->i", rv, rc)
    sn = np.einsum("ij,ij->i", rv, rn)
    loss = -log_sigmoid(sp) - log_sigmoid(-sn)
    gp = (expit(sp) - 1.0)[:, None]
    gn = expit(sn)[:, None]
    return loss, gp * rc + gn * rn, gp * rv, gn * rv


@dataclass
class Parameters:
    """Trainable state: free rows ``theta`` and, for content variants, GRU ``phi``.

    ``row_of[v]`` is the row of node ``v`` in ``theta`` or -1 when ``v`` owns
    no free row (content nodes under ``se-hsg``).
    """

    theta: np.ndarray
    row_of: np.ndarray
    phi: object = None

    def copy(self):
        return Parameters(self.theta.copy(), self.row_of.copy(), None if self.phi is None else self.phi.copy())

    @property
    def size(self):
        return self.theta.size + (self.phi.size if self.phi is not None else 0)


class Objective:
    """Loss and gradients of one variant over batches of triplets.

    Parameters
    ----------
    variant : str
        ``"hsg"``, ``"hsg-sr"`` or ``"se-hsg"``.
    content : dict
        Node index to its ``(n_tokens, d_w)`` word-vector matrix. Ignored by ``hsg``.
    n_nodes : int
    gamma : float
        Weight of the semantic penalty in ``hsg-sr``.
    """

    def __init__(self, variant, content, n_nodes, gamma=1.0):
        self.variant = normalize_variant(variant)
        if gamma < 0:
            raise ConfigError("gamma must be >= 0")
        self.gamma = float(gamma)
        self.content = content if self.variant != "hsg" else {}
        self.is_content = np.zeros(n_nodes, dtype=bool)
        if self.content:
            self.is_content[list(self.content)] = True

    def _encode(self, params, nodes):
        return encode_batch(params.phi, [self.content[int(v)] for v in nodes])

    def batch(self, params, triplets):
        """Summed loss over ``triplets`` and its gradients.

        Returns ``(loss, rows, row_grads, phi_grads)``: ``row_grads[i]`` is the
        gradient for ``theta[rows[i]]`` and ``phi_grads`` is a dict (``None``
        for ``hsg``).
        """
        triplets = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
        B, d = len(triplets), params.theta.shape[1]
        R = np.empty((B, 3, d))
        on_content = self.is_content[triplets]
        free = ~on_content if self.variant == "se-hsg" else np.ones_like(on_content)
        rows_all = params.row_of[triplets]
        R[free] = params.theta[rows_all[free]]

        uniq = inv = cache = E = None
        if self.variant != "hsg" and on_content.any():
            uniq, inv = np.unique(triplets[on_content], return_inverse=True)
            E, cache = self._encode(params, uniq)
            if self.variant == "se-hsg":
                R[on_content] = E[inv]

        loss, dv, dc, dn = _sgns(R[:, 0], R[:, 1], R[:, 2])
        total = float(loss.sum())
        dR = np.stack([dv, dc, dn], axis=1)
        dE = None if uniq is None else np.zeros_like(E)

        if self.variant == "hsg-sr" and uniq is not None:
            # count each content node once per triplet, even if it repeats
            first = on_content.copy()
            first[:, 1] &= triplets[:, 1] != triplets[:, 0]
            first[:, 2] &= (triplets[:, 2] != triplets[:, 0]) & (triplets[:, 2] != triplets[:, 1])
            pos = np.flatnonzero(on_content.ravel())
            keep = first.ravel()[pos]
            diff = R.reshape(-1, d)[pos[keep]] - E[inv[keep]]
            total += self.gamma * float(np.sum(diff * diff))
            dR.reshape(-1, d)[pos[keep]] += 2.0 * self.gamma * diff
            np.add.at(dE, inv[keep], -2.0 * self.gamma * diff)
        elif self.variant == "se-hsg" and uniq is not None:
            np.add.at(dE, inv, dR[on_content])

        rows, rinv = np.unique(rows_all[free], return_inverse=True)
        row_grads = np.zeros((len(rows), d))
        np.add.at(row_grads, rinv, dR[free])

        phi_grads = None
        if params.phi is not None:
            if uniq is None:
                phi_grads = {n: np.zeros_like(m) for n, m in params.phi.as_dict().items()}
            else:
                phi_grads = encode_batch_backward(cache, params.phi, dE)
        return total, rows, row_grads, phi_grads

    def loss(self, params, triplets, batch_size=4096):
        """Summed loss only, evaluated in chunks."""
        triplets = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
        total = 0.0
        for i in range(0, len(triplets), batch_size):
            total += self.batch(params, triplets[i : i + batch_size])[0]
        return total

    def full_gradient(self, params, triplets):
        """Summed loss with dense gradients ``(loss, dtheta, dphi)``."""
        total, rows, row_grads, phi_grads = self.batch(params, triplets)
        dtheta = np.zeros_like(params.theta)
        dtheta[rows] = row_grads
        return total, dtheta, phi_grads


def _single(variant, t, theta, phi, content, gamma):
    theta = np.asarray(theta, dtype=np.float64)
    n = len(theta)
    row_of = np.arange(n)
    if variant == "se-hsg":
        row_of = np.where(np.isin(np.arange(n), list(content)), -1, row_of)
    obj = Objective(variant, content or {}, n, gamma)
    params = Parameters(theta, row_of, phi)
    loss, dtheta, dphi = obj.full_gradient(params, np.asarray(t).reshape(1, 3))
    if variant == "se-hsg":
        dtheta[row_of < 0] = 0.0
    grads = {int(v): dtheta[v] for v in set(int(x) for x in t) if row_of[v] >= 0}
    return loss, grads, dphi


def triplet_loss_hsg(t, theta):
    """Loss and per-node gradients for one ``(v, v_c, v_neg)`` triplet; ``theta`` is indexed by node."""
    loss, grads, _ = _single("hsg", t, theta, None, {}, 0.0)
    return loss, grads


def triplet_loss_hsg_sr(t, theta, phi, content, gamma=1.0):
    """As :func:`triplet_loss_hsg` plus the semantic penalty; also returns GRU gradients."""
    return _single("hsg-sr", t, theta, phi, content, gamma)


def triplet_loss_se_hsg(t, theta, phi, content):
    """Loss with content nodes replaced by their encodings; rows of content nodes in ``theta`` are ignored."""
    return _single("se-hsg", t, theta, phi, content, 0.0)


def hetero_softmax(reps, center, candidates):
    """Exact ``p(c | center)`` over same-type ``candidates`` (reference only; training uses negative sampling)."""
    scores = reps[candidates] @ reps[center]
    scores = scores - scores.max()
    w = np.exp(scores)
    return w / w.sum()
