"""Exhaustive enumeration oracle for small models.

For models whose total state space fits in 2^20 configurations, the joint
probability table exp(-E) / Z is computed directly from the energy

    E(v, h, m) = -v.b - h.a - m.c - v W h - m D h

either with m clamped to given values (table over v, h) or with m treated
as a free binary layer (table over v, h, m).  The per-unit conditionals of
this distribution are exactly the logistic activations used everywhere
else, which is what the tests verify.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rbm import RbmParams

ENUM_BITS_MAX = 20


def enumerate_states(bits: int) -> np.ndarray:
    """All binary configurations of `bits` units, one per row, as floats."""
    grid = np.indices((2,) * bits).reshape(bits, -1).T if bits else np.zeros((1, 0))
    return grid.astype(float)


def energy(
    params: RbmParams,
    v: np.ndarray,
    h: np.ndarray,
    m: np.ndarray,
) -> np.ndarray:
    """Energy of one configuration (or batch via broadcasting)."""
    v = np.asarray(v, dtype=float)
    h = np.asarray(h, dtype=float)
    m = np.asarray(m, dtype=float)
    return -(
        v @ params.b
        + h @ params.a
        + m @ params.c
        + np.sum((v @ params.W) * h, axis=-1)
        + np.sum((m @ params.D) * h, axis=-1)
    )


@dataclass
class ExactDistribution:
    """Normalized probability table over all binary states.

    probs has shape (2^n, 2^f) when m is clamped and (2^n, 2^f, 2^n) when m
    is a free layer; axis order is (v, h, m).
    """

    v_states: np.ndarray
    h_states: np.ndarray
    probs: np.ndarray
    m: np.ndarray | None  # clamped values, None when m is free
    m_states: np.ndarray | None

    @property
    def m_is_free(self) -> bool:
        return self.m_states is not None

    def state_index(self, bits: np.ndarray) -> int:
        """Row index of a binary configuration in the enumeration order."""
        idx = 0
        for bit in np.asarray(bits, dtype=int):
            idx = (idx << 1) | int(bit)
        return idx

    def p_hidden_given(self, v: np.ndarray, m: np.ndarray | None = None) -> np.ndarray:
        """p(h_j = 1 | v[, m]) for each hidden unit, by marginalization."""
        vi = self.state_index(v)
        if self.m_is_free:
            if m is None:
                raise ValueError("free-m table needs the m configuration")
            slab = self.probs[vi, :, self.state_index(m)]
        else:
            slab = self.probs[vi, :]
        weights = slab / slab.sum()
        return weights @ self.h_states

    def p_visible_given(self, h: np.ndarray) -> np.ndarray:
        """p(v_i = 1 | h) for each item, marginalizing m when free."""
        hi = self.state_index(h)
        slab = self.probs[:, hi]
        if self.m_is_free:
            slab = slab.sum(axis=-1)
        weights = slab / slab.sum()
        return weights @ self.v_states

    def p_expl_given(self, h: np.ndarray) -> np.ndarray:
        """p(m_i = 1 | h) for each item; requires the free-m table."""
        if not self.m_is_free:
            raise ValueError("m is clamped in this table; no m conditional exists")
        hi = self.state_index(h)
        slab = self.probs[:, hi, :].sum(axis=0)
        weights = slab / slab.sum()
        return weights @ self.m_states

    def expected_products(self) -> tuple[np.ndarray, np.ndarray]:
        """Model expectations <v_i h_j> and <m_i h_j>, shape (n_items, f)."""
        if self.m_is_free:
            pv_h = self.probs.sum(axis=2)
            vh = self.v_states.T @ pv_h @ self.h_states
            pm_h = self.probs.sum(axis=0).T  # (2^n_m, 2^f)
            mh = self.m_states.T @ pm_h @ self.h_states
        else:
            vh = self.v_states.T @ self.probs @ self.h_states
            mh = np.outer(self.m, (self.probs.sum(axis=0) @ self.h_states))
        return vh, mh


def exact_distribution(params: RbmParams, m: np.ndarray | None = None) -> ExactDistribution:
    """Enumerate p(v, h | m) for clamped m, or p(v, h, m) when m is None."""
    n, f = params.n_items, params.f
    bits = n + f if m is not None else 2 * n + f
    if bits > ENUM_BITS_MAX:
        raise ValueError(f"state space of {bits} bits exceeds the {ENUM_BITS_MAX}-bit enumeration bound")
    v_states = enumerate_states(n)
    h_states = enumerate_states(f)
    vb = v_states @ params.b  # (2^n,)
    ha = h_states @ params.a  # (2^f,)
    vwh = (v_states @ params.W) @ h_states.T  # (2^n, 2^f)
    if m is not None:
        m = np.asarray(m, dtype=float)
        neg_e = vb[:, None] + ha[None, :] + vwh
        neg_e += (m @ params.D) @ h_states.T + float(m @ params.c)
        m_states = None
    else:
        m_states = enumerate_states(n)
        mdh = (m_states @ params.D) @ h_states.T  # (2^n, 2^f)
        mc = m_states @ params.c  # (2^n,)
        neg_e = (
            vb[:, None, None]
            + ha[None, :, None]
            + vwh[:, :, None]
            + mdh.T[None, :, :]
            + mc[None, None, :]
        )
    neg_e -= neg_e.max()  # stabilize before exponentiation
    table = np.exp(neg_e)
    probs = table / table.sum()
    return ExactDistribution(v_states, h_states, probs, m, m_states)
