"""Count distributions underlying the Gamma-Poisson factorization model.

The negative binomial (NB) law arises when a Poisson rate is itself Gamma
distributed. The negative multinomial (NM) law is its multivariate
counterpart: F independent Poisson variables sharing a single Gamma rate,
each scaled by a nonnegative weight. Two exact sampling constructions are
provided for the NM law, a Gamma-Poisson mixture and a compound
multinomial with NB-distributed trial count, which are distributionally
identical.

All log mass functions are evaluated through log-gamma so that large
counts never overflow. Convention: 0 * log(0) = 0, so a zero count on a
zero-probability coordinate contributes nothing, while a positive count
there yields -inf.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import ParameterError, ShapeError

__all__ = [
    "NegBinParams",
    "NegMultParams",
    "nb_log_pmf",
    "nb_sample",
    "nm_log_pmf",
    "nm_sample_mixture",
    "nm_sample_compound",
]


@dataclass(frozen=True)
class NegBinParams:
    """Negative binomial parameters: dispersion ``alpha`` > 0 and event
    probability ``p`` in [0, 1)."""

    alpha: float
    p: float

    def __post_init__(self):
        if not (self.alpha > 0 and np.isfinite(self.alpha)):
            raise ParameterError(f"dispersion must be positive, got {self.alpha}")
        if not (0.0 <= self.p < 1.0):
            raise ParameterError(f"event probability must lie in [0, 1), got {self.p}")


@dataclass(frozen=True)
class NegMultParams:
    """Negative multinomial parameters.

    ``p`` holds the F event probabilities, ``p0 = 1 - sum(p)`` the
    remaining mass. ``p0`` may be supplied explicitly (it must then agree
    with ``1 - sum(p)`` to 1e-12); this lets callers use an algebraically
    equivalent but better-conditioned expression such as
    ``beta / (sum(w) + beta)``.
    """

    alpha: float
    p: np.ndarray
    p0: float = field(default=None)

    def __post_init__(self):
        if not (self.alpha > 0 and np.isfinite(self.alpha)):
            raise ParameterError(f"dispersion must be positive, got {self.alpha}")
        p = np.asarray(self.p, dtype=np.float64)
        object.__setattr__(self, "p", p)
        if p.ndim != 1 or p.size == 0:
            raise ShapeError("event probabilities must form a non-empty vector")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ParameterError("event probabilities must lie in [0, 1]")
        total = p.sum()
        if not total < 1.0:
            raise ParameterError(f"event probabilities must sum below 1, got {total}")
        if self.p0 is None:
            object.__setattr__(self, "p0", 1.0 - total)
        elif not self.p0 > 0.0 or abs(self.p0 - (1.0 - total)) > 1e-12:
            raise ParameterError(
                f"p0={self.p0} inconsistent with 1 - sum(p) = {1.0 - total}"
            )

    @classmethod
    def from_weights(cls, alpha, beta, w):
        """Parameters of the law of F Poisson counts with rates ``w_f * lam``
        where ``lam ~ Gamma(alpha, rate=beta)``."""
        w = np.asarray(w, dtype=np.float64)
        if not beta > 0:
            raise ParameterError(f"rate must be positive, got {beta}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ParameterError("weights must be finite and nonnegative")
        denom = w.sum() + beta
        return cls(alpha=alpha, p=w / denom, p0=beta / denom)

    @property
    def dim(self):
        return self.p.size


def _log_mass(alpha, p0, p, c):
    """Shared log-domain pipeline for NB (F=1) and NM mass functions."""
    c = np.asarray(c)
    with np.errstate(divide="ignore"):
        log_p0 = np.log(p0)
        log_p = np.log(p)
    val = gammaln(alpha + c.sum()) - gammaln(alpha) + alpha * log_p0
    val -= gammaln(c + 1.0).sum()
    nz = c > 0
    if nz.any():
        val += (c[nz] * log_p[nz]).sum()  # -inf if any p is 0 under a positive count
    return float(val)


def nb_log_pmf(params: NegBinParams, c) -> float:
    """Exact log pmf of the negative binomial at count ``c``."""
    c = int(c)
    if c < 0:
        raise ParameterError(f"count must be nonnegative, got {c}")
    p = np.asarray([params.p])
    return _log_mass(params.alpha, 1.0 - p.sum(), p, np.asarray([c]))


def nm_log_pmf(params: NegMultParams, c) -> float:
    """Exact log pmf of the negative multinomial at the count vector ``c``."""
    c = np.asarray(c)
    if c.shape != (params.dim,):
        raise ShapeError(f"count vector has shape {c.shape}, expected ({params.dim},)")
    if np.any(c < 0):
        raise ParameterError("counts must be nonnegative")
    return _log_mass(params.alpha, params.p0, params.p, c.astype(np.int64))


def nb_sample(params: NegBinParams, rng, size=None):
    """Draw NB counts through the Gamma-Poisson mixture.

    Samples ``lam ~ Gamma(alpha, rate=(1-p)/p)`` then ``c ~ Poisson(lam)``;
    the marginal is NB(alpha, p). ``p = 0`` yields 0 deterministically.
    """
    if params.p == 0.0:
        return 0 if size is None else np.zeros(size, dtype=np.int64)
    scale = params.p / (1.0 - params.p)
    lam = rng.gamma(params.alpha, scale, size=size)
    draw = rng.poisson(lam)
    return int(draw) if size is None else draw


def nm_sample_mixture(alpha, beta, w, rng, size=None):
    """Draw an NM count vector as Poissons sharing one Gamma rate.

    ``lam ~ Gamma(alpha, rate=beta)`` then independently
    ``c_f ~ Poisson(w_f * lam)``. With ``size`` given, returns a
    ``(size, F)`` array of independent draws.
    """
    w = _check_weights(alpha, beta, w)
    lam = rng.gamma(alpha, 1.0 / beta, size=size)
    if size is None:
        return rng.poisson(w * lam)
    return rng.poisson(np.outer(lam, w))


def nm_sample_compound(alpha, beta, w, rng, size=None):
    """Draw an NM count vector as a multinomial with NB trial count.

    ``L ~ NB(alpha, sum(w) / (sum(w) + beta))`` then
    ``c ~ Multinomial(L, w / sum(w))``; the law matches
    :func:`nm_sample_mixture`. An all-zero weight vector yields zeros.
    """
    w = _check_weights(alpha, beta, w)
    total = w.sum()
    if total == 0.0:
        shape = w.size if size is None else (size, w.size)
        return np.zeros(shape, dtype=np.int64)
    trials = nb_sample(NegBinParams(alpha, total / (total + beta)), rng, size=size)
    return rng.multinomial(trials, w / total)


def _check_weights(alpha, beta, w):
    if not alpha > 0:
        raise ParameterError(f"dispersion must be positive, got {alpha}")
    if not beta > 0:
        raise ParameterError(f"rate must be positive, got {beta}")
    w = np.asarray(w, dtype=np.float64)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ParameterError("weights must be finite and nonnegative")
    return w
