"""Survival models: linear AFT by censored maximum likelihood, a discrete-time
per-horizon hazard model, and Harrell's concordance index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize, special

from .features import ObservationSet

NOISE_FAMILIES = ("normal", "logistic")
_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


class UnidentifiableError(ValueError):
    """Every observation is censored; the AFT likelihood has no maximum."""


class FitDiagnosticsError(RuntimeError):
    """The loss became non-finite during fitting."""


class ComparablePairsError(ValueError):
    """No comparable pair exists, so the concordance index is undefined."""


def _standardize_params(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    means = x.mean(axis=0) if len(x) else np.zeros(x.shape[1])
    stds = x.std(axis=0) if len(x) else np.ones(x.shape[1])
    stds = np.where(stds > 0, stds, 1.0)
    return means, stds


# --- noise families: log density, log survival and their z-derivatives ---

def _log_pdf(z: np.ndarray, noise: str) -> np.ndarray:
    if noise == "normal":
        return -0.5 * z * z - _HALF_LOG_2PI
    return -z - 2.0 * np.logaddexp(0.0, -z)


def _dlog_pdf(z: np.ndarray, noise: str) -> np.ndarray:
    if noise == "normal":
        return -z
    return 1.0 - 2.0 * special.expit(z)


def _log_sf(z: np.ndarray, noise: str) -> np.ndarray:
    if noise == "normal":
        return special.log_ndtr(-z)
    return -np.logaddexp(0.0, z)


def _dlog_sf(z: np.ndarray, noise: str) -> np.ndarray:
    if noise == "normal":
        # -phi(z)/S(z) evaluated in log space for stability in the tail
        return -np.exp(_log_pdf(z, "normal") - special.log_ndtr(-z))
    return -special.expit(z)


def aft_loglik(
    params: np.ndarray,
    x: np.ndarray,
    log_t: np.ndarray,
    event: np.ndarray,
    noise: str = "normal",
    with_grad: bool = True,
):
    """Censored AFT log-likelihood of ``params = [w..., b, log sigma]``.

    Events contribute ``log f(z) - log sigma`` and censored rows ``log S(z)``
    with ``z = (log t - <w, x> - b) / sigma``. Returns ``(loglik, grad)``.
    """
    k = x.shape[1]
    w, b, s = params[:k], params[k], params[k + 1]
    sigma = math.exp(s)
    z = (log_t - x @ w - b) / sigma
    ll = np.where(event, _log_pdf(z, noise) - s, _log_sf(z, noise))
    total = float(np.sum(ll))
    if not with_grad:
        return total
    g = np.where(event, _dlog_pdf(z, noise), _dlog_sf(z, noise))
    d_eta = -g / sigma
    grad = np.empty(k + 2)
    grad[:k] = x.T @ d_eta
    grad[k] = np.sum(d_eta)
    grad[k + 1] = float(np.sum(-g * z)) - float(np.sum(event))
    return total, grad


@dataclass(frozen=True)
class AftModel:
    w: np.ndarray
    intercept: float
    sigma: float
    noise: str
    feature_means: np.ndarray
    feature_stds: np.ndarray
    features: tuple[str, ...] | None = None
    loglik: float = float("nan")
    iterations: int = 0
    converged: bool = True

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.noise not in NOISE_FAMILIES:
            raise ValueError(f"unknown noise family {self.noise!r}")
        if len(self.w) != len(self.feature_means):
            raise ValueError("coefficient and standardization sizes differ")

    @property
    def n_features(self) -> int:
        return len(self.w)

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape[-1]}")
        return x

    def log_location(self, x) -> np.ndarray:
        """mu_ln = <w, standardized x> + b."""
        x = self._check(x)
        return ((x - self.feature_means) / self.feature_stds) @ self.w + self.intercept

    def raw_coefficients(self) -> tuple[np.ndarray, float]:
        """Coefficients and intercept on unstandardized features."""
        w_raw = self.w / self.feature_stds
        return w_raw, float(self.intercept - np.dot(w_raw, self.feature_means))

    def _scale_factor(self, functional: str) -> float:
        if functional == "median":
            return 1.0
        if functional != "mean":
            raise ValueError("functional must be 'mean' or 'median'")
        if self.noise == "normal":
            return math.exp(0.5 * self.sigma ** 2)
        # E[exp(sigma Z)] for standard logistic Z is finite only for sigma < 1
        if self.sigma >= 1:
            return math.inf
        return math.pi * self.sigma / math.sin(math.pi * self.sigma)

    def predict_lifespan(self, x, functional: str = "mean"):
        """Predicted lifespan in months (mean of exp(mu_ln + sigma Z) by default)."""
        out = np.exp(self.log_location(x)) * self._scale_factor(functional)
        return float(out) if np.ndim(out) == 0 else out

    def risk(self, x) -> np.ndarray:
        return -self.log_location(x)

    def to_dict(self) -> dict:
        return {
            "kind": "aft",
            "noise": self.noise,
            "w": self.w.tolist(),
            "intercept": float(self.intercept),
            "sigma": float(self.sigma),
            "feature_means": self.feature_means.tolist(),
            "feature_stds": self.feature_stds.tolist(),
            "features": list(self.features) if self.features else None,
            "loglik": float(self.loglik),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AftModel":
        return cls(
            np.asarray(d["w"], float), float(d["intercept"]), float(d["sigma"]), d["noise"],
            np.asarray(d["feature_means"], float), np.asarray(d["feature_stds"], float),
            tuple(d["features"]) if d.get("features") else None,
            float(d.get("loglik", "nan")), int(d.get("iterations", 0)), bool(d.get("converged", True)),
        )


def _xy(data, durations=None, events=None):
    if isinstance(data, ObservationSet):
        return data.x, data.duration, data.event
    return np.asarray(data, float), np.asarray(durations, float), np.asarray(events, bool)


def fit_aft(
    data,
    durations=None,
    events=None,
    noise: str = "normal",
    max_iter: int = 1000,
    tol: float = 1e-8,
    l2: float = 1e-4,
    features: Sequence[str] | None = None,
) -> AftModel:
    """Fit ``ln T = <w, x> + b + sigma Z`` by penalized censored likelihood.

    Accepts an :class:`ObservationSet` or ``(x, durations, events)`` arrays.
    Features are standardized internally; ``l2`` penalizes the standardized
    coefficients against the mean log-likelihood.
    """
    if noise not in NOISE_FAMILIES:
        raise ValueError(f"unknown noise family {noise!r}")
    x, t, e = _xy(data, durations, events)
    if x.ndim != 2 or len(x) != len(t) or len(t) != len(e):
        raise ValueError("x, durations and events must align")
    if len(t) == 0 or not e.any():
        raise UnidentifiableError("need at least one uncensored observation")
    if (t <= 0).any():
        raise ValueError("durations must be positive")
    means, stds = _standardize_params(x)
    xs = (x - means) / stds
    log_t = np.log(t)
    n, k = xs.shape

    spread = float(np.std(log_t[e])) if e.sum() > 1 else 1.0
    theta0 = np.zeros(k + 2)
    theta0[k] = float(np.mean(log_t[e]))
    theta0[k + 1] = math.log(spread) if spread > 0 else 0.0

    def objective(theta):
        ll, grad = aft_loglik(theta, xs, log_t, e, noise)
        w = theta[:k]
        f = -ll / n + 0.5 * l2 * float(w @ w)
        g = -grad / n
        g[:k] += l2 * w
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            raise FitDiagnosticsError(f"non-finite loss at parameters {theta.tolist()}")
        return f, g

    res = optimize.minimize(
        objective, theta0, jac=True, method="L-BFGS-B",
        options={"maxiter": max_iter, "gtol": tol, "ftol": tol * 1e-4},
    )
    theta = res.x
    ll = aft_loglik(theta, xs, log_t, e, noise, with_grad=False)
    if not np.isfinite(ll):
        raise FitDiagnosticsError("non-finite log-likelihood at the optimum")
    return AftModel(
        theta[:k].copy(), float(theta[k]), math.exp(theta[k + 1]), noise, means, stds,
        tuple(features) if features else None, ll, int(res.nit), bool(res.success),
    )


def concordance(risk, durations, events) -> tuple[float, int]:
    """Harrell's C and the number of comparable pairs.

    A pair (i, j) is comparable when ``t_i < t_j`` and i had the event; it is
    concordant when ``risk_i > risk_j``, and risk ties count one half.
    """
    risk = np.asarray(risk, dtype=float)
    t = np.asarray(durations, dtype=float)
    e = np.asarray(events, dtype=bool)
    if not (len(risk) == len(t) == len(e)):
        raise ValueError("risk, durations and events must have equal length")
    if np.isnan(risk).any():
        raise ValueError("risk contains NaN")
    order = np.argsort(-t, kind="stable")
    t_sorted = t[order]
    bounds = np.flatnonzero(np.diff(t_sorted)) + 1
    groups = np.split(order, bounds)
    seen = np.empty(0)  # sorted risks of rows with strictly longer times
    concordant = 0.0
    pairs = 0
    for idx in groups:
        ev = idx[e[idx]]
        if len(ev) and len(seen):
            r = risk[ev]
            lo = np.searchsorted(seen, r, side="left")
            hi = np.searchsorted(seen, r, side="right")
            concordant += float(lo.sum()) + 0.5 * float((hi - lo).sum())
            pairs += len(ev) * len(seen)
        new = np.sort(risk[idx])
        seen = np.insert(seen, np.searchsorted(seen, new), new)
    return (concordant / pairs if pairs else float("nan")), pairs


def concordance_index(risk, durations, events) -> float:
    c, pairs = concordance(risk, durations, events)
    if pairs == 0:
        raise ComparablePairsError("no comparable pairs")
    return c


# --- discrete-time hazard model ---

def hazard_targets(durations: np.ndarray, events: np.ndarray, horizons: int):
    """(target, mask) matrices of shape (n, H).

    Horizon h is observed while h <= duration; the target is 1 only at the
    event horizon of an uncensored row.
    """
    h = np.arange(1, horizons + 1)
    d = np.asarray(durations, float)[:, None]
    mask = h[None, :] <= d
    target = (np.asarray(events, bool)[:, None] & (h[None, :] == d)).astype(float)
    return target, mask.astype(float)


def hazard_loss(weights: np.ndarray, biases: np.ndarray, x: np.ndarray, target: np.ndarray, mask: np.ndarray):
    """Masked mean binary cross-entropy and its gradients."""
    logits = x @ weights.T + biases
    n_obs = mask.sum()
    if n_obs == 0:
        return 0.0, np.zeros_like(weights), np.zeros_like(biases)
    # log(1+e^l) - y*l is BCE in logit form
    bce = np.logaddexp(0.0, logits) - target * logits
    loss = float(np.sum(bce * mask) / n_obs)
    d_logit = (special.expit(logits) - target) * mask / n_obs
    return loss, d_logit.T @ x, d_logit.sum(axis=0)


@dataclass(frozen=True)
class HazardModel:
    weights: np.ndarray  # (H, k)
    biases: np.ndarray  # (H,)
    feature_means: np.ndarray
    feature_stds: np.ndarray
    window: int = 1
    features: tuple[str, ...] | None = None
    final_loss: float = float("nan")
    losses: list = field(default_factory=list, compare=False, repr=False)

    @property
    def horizons(self) -> int:
        return len(self.biases)

    @classmethod
    def zeros(cls, horizons: int, n_features: int, window: int = 1) -> "HazardModel":
        return cls(np.zeros((horizons, n_features)), np.zeros(horizons),
                   np.zeros(n_features), np.ones(n_features), window)

    def predict_hazard_curve(self, x_window) -> np.ndarray:
        """Per-horizon deprecation hazard in (0, 1); accepts one row or a batch."""
        x = np.asarray(x_window, dtype=float)
        k = self.weights.shape[1]
        if x.ndim == 2 and x.shape == (self.window, k // self.window) and self.window > 1:
            x = x.ravel()
        if x.shape[-1] != k:
            raise ValueError(f"expected {k} window features, got shape {x.shape}")
        logits = ((x - self.feature_means) / self.feature_stds) @ self.weights.T + self.biases
        # clip keeps sigmoid strictly inside (0, 1) in float64
        return special.expit(np.clip(logits, -36.0, 36.0))

    def risk(self, x) -> np.ndarray:
        return np.sum(self.predict_hazard_curve(x), axis=-1)

    def to_dict(self) -> dict:
        return {
            "kind": "hazard",
            "horizons": self.horizons,
            "window": self.window,
            "weights": self.weights.tolist(),
            "biases": self.biases.tolist(),
            "feature_means": self.feature_means.tolist(),
            "feature_stds": self.feature_stds.tolist(),
            "features": list(self.features) if self.features else None,
            "final_loss": float(self.final_loss),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HazardModel":
        return cls(
            np.asarray(d["weights"], float), np.asarray(d["biases"], float),
            np.asarray(d["feature_means"], float), np.asarray(d["feature_stds"], float),
            int(d.get("window", 1)), tuple(d["features"]) if d.get("features") else None,
            float(d.get("final_loss", "nan")),
        )


def fit_hazard(
    data: ObservationSet,
    horizons: int = 10,
    lr: float = 0.015,
    batch: int = 64,
    iters: int = 1000,
    seed: int = 0,
    features: Sequence[str] | None = None,
) -> HazardModel:
    """Mini-batch gradient descent on the masked cross-entropy.

    ``iters`` counts gradient steps; batches are drawn from per-epoch
    shuffles of a seeded generator.
    """
    if horizons < 1:
        raise ValueError("horizons must be >= 1")
    if len(data) == 0:
        raise ValueError("no observations to fit")
    x = data.x
    means, stds = _standardize_params(x)
    xs = (x - means) / stds
    target, mask = hazard_targets(data.duration, data.event, horizons)
    n, k = xs.shape
    weights = np.zeros((horizons, k))
    biases = np.zeros(horizons)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    pos = 0
    losses = []
    for _ in range(iters):
        if pos >= n:
            perm = rng.permutation(n)
            pos = 0
        idx = perm[pos: pos + batch]
        pos += batch
        loss, gw, gb = hazard_loss(weights, biases, xs[idx], target[idx], mask[idx])
        if not np.isfinite(loss):
            raise FitDiagnosticsError("non-finite hazard loss")
        weights -= lr * gw
        biases -= lr * gb
        losses.append(loss)
    final, _, _ = hazard_loss(weights, biases, xs, target, mask)
    return HazardModel(weights, biases, means, stds, data.window,
                       tuple(features) if features else None, final, losses)


def predicted_deprecation_month(curve) -> int | None:
    """1-based month of the hazard peak if it exceeds 0.5, else None."""
    curve = np.asarray(curve, dtype=float)
    if curve.size == 0 or curve.max() <= 0.5:
        return None
    return int(np.argmax(curve)) + 1


def save_model(model: AftModel | HazardModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2, sort_keys=True) + "\n")


def load_model(path: str | Path) -> AftModel | HazardModel:
    d = json.loads(Path(path).read_text())
    kind = d.get("kind")
    if kind == "aft":
        return AftModel.from_dict(d)
    if kind == "hazard":
        return HazardModel.from_dict(d)
    raise ValueError(f"{path}: unknown model kind {kind!r}")
