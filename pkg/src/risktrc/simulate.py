"""Monte-Carlo rollouts of stationary policies.

Randomness comes from SplitMix64 used as a counter-based generator, so every
uniform draw is a pure function of ``(seed, episode, draw index)``::

    key(e)    = mix(seed + (e + 1) * GOLDEN)
    draw(e,j) = mix(key(e) + (j + 1) * GOLDEN)
    uniform   = (draw >> 11) * 2**-53

Draw 0 picks the initial state; at step ``t`` draw ``1 + 2t`` picks the
action and draw ``2 + 2t`` the transition. Episodes therefore do not depend
on how they are batched, and results are identical on every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import SINK, DecisionRule, TransientMdp
from .risk import empirical_erm, evar_search

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
DEFAULT_MAX_STEPS = 100_000


def splitmix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = np.asarray(x, dtype=np.uint64).copy()
    with np.errstate(over="ignore"):
        z ^= z >> np.uint64(30)
        z *= _M1
        z ^= z >> np.uint64(27)
        z *= _M2
        z ^= z >> np.uint64(31)
    return z


def episode_keys(seed: int, episodes: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return splitmix64(np.uint64(seed % 2**64) + (episodes.astype(np.uint64) + np.uint64(1)) * GOLDEN)


def uniforms(keys: np.ndarray, draw: int | np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = splitmix64(keys + (np.asarray(draw, dtype=np.uint64) + np.uint64(1)) * GOLDEN)
    return (x >> np.uint64(11)).astype(np.float64) * 2.0**-53


@dataclass(frozen=True)
class RolloutConfig:
    episodes: int
    policy: DecisionRule
    seed: int = 0
    max_steps: int = DEFAULT_MAX_STEPS

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be at least 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


class TruncatedSampleError(ValueError):
    pass


@dataclass
class ReturnDistribution:
    returns: np.ndarray
    truncated: np.ndarray
    seed: int
    steps: np.ndarray = field(repr=False, default=None)

    @property
    def truncated_count(self) -> int:
        return int(self.truncated.sum())

    def complete_returns(self) -> np.ndarray:
        """Returns for risk estimates; refuses samples with truncated episodes."""
        if self.truncated_count:
            raise TruncatedSampleError(
                f"{self.truncated_count} episodes hit max_steps; raise max_steps before estimating risk"
            )
        return self.returns


def _cumulative(weights: np.ndarray) -> np.ndarray:
    c = np.cumsum(weights, axis=-1)
    return c / np.where(c[..., -1:] > 0, c[..., -1:], 1.0)


def _pick(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    # first index whose cumulative weight exceeds u
    return np.minimum((u[:, None] >= cum).sum(axis=1), cum.shape[1] - 1)


def rollout(model: TransientMdp, config: RolloutConfig) -> ReturnDistribution:
    rule = config.policy
    rule.check_against(model)
    lay = model.layout
    n = config.episodes
    ep = np.arange(n)
    keys = episode_keys(config.seed, ep)

    mu_cum = _cumulative(model.mu[None, :])[0]
    state = _pick(np.broadcast_to(mu_cum, (n, mu_cum.size)), uniforms(keys, 0))
    act_cum = _cumulative(rule.probs)
    # padding slots can never be picked
    next_cum = np.where(lay.valid, _cumulative(np.where(lay.valid, lay.prob, 0.0)), np.inf)

    total = np.zeros(n)
    steps = np.zeros(n, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    deterministic = rule.is_deterministic
    fixed = rule.actions if deterministic else None
    for t in range(config.max_steps):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        s = state[idx]
        k = keys[idx]
        if deterministic:
            a = fixed[s]
        else:
            a = _pick(act_cum[s], uniforms(k, 1 + 2 * t))
        j = _pick(next_cum[s, a], uniforms(k, 2 + 2 * t))
        total[idx] += lay.rew[s, a, j]
        nxt = lay.dst[s, a, j]
        steps[idx] += 1
        done = nxt == SINK
        alive[idx[done]] = False
        state[idx] = np.where(done, 0, nxt)
    return ReturnDistribution(returns=total, truncated=alive.copy(), seed=config.seed, steps=steps)


# ---------------------------------------------------------------------------
# reports


def histogram_rows(returns, bins=None) -> list[tuple[float, float, int]]:
    """Rows ``(bin_low, bin_high, count)``.

    Integer-valued samples get one unit bin per integer between the smallest
    and largest value, centred on it. Otherwise ``bins`` (default 20) is
    passed to ``numpy.histogram``.
    """
    x = np.asarray(returns, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample")
    if bins is None and np.all(x == np.round(x)):
        lo, hi = int(x.min()), int(x.max())
        values = np.arange(lo, hi + 1)
        counts = np.bincount((x - lo).astype(np.int64), minlength=values.size)
        return [(v - 0.5, v + 0.5, int(c)) for v, c in zip(values.tolist(), counts)]
    counts, edges = np.histogram(x, bins=20 if bins is None else bins)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(counts.size)]


def histogram_csv(returns, bins=None) -> str:
    lines = ["bin_low,bin_high,count"]
    lines.extend(f"{lo!r},{hi!r},{c}" for lo, hi, c in histogram_rows(returns, bins))
    return "\n".join(lines) + "\n"


DEFAULT_ERM_LADDER = (0.01, 0.1, 0.5, 1.0, 2.0)


def summary(dist: ReturnDistribution, alphas=(), betas=DEFAULT_ERM_LADDER) -> dict:
    x = dist.returns
    out = {
        "episodes": int(x.size),
        "seed": dist.seed,
        "truncated": dist.truncated_count,
        "mean": float(x.mean()),
        "min": float(x.min()),
        "max": float(x.max()),
    }
    if dist.truncated_count:
        out["erm"] = None
        out["evar"] = None
        return out
    out["erm"] = [{"beta": float(b), "value": empirical_erm(x, b)} for b in betas]
    evars = []
    for a in alphas:
        est = evar_search(x, a)
        evars.append(
            {
                "alpha": float(a),
                "value": est.value,
                "beta": est.beta if math.isfinite(est.beta) else "inf",
                "at_boundary": est.at_boundary,
            }
        )
    out["evar"] = evars
    return out
