"""Limited-memory BFGS with backtracking Armijo line search."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

Objective = Callable[[NDArray], tuple[float, NDArray]]


@dataclass(frozen=True)
class LBFGSSettings:
    memory: int = 8
    g_tol: float = 1e-5
    """Stop when ||g||_inf <= g_tol * max(1, ||x||_inf)."""
    max_iter: int = 2000
    max_eval: int = 20000
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 60
    delta: float = 1e-4
    """Stop when the relative decrease over ``past`` iterations falls below delta (0 disables)."""
    past: int = 10

    def __post_init__(self) -> None:
        if self.memory < 1 or self.max_iter < 0 or self.max_eval < 1:
            raise ValueError("memory, max_iter and max_eval must be positive")
        if not 0.0 < self.armijo < 1.0 or not 0.0 < self.shrink < 1.0:
            raise ValueError("armijo and shrink must lie in (0, 1)")


@dataclass
class LBFGSResult:
    x: NDArray
    f: float
    g: NDArray
    n_iter: int
    n_eval: int
    reason: str
    skipped_updates: int = 0

    @property
    def converged(self) -> bool:
        return self.reason in ("gradient", "delta")


def _direction(g: NDArray, S: deque, Y: deque, gamma: float) -> NDArray:
    q = -g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        q -= a * y
        alphas.append((rho, a))
    q *= gamma
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


def lbfgs_minimize(f: Objective, x0: NDArray, settings: LBFGSSettings = LBFGSSettings()) -> LBFGSResult:
    """Minimize ``f`` (returning value and gradient) from ``x0``.

    Never raises on numerical trouble: a non-finite trial point is treated as
    a failed Armijo test, and a non-finite start, exhausted line search or
    budget ends the run with the best iterate and a ``reason`` string.
    """
    x = np.array(x0, dtype=float)
    fx, g = f(x)
    n_eval = 1
    if not (np.isfinite(fx) and np.all(np.isfinite(g))):
        return LBFGSResult(x, float(fx), g, 0, n_eval, "nonfinite")
    S: deque = deque(maxlen=settings.memory)
    Y: deque = deque(maxlen=settings.memory)
    history = [fx]
    skipped = 0
    gamma = 1.0 / max(np.linalg.norm(g), 1e-300)

    for it in range(settings.max_iter):
        if np.max(np.abs(g)) <= settings.g_tol * max(1.0, float(np.max(np.abs(x)))):
            return LBFGSResult(x, fx, g, it, n_eval, "gradient", skipped)
        d = _direction(g, S, Y, gamma)
        slope = float(g @ d)
        if not slope < 0.0:
            # memory produced an ascent direction; restart from steepest descent
            S.clear()
            Y.clear()
            gamma = 1.0 / max(np.linalg.norm(g), 1e-300)
            d = -gamma * g
            slope = float(g @ d)
        step = 1.0
        for _ in range(settings.max_backtracks):
            x_new = x + step * d
            f_new, g_new = f(x_new)
            n_eval += 1
            ok = np.isfinite(f_new) and np.all(np.isfinite(g_new))
            if ok and f_new <= fx + settings.armijo * step * slope:
                break
            if n_eval >= settings.max_eval:
                return LBFGSResult(x, fx, g, it, n_eval, "max_eval", skipped)
            step *= settings.shrink
        else:
            return LBFGSResult(x, fx, g, it, n_eval, "line_search", skipped)

        s_vec, y_vec = x_new - x, g_new - g
        x, fx, g = x_new, float(f_new), g_new
        sy = float(s_vec @ y_vec)
        if sy > 1e-12 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            S.append(s_vec)
            Y.append(y_vec)
            gamma = sy / float(y_vec @ y_vec)
        else:
            skipped += 1

        history.append(fx)
        if settings.delta > 0.0 and len(history) > settings.past:
            ref = history[-1 - settings.past]
            if (ref - fx) / max(1.0, abs(fx)) < settings.delta:
                return LBFGSResult(x, fx, g, it + 1, n_eval, "delta", skipped)
        if n_eval >= settings.max_eval:
            return LBFGSResult(x, fx, g, it + 1, n_eval, "max_eval", skipped)
    return LBFGSResult(x, fx, g, settings.max_iter, n_eval, "max_iter", skipped)
