"""Lindblad master-equation propagation on the truncated QD-cavity space.

States are vectorised row-major, so vec(A rho B) = kron(A, B.T) @ vec(rho).
Inside the drive window the generator is time dependent and is integrated
with an embedded Runge-Kutta scheme (DOP853); outside it the generator is
constant and the state is propagated exactly with a matrix exponential.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .model import HBAR, ModelOperators

RTOL = 1e-9
ATOL = 1e-12


class IntegrationError(RuntimeError):
    """Raised when the ODE integrator fails; carries the failing time (ps)."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (at t={time:.6g} ps)")
        self.time = time


def commutator_super(h: np.ndarray) -> np.ndarray:
    """Superoperator of rho -> -i [h, rho]."""
    eye = np.eye(h.shape[0])
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def dissipator_super(c: np.ndarray) -> np.ndarray:
    """Superoperator of rho -> c rho c^dag - {c^dag c, rho}/2."""
    eye = np.eye(c.shape[0])
    cdc = c.conj().T @ c
    return np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T)


def jump_super(c: np.ndarray) -> np.ndarray:
    """Superoperator of rho -> c rho c^dag."""
    return np.kron(c, c.conj())


def trace_row(op: np.ndarray) -> np.ndarray:
    """Row vector r with r @ vec(rho) = Tr(op rho)."""
    return op.T.reshape(-1)


def as_density_matrix(state, dim: Optional[int] = None) -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        state = np.outer(state, state.conj())
    if state.ndim != 2 or state.shape[0] != state.shape[1]:
        raise ValueError("state must be a vector or a square matrix")
    if dim is not None and state.shape[0] != dim:
        raise ValueError(f"state dimension {state.shape[0]} != {dim}")
    return state


def check_density_matrix(rho, trace_tol=1e-9, herm_tol=1e-10, eig_tol=1e-8) -> None:
    rho = np.asarray(rho)
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        raise ValueError(f"trace {tr} differs from 1")
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise ValueError("density matrix not Hermitian")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -eig_tol:
        raise ValueError("density matrix has negative eigenvalues")


class Liouvillian:
    """Lindblad generator split into static, drive and time-dependent-rate parts.

    The generator acts on [vec(rho), F_1..F_n] where F_c accumulates the
    emitted flux rate_c(t) Tr(C_c^dag C_c rho) of each collapse channel.
    """

    def __init__(self, ops: ModelOperators):
        self.ops = ops
        d = ops.dim
        n2 = d * d
        nc = len(ops.channels)
        self.size = n2 + nc
        self.n2 = n2
        static = np.zeros((self.size, self.size), dtype=complex)
        static[:n2, :n2] = commutator_super(ops.h0 / HBAR)
        self._td = []
        for k, ch in enumerate(ops.channels):
            block = np.zeros((self.size, self.size), dtype=complex)
            block[:n2, :n2] = dissipator_super(ch.op)
            block[n2 + k, :n2] = trace_row(ch.op.conj().T @ ch.op)
            static += ch.rate * block
            if ch.time_dependent:
                self._td.append((ch, block))
        self.static = static
        self.drive = np.zeros_like(static)
        self.drive[:n2, :n2] = commutator_super(0.5 * ops.h_drive)

    def __call__(self, t: float) -> np.ndarray:
        gen = self.static + self.ops.pulse.rabi_frequency(t) * self.drive
        for ch, block in self._td:
            gen = gen + ch.rate_fn(t) * block
        return gen


@dataclass
class Evolution:
    """Sampled solution of the master equation."""

    times: np.ndarray
    states: np.ndarray
    fluxes: np.ndarray
    channel_names: tuple

    def expect(self, op: np.ndarray) -> np.ndarray:
        vals = np.einsum("ij,tji->t", op, self.states)
        return vals.real

    def emitted(self, channel: str) -> np.ndarray:
        """Cumulative emitted probability through `channel` at each sample time."""
        return self.fluxes[:, self.channel_names.index(channel)]

    def trace_drift(self) -> float:
        return float(np.max(np.abs(np.einsum("tii->t", self.states) - 1.0)))


def propagate(
    generator: Callable[[float], np.ndarray],
    static: np.ndarray,
    window: tuple,
    y0: np.ndarray,
    t_start: float,
    t_end: float,
    t_eval: Sequence[float],
    max_step: float = np.inf,
    window_step: float = np.inf,
    method: str = "auto",
    rtol: float = RTOL,
    atol: float = ATOL,
) -> np.ndarray:
    """Integrate dy/dt = G(t) y and return y at each time in `t_eval`.

    `generator` is only evaluated inside `window`; outside it the constant
    `static` generator applies.
    """
    if method not in ("auto", "rk"):
        raise ValueError(f"unknown method {method!r}")
    if not t_end > t_start:
        raise ValueError("t_end must exceed t_start")
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.size and (t_eval.min() < t_start or t_eval.max() > t_end):
        raise ValueError("t_eval outside integration range")
    if np.any(np.diff(t_eval) < 0):
        raise ValueError("t_eval must be sorted")

    w0, w1 = window
    cuts = [t_start] + [w for w in (w0, w1) if t_start < w < t_end] + [t_end]
    out = np.empty((t_eval.size, y0.size), dtype=complex)
    y = np.array(y0, dtype=complex)
    cache: dict = {}
    t_now = t_start
    done = 0
    while done < t_eval.size and t_eval[done] == t_start:
        out[done] = y
        done += 1

    for a, b in zip(cuts[:-1], cuts[1:]):
        inside = a >= w0 and b <= w1
        seg_times = t_eval[(t_eval > a) & (t_eval <= b)]
        if not inside and method == "auto":
            for t in list(seg_times) + ([b] if not seg_times.size or seg_times[-1] < b else []):
                dt = t - t_now
                if dt > 0:
                    key = round(dt, 9)
                    prop = cache.get(key)
                    if prop is None:
                        prop = cache[key] = expm(static * dt)
                    y = prop @ y
                t_now = t
                while done < t_eval.size and t_eval[done] == t:
                    out[done] = y
                    done += 1
            continue
        step = min(max_step, window_step) if inside else max_step
        fun = (lambda t, v: generator(t) @ v) if inside else (lambda t, v: static @ v)
        targets = np.unique(np.concatenate([seg_times, [b]]))
        sol = solve_ivp(
            fun, (a, b), y, method="DOP853", t_eval=targets, rtol=rtol, atol=atol,
            max_step=step,
        )
        if sol.status != 0:
            raise IntegrationError(sol.message, float(sol.t[-1]) if sol.t.size else a)
        for k, t in enumerate(targets):
            while done < t_eval.size and t_eval[done] == t:
                out[done] = sol.y[:, k]
                done += 1
        y = sol.y[:, -1]
        t_now = b
    return out


def evolve_master_equation(
    rho0,
    ops: ModelOperators,
    t_start: float,
    t_end: float,
    t_eval: Optional[Sequence[float]] = None,
    max_step: float = np.inf,
    method: str = "auto",
    rtol: float = RTOL,
    atol: float = ATOL,
) -> Evolution:
    """Evolve `rho0` under the Lindblad equation defined by `ops`.

    Parameters
    ----------
    rho0 : density matrix, or a state vector (converted to a projector)
    t_eval : sample times; defaults to ``[t_start, t_end]``
    method : "auto" uses matrix exponentials where the generator is constant,
        "rk" integrates every segment with DOP853.

    Raises
    ------
    IntegrationError
        if the adaptive integrator fails (step-size underflow).
    """
    rho0 = as_density_matrix(rho0, ops.dim)
    check_density_matrix(rho0)
    if t_eval is None:
        t_eval = [t_start, t_end]
    liou = Liouvillian(ops)
    y0 = np.concatenate([rho0.reshape(-1), np.zeros(len(ops.channels))])
    ys = propagate(
        liou, liou.static, ops.drive_window, y0, t_start, t_end, t_eval,
        max_step=max_step, window_step=ops.pulse.fwhm / 10.0, method=method,
        rtol=rtol, atol=atol,
    )
    d = ops.dim
    states = ys[:, : d * d].reshape(-1, d, d)
    fluxes = ys[:, d * d :].real
    return Evolution(np.asarray(t_eval, dtype=float), states, fluxes,
                     tuple(c.name for c in ops.channels))


def photon_counting_distribution(
    rho0,
    ops: ModelOperators,
    t_start: float,
    t_end: float,
    channel: str = "cavity",
    n_max: int = 3,
    method: str = "auto",
) -> np.ndarray:
    """Distribution of the number of jumps through `channel` in [t_start, t_end].

    Integrates the number-resolved master equation
    d rho_n/dt = (L - J) rho_n + J rho_{n-1}, with the last block absorbing
    all counts >= n_max. Returns P(0), ..., P(n_max - 1), P(>= n_max).
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    rho0 = as_density_matrix(rho0, ops.dim)
    liou = Liouvillian(ops)
    n2 = liou.n2
    k = ops.channel_index(channel)
    ch = ops.channels[k]
    jump = jump_super(ch.op)
    nb = n_max + 1

    def blocks(gen_full, rate):
        lind = gen_full[:n2, :n2]
        jmp = rate * jump
        no_jump = lind - jmp
        big = np.zeros((nb * n2, nb * n2), dtype=complex)
        for n in range(nb):
            sl = slice(n * n2, (n + 1) * n2)
            big[sl, sl] = no_jump
            if n > 0:
                big[sl, (n - 1) * n2 : n * n2] = jmp
        last = slice(n_max * n2, nb * n2)
        big[last, last] += jmp
        return big

    static = blocks(liou.static, ch.rate)

    def generator(t):
        return blocks(liou(t), ch.rate_at(t))

    y0 = np.zeros(nb * n2, dtype=complex)
    y0[:n2] = rho0.reshape(-1)
    y = propagate(
        generator, static, ops.drive_window, y0, t_start, t_end, [t_end],
        window_step=ops.pulse.fwhm / 10.0, method=method,
    )[0]
    d = ops.dim
    probs = np.array([np.trace(y[n * n2 : (n + 1) * n2].reshape(d, d)).real for n in range(nb)])
    return probs
