"""Monte Carlo wave-function (quantum jump) unravelling of the model.

Each trajectory evolves under the non-Hermitian generator
H_eff = H - i/2 sum_c rate_c C_c^dag C_c and jumps when its squared norm
falls below a uniform threshold. Step propagators are precomputed once per
sampler, and trajectories are advanced in vectorised batches. All random
numbers of trajectory k come from the counter-based stream (base_seed, k),
so results do not depend on batching or scheduling.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import expm

from .model import HBAR, ModelOperators
from .rng import uniforms


_GL3 = tuple(
    (0.5 + 0.5 * x, 0.5 * w) for x, w in zip(*np.polynomial.legendre.leggauss(3))
)


class TrajectoryError(RuntimeError):
    pass


@dataclass
class JumpEnsemble:
    """Result of a batch of trajectories.

    `clicks[name]` is a pair (trajectory_index, time) of equal-length arrays,
    sorted by trajectory then time.
    """

    n_trajectories: int
    clicks: dict
    record_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    excited_sum: Optional[np.ndarray] = None
    excited_sumsq: Optional[np.ndarray] = None
    photon_sum: Optional[np.ndarray] = None
    unfinished: int = 0
    first_index: int = 0

    def counts_per_trajectory(self, channel: str = "cavity") -> np.ndarray:
        """Jump count of each trajectory, assuming contiguous indices."""
        idx, _ = self.clicks[channel]
        return np.bincount(idx - self.first_index, minlength=self.n_trajectories)

    @property
    def excited_mean(self) -> np.ndarray:
        return self.excited_sum / self.n_trajectories

    @property
    def excited_stderr(self) -> np.ndarray:
        n = self.n_trajectories
        var = self.excited_sumsq / n - self.excited_mean**2
        return np.sqrt(np.maximum(var, 0.0) / n)

    @property
    def photon_mean(self) -> np.ndarray:
        return self.photon_sum / self.n_trajectories


class JumpSampler:
    """Precomputed quantum-jump propagation on a fixed time grid.

    Parameters
    ----------
    ops : model operators
    t_start, t_end : trajectory time span (ps)
    max_step : step outside the drive window (ps); sets the jump-time resolution
    pulse_step : step inside the drive window; default fwhm/40. Each step
        uses the 3-point Gauss-Legendre average of the generator.
    record_times : times at which ensemble populations are accumulated
    """

    def __init__(
        self,
        ops: ModelOperators,
        t_start: float,
        t_end: float,
        max_step: float = 1.0,
        pulse_step: Optional[float] = None,
        record_times: Sequence[float] = (),
    ):
        if not t_end > t_start:
            raise ValueError("t_end must exceed t_start")
        self.ops = ops
        self.t_start = float(t_start)
        self.t_end = float(t_end)
        pulse_step = pulse_step or ops.pulse.fwhm / 40.0
        w0, w1 = ops.drive_window
        self.window_end = w1 if math.isfinite(w1) else -math.inf
        record_times = np.asarray(sorted(record_times), dtype=float)
        if record_times.size and (record_times[0] < t_start or record_times[-1] > t_end):
            raise ValueError("record times outside trajectory span")
        cuts = {self.t_start, self.t_end, *record_times.tolist()}
        cuts |= {w for w in (w0, w1) if t_start < w < t_end}
        cuts = sorted(cuts)

        ends, u_index, rate_rows = [], [], []
        unique_u: list = []
        cache: dict = {}
        h_static = _static_effective_hamiltonian(ops)
        const_rates = np.array([c.rate for c in ops.channels])
        for a, b in zip(cuts[:-1], cuts[1:]):
            inside = a >= w0 and b <= w1
            n_sub = max(1, int(math.ceil((b - a) / (pulse_step if inside else max_step) - 1e-9)))
            edges = np.linspace(a, b, n_sub + 1)
            for t0, t1 in zip(edges[:-1], edges[1:]):
                dt = t1 - t0
                if inside:
                    h_avg = sum(w * ops.effective_hamiltonian(t0 + x * dt) for x, w in _GL3)
                    u = expm(-1j * h_avg * dt)
                    unique_u.append(u)
                    u_index.append(len(unique_u) - 1)
                    rate_rows.append(ops.rates(t1))
                else:
                    key = round(dt, 9)
                    if key not in cache:
                        unique_u.append(expm(-1j * h_static * dt))
                        cache[key] = len(unique_u) - 1
                    u_index.append(cache[key])
                    rate_rows.append(const_rates)
                ends.append(t1)
        self.step_ends = np.array(ends)
        self.propagators = np.array(unique_u)
        self.u_index = np.array(u_index)
        self.step_rates = np.array(rate_rows)
        self.jump_ops = np.array([c.op for c in ops.channels])
        self.channel_names = tuple(c.name for c in ops.channels)
        self.record_times = record_times
        self._record_at = {}
        for j, t in enumerate(record_times):
            if t == self.t_start:
                continue
            k = int(np.argmin(np.abs(self.step_ends - t)))
            self._record_at.setdefault(k, []).append(j)
        self._record_initial = [j for j, t in enumerate(record_times) if t == self.t_start]
        self._path_cache = None
        self._excited = ops.config.excited_projector().diagonal().real
        self._photons = ops.config.photon_number().diagonal().real

    # ------------------------------------------------------------------
    def run(
        self,
        psi0,
        n_trajectories: Optional[int] = None,
        base_seed: int = 0,
        indices: Optional[Sequence[int]] = None,
        record: bool = False,
        batch_size: int = 20000,
        n_workers: int = 1,
        prune_tol: Optional[float] = None,
    ) -> JumpEnsemble:
        """Sample trajectories `indices` (default ``range(n_trajectories)``)."""
        if indices is None:
            if n_trajectories is None:
                raise ValueError("give n_trajectories or indices")
            indices = np.arange(n_trajectories)
        indices = np.asarray(indices, dtype=np.int64)
        psi0 = np.asarray(psi0, dtype=complex)
        if psi0.shape != (self.ops.dim,):
            raise ValueError("initial state must be a pure state vector of the model dimension")
        nrm = np.linalg.norm(psi0)
        if not np.isclose(nrm, 1.0, atol=1e-12):
            raise ValueError("initial state must be normalised")
        if prune_tol is None:
            prune_tol = 1e-12 if record else math.inf
        batches = [indices[i : i + batch_size] for i in range(0, indices.size, batch_size)]
        job = lambda b: self._run_batch(psi0, b, base_seed, record, prune_tol)
        if n_workers > 1 and len(batches) > 1:
            with ThreadPoolExecutor(n_workers) as pool:
                parts = list(pool.map(job, batches))
        else:
            parts = [job(b) for b in batches]
        return self._merge(parts, indices, record)

    def _merge(self, parts, indices, record) -> JumpEnsemble:
        clicks = {}
        for c, name in enumerate(self.channel_names):
            idx = np.concatenate([p["clicks"][c][0] for p in parts]) if parts else np.empty(0, np.int64)
            tt = np.concatenate([p["clicks"][c][1] for p in parts]) if parts else np.empty(0)
            order = np.lexsort((tt, idx))
            clicks[name] = (idx[order], tt[order])
        ens = JumpEnsemble(
            n_trajectories=int(indices.size),
            clicks=clicks,
            record_times=self.record_times,
            unfinished=sum(p["unfinished"] for p in parts),
            first_index=int(indices.min()) if indices.size else 0,
        )
        if record:
            ens.excited_sum = sum(p["exc"] for p in parts)
            ens.excited_sumsq = sum(p["exc2"] for p in parts)
            ens.photon_sum = sum(p["pho"] for p in parts)
        return ens

    def _shared_path(self, psi0):
        """No-jump state at every step end, shared by all trajectories until their first jump."""
        key = psi0.tobytes()
        if self._path_cache is not None and self._path_cache[0] == key:
            return self._path_cache[1]
        states = np.empty((self.step_ends.size, psi0.size), dtype=complex)
        psi = psi0
        for k in range(self.step_ends.size):
            psi = self.propagators[self.u_index[k]] @ psi
            states[k] = psi
        norm2 = np.minimum.accumulate(np.einsum("ki,ki->k", states.conj(), states).real)
        self._path_cache = (key, (states, norm2))
        return states, norm2

    def _run_batch(self, psi0, indices, base_seed, record, prune_tol):
        nb = indices.size
        u = np.full((nb, 16), np.nan)
        for row, k in enumerate(indices):
            u[row] = uniforms(base_seed, k, 16)
        path, path_norm2 = self._shared_path(psi0)
        n_steps = self.step_ends.size
        first = np.searchsorted(-path_norm2, -u[:, 0], side="left")
        pending = np.argsort(first, kind="stable")
        pending = pending[first[pending] < n_steps]
        starts = first[pending]
        n_pending = pending.size
        nxt = 0

        nc = len(self.channel_names)
        click_rows = [[] for _ in range(nc)]
        click_times = [[] for _ in range(nc)]
        nrec = self.record_times.size
        exc = np.zeros(nrec)
        exc2 = np.zeros(nrec)
        pho = np.zeros(nrec)
        if record:
            # trajectories still on the shared no-jump path
            for k, js in self._record_at.items():
                m = nb - np.searchsorted(starts, k, side="right")
                prob = np.abs(path[k]) ** 2 / path_norm2[k]
                for j in js:
                    p_e = float(prob @ self._excited)
                    exc[j] += m * p_e
                    exc2[j] += m * p_e**2
                    pho[j] += m * float(prob @ self._photons)
            for j in self._record_initial:
                p_e = float(np.abs(psi0) ** 2 @ self._excited)
                exc[j] += nb * p_e
                exc2[j] += nb * p_e**2
                pho[j] += nb * float(np.abs(psi0) ** 2 @ self._photons)

        d = psi0.size
        psi = np.empty((0, d), dtype=complex)
        rows = np.empty(0, dtype=np.int64)
        thresh = np.empty(0)
        ptr = np.empty(0, dtype=np.int64)
        k = int(starts[0]) if n_pending else n_steps
        while k < n_steps:
            t1 = self.step_ends[k]
            if rows.size:
                psi = _apply(self.propagators[self.u_index[k]], psi)
            hi = nxt
            while hi < n_pending and starts[hi] == k:
                hi += 1
            if hi > nxt:
                new_rows = pending[nxt:hi]
                psi = np.concatenate([psi, np.tile(path[k], (new_rows.size, 1))])
                rows = np.concatenate([rows, new_rows])
                thresh = np.concatenate([thresh, u[new_rows, 0]])
                ptr = np.concatenate([ptr, np.ones(new_rows.size, dtype=np.int64)])
                nxt = hi
            n2 = np.einsum("bi,bi->b", psi.real, psi.real) + np.einsum("bi,bi->b", psi.imag, psi.imag)
            jumped = np.flatnonzero(n2 <= thresh)
            if jumped.size:
                jr = rows[jumped]
                pj = psi[jumped]
                cpsi = np.einsum("cij,bj->bci", self.jump_ops, pj)
                w = (np.abs(cpsi) ** 2).sum(axis=2) * self.step_rates[k][None, :]
                tot = w.sum(axis=1)
                if np.any(tot <= 0):
                    raise TrajectoryError(f"jump with vanishing rates at t={t1:.6g} ps")
                need = ptr[jumped] + 1 >= u.shape[1]
                if need.any():
                    u = self._extend(u, jr[need], indices, base_seed)
                need = np.isnan(u[jr, ptr[jumped] + 1])
                for row in jr[need]:
                    u[row] = uniforms(base_seed, indices[row], u.shape[1])
                uc = u[jr, ptr[jumped]]
                cdf = np.cumsum(w, axis=1) / tot[:, None]
                ch = np.minimum((cdf <= uc[:, None]).sum(axis=1), nc - 1)
                new = cpsi[np.arange(jumped.size), ch]
                new /= np.linalg.norm(new, axis=1)[:, None]
                psi[jumped] = new
                thresh[jumped] = u[jr, ptr[jumped] + 1]
                ptr[jumped] += 2
                for c in range(nc):
                    sel = ch == c
                    if sel.any():
                        click_rows[c].append(indices[jr[sel]])
                        click_times[c].append(np.full(int(sel.sum()), t1))
                n2[jumped] = 1.0
            if np.any(n2 < 1e-300):
                raise TrajectoryError(f"norm underflow without a jump at t={t1:.6g} ps")
            if record and k in self._record_at and rows.size:
                prob = np.abs(psi) ** 2 / n2[:, None]
                p_e = prob @ self._excited
                p_n = prob @ self._photons
                for j in self._record_at[k]:
                    exc[j] += p_e.sum()
                    exc2[j] += (p_e**2).sum()
                    pho[j] += p_n.sum()
            if t1 >= self.window_end and rows.size:
                # |g,0> is stationary once the drive is off: a trajectory whose
                # threshold lies below its ground weight can never jump again
                g0 = psi[:, 0].real ** 2 + psi[:, 0].imag ** 2
                keep = ~((thresh < g0) & (n2 - g0 <= prune_tol * n2))
                if not keep.all():
                    psi, rows, thresh, ptr = psi[keep], rows[keep], thresh[keep], ptr[keep]
            if rows.size:
                k += 1
            elif nxt < n_pending:
                k = int(starts[nxt])
            else:
                break

        unfinished = int(rows.size)
        if self.t_end < self.window_end:
            unfinished += n_pending - nxt
        else:
            never = u[:, 0] < path_norm2[-1]
            if n_steps and np.any(never):
                g0 = np.abs(path[-1, 0]) ** 2
                tail = path_norm2[-1] - g0 > prune_tol * path_norm2[-1]
                if tail:
                    unfinished += int(np.sum(never & (u[:, 0] >= g0)))
        clicks = []
        for c in range(nc):
            if click_rows[c]:
                clicks.append((np.concatenate(click_rows[c]), np.concatenate(click_times[c])))
            else:
                clicks.append((np.empty(0, np.int64), np.empty(0)))
        return {"clicks": clicks, "exc": exc, "exc2": exc2, "pho": pho, "unfinished": unfinished}

    @staticmethod
    def _extend(u, rows, indices, base_seed):
        new = np.full((u.shape[0], 2 * u.shape[1]), np.nan)
        new[:, : u.shape[1]] = u
        for row in rows:
            new[row] = uniforms(base_seed, indices[row], new.shape[1])
        return new


def _apply(u: np.ndarray, psi: np.ndarray) -> np.ndarray:
    # row-wise u @ psi_b with elementwise ops only, so each row's rounding
    # does not depend on the batch it sits in
    ut = u.T
    out = psi[:, 0, None] * ut[0]
    for j in range(1, ut.shape[0]):
        out += psi[:, j, None] * ut[j]
    return out


def _static_effective_hamiltonian(ops: ModelOperators) -> np.ndarray:
    """No-jump generator with the drive and drive-dependent rates switched off."""
    h = (ops.h0 / HBAR).astype(complex)
    for c in ops.channels:
        h = h - 0.5j * c.rate * (c.op.conj().T @ c.op)
    return h


def sample_jump_trajectory(
    psi0,
    ops: ModelOperators,
    t_start: float,
    t_end: float,
    rng_seed: int,
    index: int = 0,
    max_step: float = 1.0,
) -> dict:
    """Jump times per channel for the single trajectory (rng_seed, index)."""
    sampler = JumpSampler(ops, t_start, t_end, max_step=max_step)
    ens = sampler.run(psi0, base_seed=rng_seed, indices=[index])
    return {name: ens.clicks[name][1] for name in ens.clicks}
