"""Physical parameters and operator construction for the driven QD-cavity model.

Energies are in micro-electronvolts (ueV), times in picoseconds, rates in 1/ps.
The frame rotates at the laser frequency and the drive is treated in the
rotating-wave approximation.
"""
from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import erf

HBAR = 658.2119  # ueV * ps

_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


class WeakCouplingWarning(UserWarning):
    pass


def ueV_to_rate(energy):
    """Convert an energy in ueV to an angular rate in 1/ps."""
    return energy / HBAR


def rate_to_ueV(rate):
    return rate * HBAR


def _check_finite(**values):
    for name, v in values.items():
        if not np.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class HilbertConfig:
    """Truncation of the QD (two-level) x cavity (Fock) space."""

    n_fock: int = 2

    def __post_init__(self):
        if isinstance(self.n_fock, bool) or int(self.n_fock) != self.n_fock or self.n_fock < 1:
            raise ValueError(f"n_fock must be an integer >= 1, got {self.n_fock!r}")

    @property
    def dim(self) -> int:
        return 2 * (self.n_fock + 1)

    def index(self, excited: bool, photons: int) -> int:
        if not 0 <= photons <= self.n_fock:
            raise ValueError("photon number outside truncation")
        return int(excited) * (self.n_fock + 1) + photons

    def basis(self, excited: bool, photons: int) -> np.ndarray:
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.index(excited, photons)] = 1.0
        return psi

    def projector(self, excited: bool, photons: int) -> np.ndarray:
        psi = self.basis(excited, photons)
        return np.outer(psi, psi.conj())

    # basic operators -----------------------------------------------------
    def sigma_minus(self) -> np.ndarray:
        sm = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
        return np.kron(sm, np.eye(self.n_fock + 1))

    def annihilation(self) -> np.ndarray:
        a = np.diag(np.sqrt(np.arange(1, self.n_fock + 1)), k=1).astype(complex)
        return np.kron(np.eye(2), a)

    def excited_projector(self) -> np.ndarray:
        sm = self.sigma_minus()
        return sm.conj().T @ sm

    def photon_number(self) -> np.ndarray:
        a = self.annihilation()
        return a.conj().T @ a


@dataclass(frozen=True)
class PulseShape:
    """Gaussian Rabi-frequency envelope, truncated at +-`truncation` sigma.

    `fwhm` is the full width at half maximum of Omega(t). The truncated
    envelope is renormalised so its time integral equals `area` exactly.
    """

    area: float = math.pi
    fwhm: float = 1.3
    center: float = 5.0
    envelope: str = "gaussian"
    truncation: float = 5.0

    def __post_init__(self):
        if self.envelope != "gaussian":
            raise ValueError(f"unsupported envelope {self.envelope!r}")
        _check_finite(area=self.area, fwhm=self.fwhm, center=self.center)
        if self.fwhm <= 0:
            raise ValueError("fwhm must be positive")
        if self.area < 0:
            raise ValueError("pulse area must be >= 0")

    @property
    def sigma(self) -> float:
        return self.fwhm * _FWHM_TO_SIGMA

    @property
    def window(self) -> tuple[float, float]:
        half = self.truncation * self.sigma
        return self.center - half, self.center + half

    @property
    def peak_rabi_frequency(self) -> float:
        norm = erf(self.truncation / math.sqrt(2.0))
        return self.area / (self.sigma * math.sqrt(2.0 * math.pi) * norm)

    def rabi_frequency(self, t):
        """Omega(t) in 1/ps; zero outside the truncation window."""
        t = np.asarray(t, dtype=float)
        x = (t - self.center) / self.sigma
        out = self.peak_rabi_frequency * np.exp(-0.5 * x * x)
        out = np.where(np.abs(x) <= self.truncation, out, 0.0)
        return out if out.ndim else float(out)

    def with_area(self, area: float) -> "PulseShape":
        return dataclasses.replace(self, area=float(area))


@dataclass(frozen=True)
class SystemModel:
    """Parameters of the driven dissipative QD-cavity system.

    g, kappa and the detunings are energies in ueV; gamma_leaky and
    gamma_dephasing are rates in 1/ps. `eid_coefficient` adds a
    drive-proportional dephasing rate eid_coefficient*|Omega(t)| which damps
    Rabi oscillations exponentially in pulse area.
    """

    g: float
    kappa: float
    gamma_leaky: float
    gamma_dephasing: float = 0.0
    delta_qd_cavity: float = 0.0
    delta_laser_qd: float = 0.0
    pulse: PulseShape = field(default_factory=PulseShape)
    eid_coefficient: float = 0.0

    def __post_init__(self):
        _check_finite(
            g=self.g,
            kappa=self.kappa,
            gamma_leaky=self.gamma_leaky,
            gamma_dephasing=self.gamma_dephasing,
            delta_qd_cavity=self.delta_qd_cavity,
            delta_laser_qd=self.delta_laser_qd,
            eid_coefficient=self.eid_coefficient,
        )
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")
        for name in ("g", "gamma_leaky", "gamma_dephasing", "eid_coefficient"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.is_weakly_coupled:
            warnings.warn(
                f"g={self.g} ueV is not below kappa/4={self.kappa / 4} ueV; "
                "outside the weak-coupling regime",
                WeakCouplingWarning,
                stacklevel=2,
            )

    @property
    def is_weakly_coupled(self) -> bool:
        return self.g < self.kappa / 4.0

    @property
    def kappa_rate(self) -> float:
        return self.kappa / HBAR

    @property
    def purcell_factor(self) -> float:
        """Resonant Purcell factor 4 g^2 / (hbar kappa gamma_leaky)."""
        if self.gamma_leaky == 0:
            return math.inf
        return 4.0 * self.g**2 / (HBAR * self.kappa * self.gamma_leaky)

    def purcell_at(self, delta: float) -> float:
        """Purcell factor at QD-cavity detuning `delta` (Lorentzian in 2*delta/kappa)."""
        return self.purcell_factor / (1.0 + (2.0 * delta / self.kappa) ** 2)

    def with_(self, **changes) -> "SystemModel":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_purcell(cls, purcell_factor, kappa, gamma_leaky, **kwargs) -> "SystemModel":
        g = coupling_from_purcell(purcell_factor, kappa, gamma_leaky)
        return cls(g=g, kappa=kappa, gamma_leaky=gamma_leaky, **kwargs)

    @classmethod
    def from_lifetimes(cls, t_on, t_off, delta_off, kappa, **kwargs) -> "SystemModel":
        f_p, gamma_leaky = calibrate_from_lifetimes(t_on, t_off, delta_off, kappa)
        return cls.from_purcell(f_p, kappa, gamma_leaky, **kwargs)


def coupling_from_purcell(purcell_factor: float, kappa: float, gamma_leaky: float) -> float:
    """Invert F = 4 g^2 / (hbar kappa gamma) for g (ueV)."""
    if purcell_factor < 0 or kappa <= 0 or gamma_leaky < 0:
        raise ValueError("need purcell_factor >= 0, kappa > 0, gamma_leaky >= 0")
    return math.sqrt(purcell_factor * HBAR * kappa * gamma_leaky / 4.0)


def calibrate_from_lifetimes(t_on, t_off, delta_off, kappa):
    """Intrinsic Purcell factor and leaky rate reproducing two measured lifetimes.

    Solves 1/t_on = gamma (1 + F) and 1/t_off = gamma (1 + F / L) with
    L = 1 + (2 delta_off / kappa)^2, i.e. without neglecting the residual
    cavity enhancement at the off-resonant detuning.

    Returns
    -------
    (purcell_factor, gamma_leaky) with gamma_leaky in 1/ps.
    """
    if t_on <= 0 or t_off <= 0 or kappa <= 0:
        raise ValueError("lifetimes and kappa must be positive")
    ratio = t_off / t_on
    lorentz = 1.0 + (2.0 * delta_off / kappa) ** 2
    if not 1.0 <= ratio < lorentz:
        raise ValueError(
            f"lifetime ratio {ratio:.3f} not reachable at detuning {delta_off} ueV"
        )
    f_p = (ratio - 1.0) / (1.0 - ratio / lorentz)
    gamma = 1.0 / (t_on * (1.0 + f_p))
    return f_p, gamma


@dataclass(frozen=True)
class CollapseChannel:
    """Jump operator sqrt(rate(t)) * op.

    `rate` is the constant part; `rate_fn`, if set, returns the additional
    time-dependent part (1/ps).
    """

    name: str
    op: np.ndarray
    rate: float
    rate_fn: Optional[Callable[[float], float]] = None

    def rate_at(self, t) -> float:
        extra = self.rate_fn(t) if self.rate_fn is not None else 0.0
        return self.rate + extra

    @property
    def operator(self) -> np.ndarray:
        """The collapse operator with the constant rate folded in."""
        return math.sqrt(self.rate) * self.op

    @property
    def time_dependent(self) -> bool:
        return self.rate_fn is not None


@dataclass(frozen=True)
class ModelOperators:
    """Operators of the driven model.

    h0 is in ueV; the full Hamiltonian in 1/ps is
    h0/hbar + Omega(t)/2 * h_drive.
    """

    config: HilbertConfig
    model: SystemModel
    h0: np.ndarray
    h_drive: np.ndarray
    channels: tuple

    @property
    def dim(self) -> int:
        return self.config.dim

    @property
    def pulse(self) -> PulseShape:
        return self.model.pulse

    @property
    def drive_window(self) -> tuple[float, float]:
        if self.pulse.area == 0:
            return (math.inf, math.inf)
        return self.pulse.window

    def channel(self, name: str) -> CollapseChannel:
        for ch in self.channels:
            if ch.name == name:
                return ch
        raise KeyError(name)

    def channel_index(self, name: str) -> int:
        return [c.name for c in self.channels].index(name)

    def hamiltonian(self, t: float) -> np.ndarray:
        """H(t)/hbar in 1/ps."""
        return self.h0 / HBAR + 0.5 * self.pulse.rabi_frequency(t) * self.h_drive

    def rates(self, t: float) -> np.ndarray:
        return np.array([c.rate_at(t) for c in self.channels])

    def effective_hamiltonian(self, t: float) -> np.ndarray:
        """Non-Hermitian no-jump generator H - i/2 sum_c rate_c C^dag C (1/ps)."""
        h = self.hamiltonian(t).astype(complex)
        for c, r in zip(self.channels, self.rates(t)):
            h = h - 0.5j * r * (c.op.conj().T @ c.op)
        return h


def build_model_operators(cfg: HilbertConfig, model: SystemModel) -> ModelOperators:
    if not isinstance(cfg, HilbertConfig):
        raise TypeError("cfg must be a HilbertConfig")
    sm = cfg.sigma_minus()
    sp = sm.conj().T
    a = cfg.annihilation()
    ad = a.conj().T
    # rotating-frame energies relative to the laser
    e_qd = -model.delta_laser_qd
    e_cav = -model.delta_qd_cavity - model.delta_laser_qd
    h0 = e_qd * (sp @ sm) + e_cav * (ad @ a) + model.g * (sp @ a + sm @ ad)
    h_drive = sp + sm

    pulse = model.pulse
    eid = model.eid_coefficient
    deph_fn = None
    if eid > 0 and pulse.area > 0:
        def deph_fn(t, _p=pulse, _c=2.0 * eid):
            return _c * abs(_p.rabi_frequency(t))

    channels = (
        CollapseChannel("cavity", a, model.kappa / HBAR),
        CollapseChannel("leaky", sm, model.gamma_leaky),
        CollapseChannel("dephasing", sp @ sm, 2.0 * model.gamma_dephasing, deph_fn),
    )
    return ModelOperators(cfg, model, h0, h_drive, channels)


def expectation(op: np.ndarray, rho: np.ndarray, hermitian: Optional[bool] = None):
    """Tr(op rho). Returns a float for Hermitian `op`."""
    op = np.asarray(op)
    rho = np.asarray(rho)
    if op.shape != rho.shape or op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ValueError(f"dimension mismatch: {op.shape} vs {rho.shape}")
    val = np.einsum("ij,ji->", op, rho)
    if hermitian is None:
        hermitian = np.allclose(op, op.conj().T, atol=1e-14)
    if hermitian:
        if abs(val.imag) >= 1e-10:
            raise ValueError(f"expectation of Hermitian operator has imaginary part {val.imag}")
        return float(val.real)
    return complex(val)


def is_hermitian(mat: np.ndarray, rtol: float = 1e-12) -> bool:
    mat = np.asarray(mat)
    scale = max(np.linalg.norm(mat), 1e-300)
    return np.linalg.norm(mat - mat.conj().T) <= rtol * scale
