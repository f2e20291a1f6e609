"""Scenario description for pulse-train simulations."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

from ..core.model import HilbertConfig, SystemModel

REP_PERIOD_82MHZ = 1e12 / 82e6  # ps
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class DetectorModel:
    """Detection channel: efficiency (including setup losses), Gaussian timing
    jitter, dead time and dark-count rate (1/ps)."""

    jitter_fwhm: float = 400.0
    efficiency: float = 1.0
    dead_time: float = 0.0
    dark_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("detector efficiency must lie in [0, 1]")
        if self.jitter_fwhm < 0 or self.dead_time < 0 or self.dark_rate < 0:
            raise ValueError("jitter, dead time and dark rate must be >= 0")

    @property
    def jitter_sigma(self) -> float:
        return self.jitter_fwhm * FWHM_TO_SIGMA


@dataclass(frozen=True)
class Blinking:
    """Two-state telegraph process gating emission; rates in 1/ps."""

    rate_on_to_off: float
    rate_off_to_on: float

    def __post_init__(self):
        if self.rate_on_to_off < 0 or self.rate_off_to_on <= 0:
            raise ValueError("need rate_on_to_off >= 0 and rate_off_to_on > 0")

    @property
    def duty_cycle(self) -> float:
        """Stationary probability of the on state."""
        return self.rate_off_to_on / (self.rate_on_to_off + self.rate_off_to_on)

    def correlation_length(self, rep_period: float) -> float:
        """Decay length, in pulse periods, of the on-state autocorrelation."""
        return 1.0 / ((self.rate_on_to_off + self.rate_off_to_on) * rep_period)

    @classmethod
    def from_duty_cycle(cls, duty_cycle: float, correlation_time: float) -> "Blinking":
        """Rates giving stationary on-fraction `duty_cycle` and correlation time (ps)."""
        if not 0.0 < duty_cycle <= 1.0 or correlation_time <= 0:
            raise ValueError("need 0 < duty_cycle <= 1 and correlation_time > 0")
        total = 1.0 / correlation_time
        return cls(rate_on_to_off=(1.0 - duty_cycle) * total, rate_off_to_on=duty_cycle * total)


@dataclass(frozen=True)
class Background:
    """Uncorrelated photons per pulse: Poisson mean `mean_photons`, arrival
    delayed by an exponential of mean `tau` (ps) after the pulse."""

    mean_photons: float = 0.0
    tau: float = 1000.0

    def __post_init__(self):
        if self.mean_photons < 0 or self.tau <= 0:
            raise ValueError("need mean_photons >= 0 and tau > 0")


@dataclass(frozen=True)
class ExperimentScenario:
    model: SystemModel
    n_pulses: int = 100_000
    rep_period: float = REP_PERIOD_82MHZ
    detector: DetectorModel = field(default_factory=DetectorModel)
    blinking: Optional[Blinking] = None
    background: Background = field(default_factory=Background)
    base_seed: int = 0
    n_fock: int = 2
    max_step: float = 2.0

    def __post_init__(self):
        if self.n_pulses < 1:
            raise ValueError("n_pulses must be >= 1")
        if not self.rep_period > 20.0 * self.model.pulse.fwhm:
            raise ValueError("rep_period must exceed 20 pulse widths")
        if self.model.pulse.window[1] >= self.rep_period:
            raise ValueError("pulse must end within one period")
        if self.max_step <= 0:
            raise ValueError("max_step must be positive")

    @property
    def hilbert(self) -> HilbertConfig:
        return HilbertConfig(self.n_fock)

    def with_(self, **changes) -> "ExperimentScenario":
        return dataclasses.replace(self, **changes)

    def with_model(self, **changes) -> "ExperimentScenario":
        return dataclasses.replace(self, model=self.model.with_(**changes))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """Stable hash of every scenario parameter."""
        text = json.dumps(self.to_dict(), sort_keys=True, default=repr)
        return hashlib.sha256(text.encode()).hexdigest()[:16]
