from .clicks import (
    blinking_gate,
    calibrate_background,
    emitter_clicks,
    expected_g2,
    generate_click_stream,
    photon_number_moments,
)
from .lifetime import LifetimeTrace, emission_rate, lifetime_trace
from .rabi import (
    RabiCurve,
    cavity_filtered_drive,
    detuning_series,
    emission_probability,
    fit_rabi_curve,
    linear_dephasing_map,
    lorentzian_transmission,
    rabi_curve,
)
from .scenario import REP_PERIOD_82MHZ, Background, Blinking, DetectorModel, ExperimentScenario

__all__ = [
    "blinking_gate", "calibrate_background", "emitter_clicks", "expected_g2",
    "generate_click_stream", "photon_number_moments", "LifetimeTrace", "emission_rate",
    "lifetime_trace", "RabiCurve", "cavity_filtered_drive", "detuning_series",
    "emission_probability", "fit_rabi_curve", "linear_dephasing_map", "lorentzian_transmission",
    "rabi_curve", "REP_PERIOD_82MHZ", "Background", "Blinking", "DetectorModel",
    "ExperimentScenario",
]
