"""kdvlab: a numerical lab for third-order dispersive equations with variable coefficients.

The package covers

* periodic spectral primitives (``kdvlab.spectral``),
* coefficient expressions and the well-posedness classifier (``kdvlab.coefficients``),
* the dispersion-normalizing gauge and power gauges (``kdvlab.gauge``),
* linear evolution and its probes (``kdvlab.linear``),
* quasilinear models with a positivity guard (``kdvlab.quasilinear``),
* discrete operator spectra and the Liouville normal form (``kdvlab.spectrum``),
* scenario files, the runner and the ``kdvlab`` command (``kdvlab.config``,
  ``kdvlab.runner``, ``kdvlab.cli``).
"""

__version__ = "0.1.0"

from .coefficients import CoefficientSet, WellPosedness, WellPosednessVerdict, classify
from .gauge import GaugeTransform, PowerGauge, PowerGaugeKind, build_gauge, verify_gauge
from .integrators import IntegratorConfig, Scheme
from .linear import ProbeRefused, exact_propagator, integrate, reversibility_probe, wave_packet_experiment
from .quasilinear import QuasilinearEquation, QuasilinearKind, energy_cascade_monitor, evolve_quasilinear
from .spectral import Field, MollifierSpec, PeriodicGrid
from .spectrum import dichotomy_probe, liouville_transform

__all__ = [
    "__version__",
    "CoefficientSet",
    "WellPosedness",
    "WellPosednessVerdict",
    "classify",
    "GaugeTransform",
    "PowerGauge",
    "PowerGaugeKind",
    "build_gauge",
    "verify_gauge",
    "IntegratorConfig",
    "Scheme",
    "ProbeRefused",
    "exact_propagator",
    "integrate",
    "reversibility_probe",
    "wave_packet_experiment",
    "QuasilinearEquation",
    "QuasilinearKind",
    "energy_cascade_monitor",
    "evolve_quasilinear",
    "Field",
    "MollifierSpec",
    "PeriodicGrid",
    "dichotomy_probe",
    "liouville_transform",
]
