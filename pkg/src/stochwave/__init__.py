"""stochwave: a simulation lab for the 3D stochastic wave equation.

Subpackages mirror the pipeline: covariance kernels and their exponents
(`kernels`), correlated noise sampling with dyadic smoothings and shifts
(`noise`), the wave fundamental solution machinery (`wavekernel`), the
mild-form integrator (`solver`), Holder-norm estimation (`holder`), and
the experiment harness/CLI (`harness`, `cli`).
"""

from ._core import HAVE_COMPILED

__version__ = "0.1.0"

__all__ = ["HAVE_COMPILED", "__version__"]
