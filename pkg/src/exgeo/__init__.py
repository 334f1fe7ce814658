"""Numerical toolkit for the geometry of Gaussian excursion sets:
field simulation, Lipschitz-Killing curvature estimation, Hermite chaos
coefficients, Kac-Rice oracles, and CLT experiments."""

__version__ = "0.1.0"

from .covariance import (CovarianceModel, SigmaMatrix, build_sigma,
                         check_assumptions, get_model, make_gaussian_cov, mu4)
from .fieldsim import FieldSample, Grid, restrict_to_flat, simulate
from .flats import (Flat, flag_coefficient, grassmannian_mass, kappa, omega,
                    rho, sample_affine_flat_hitting, sample_linear_flat)
from .lkc import (LKEstimate, crofton_lkc, direct_lk_2d, euler_char_1d,
                  euler_char_2d, zeta_epsilon, zeta_morse)
from .variance import lower_bound, sigma2_q1_integral, variance_breakdown
