"""Eigenfunctions of integrable billiards with wavelength-scale localization and obstruction residuals."""

from .billiards import (
    BilliardSpec,
    DiskExpansion,
    FieldGrid,
    TrigExpansion,
    disk_expansion,
    eigenspace_basis,
    expansion,
    robin_eigenfunction,
    robin_frequencies,
)
from .estimators import LocalizedEigenfunction, PlaneWaveFit
from .kernel import covariance_deviation, kernel_vs_bessel, reproducing_kernel
from .lattice import LatticeShell, QuadraticForm, enumerate_shell, representation_count
from .localize import (
    CellDecomposition,
    LocalizationJob,
    RunConfig,
    SymmetryViolation,
    build_fixed_point,
    build_localized,
    localization_error,
)
from .nodal import count_nodal_domains, extract_nodal, find_critical_points, nesting_tree
from .obstruction import (
    JetVector,
    disk_constraint_residual,
    jet_at,
    plane_wave_distance,
    radial_samples,
    rectangle_variety_residual,
)
from .waves import BesselTranslateSum, HerglotzPolynomial, WaveSpec

__version__ = "0.1.0"
