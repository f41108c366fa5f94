"""k-coverage of the flat torus by random balls: critical points of the k-NN
distance function, coverage decisions and critical-window statistics."""

from .constants import ConstantEstimate, estimate_Cd
from .coverage import (Covered, CoverageVerdict, VacancyReport, is_covered, is_covered_grid,
                       is_covered_morse, vacancy_components)
from .critical import (CriticalPoint, EnumerationWindow, classify_subset, count_by_index,
                       enumerate_critical_points, enumerate_reference)
from .euler import euler_characteristic, expected_euler_curve, fit_euler_form
from .knn import SpatialIndex, build_index, count_in_ball, knn_distance, knn_distances
from .pointcloud import PointCloud, SeedSpec, from_coords, sample_fixed, sample_poisson
from .torus import circumsphere, in_open_simplex, lift, torus_distance
from .window import GofReport, MarkedPoint, WindowConfig, collect_xi, gof_poisson

__version__ = "0.1.0"
