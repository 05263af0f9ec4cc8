"""Numerical toolkit for Inoue-Bombieri surfaces.

Modules
-------
algebraic
    Spectral data of the integer matrices defining the surfaces.
surfaces
    Surfaces, grids, gluing maps and reference forms.
metrics
    Hermitian metrics, the function G(omega) and the Gauduchon obstruction.
slf
    Leafwise Laplace solvers and the strongly leafwise flat pipeline.
flow
    Normalized Chern-Ricci flow, curvature and collapse diagnostics.
cli
    Batch command-line front end.
"""

from .algebraic import liouville_margin, minimal_degree, spectral_sm, spectral_splus
from .errors import *  # noqa: F401,F403
from .flow import (
    chern_ricci_form,
    closed_form_family,
    collapse_diagnostics,
    curvature_sup,
    ncrf_run,
    omega_inf_multiple_numeric,
    stretch_diagnostic,
)
from .metrics import (
    CoordinateMetricField,
    HermitianMetricField,
    frame_coordinate_convert,
    g_of_omega,
    gauduchon_defect,
    metric_from_potential,
    obstruction_pairing,
    tv_metric,
)
from .slf import (
    bounded_ode_solve,
    reduce_to_cell,
    slf_defect,
    slf_pipeline,
    solve_sm,
    solve_splus,
)
from .surfaces import (
    build_sm,
    build_splus,
    domain_grid,
    glue_transform_sm,
    leafwise_laplacian_apply,
    surface_report,
)

__version__ = "0.1.0"
