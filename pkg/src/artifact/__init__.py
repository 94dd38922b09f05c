"""Numerical experiments on time changes of unipotent flows over SL(2,Z) quotients."""
from .kernels import BACKEND
from .liealg import (
    ChartError,
    FrameError,
    GroupElement,
    Sl2Frame,
    TrackParams,
    assemble,
    catalog_frame,
    decompose_near_identity,
    frame_residuals,
)
from .quotient import LatticeSpec, QuotientPoint, check_FBR, check_IC, flow_a, flow_u, quotient_distance, reduce
from .timechange import (
    Conjugacy,
    TimeChange,
    build_coboundary_conjugacy,
    deviation_exponent,
    siegel_observable,
    w,
    xi,
    z,
)
from .tracking import TrackState, l_eps, sublevel_components, track_q
from .polybound import IntervalCollection, check_coeff_bounds, solovay_find_block
from .blocks import BasicLemmaConfig, basic_lemma_pipeline, build_blocks, coboundary_testbed, superblocks
from .rigidity import cohomology_residual, normaliser_transport, psi_t_convergence, sample_good_points

__version__ = "0.1.0"
