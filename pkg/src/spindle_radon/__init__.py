"""Apple and lemon spindle-torus Radon transforms.

Set ``SPINDLE_RADON_NO_NUMBA=1`` before import to run the pure-numpy kernels.
"""
__version__ = "0.1.0"

from .errors import (DegeneratePointError, DivergenceError, InvalidParamsError, InvalidSampleError,
                     PhantomSupportError, SizeLimitError, SpindleRadonError, UnsupportedFamilyError,
                     WindowError)
from .geometry import QuadratureSpec, SurfaceKind, TorusParams, parametrize_surface, psi, grad_psi
from .volume import GridSpec, VoxelGrid, load_volume, save_volume
from .transforms import (DataGrid, RestrictedParams, SurfaceProjector, adjoint_project, apple_transform,
                         forward_project, lemon_transform, restricted_transform)
from .microlocal import Family, bolker_scan, cone_angle, predict_artifacts
from .phantoms import Ball, GaussianBlob, PhantomSpec, Shell, rasterize
from .recon import LandweberConfig, artifact_experiment, estimate_operator_norm, landweber
from .wavefront import WavefrontQuery, wf_detect
