"""roadgen: learn road-layout distributions with a conditional denoising
model and emit filtered, scored, 3D road scenarios as OpenDRIVE files.

Submodules
----------
geo        map ingestion, projection, resampling, scenario normalization
diffusion  noise schedule, forward process, reverse-step arithmetic
nn         the 1D noise-prediction network and decoder rebalancing ops
training   hybrid loss, optimizer loop, checkpoints
sampling   conditional ancestral generation with skip-step striding
terrain    curvature-limited gradients and elevation profiles
sceneeval  continuity/overlap scoring and library filtering
metrics    Hausdorff, distribution divergences, smoothness, reports
xodr       OpenDRIVE 1.6 subset writer and parser
"""

__version__ = "0.1.0"

from . import diffusion, geo, metrics, sceneeval, terrain, xodr
from .diffusion import build_schedule, q_sample, posterior_params, reverse_step
from .nn import RoadUNet, ArchitectureDescriptor, FreeUConfig, predict_noise
from .training import TrainingConfig, loss_mse, loss_smooth, loss_total, train
from .checkpoint import save_checkpoint, load_checkpoint
from .sampling import SamplerConfig, build_timestep_subsequence, generate_scenario, generate_library
