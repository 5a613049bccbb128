"""Face morphing and demorphing with a bipartite-attention generator.

A small reverse-mode autodiff core drives a compositional-latent generator,
a four-term face loss for latent inversion, latent morph/demorph algebra and
exact vulnerability and detection metrics.
"""

from .config import RunConfig, load_config, parse_config
from .embedding import EmbeddingResult, OptimizationConfig, embed_image, init_latent, optimize_noise
from .errors import (ConfigError, FormatError, MorphLabError, NoDataError, NonFiniteError,
                     OptimizationError, ShapeError, TapeError)
from .generator import (Generator, GeneratorConfig, NoiseBank, bipartite_attention,
                        discriminator_forward, generator_forward, init_discriminator_params,
                        init_generator_params, mapping_forward, synthesis_forward)
from .losses import FaceLoss, LossWeights, biometric_loss, mse_loss, perceptual_loss, total_loss, wing_loss
from .metrics import (DemorphTrial, MorphTrial, accuracy, acer, apcer, bpcer, d_eer,
                      demorph_accuracy, detection_report, fmr_threshold, mmpmr)
from .morph import MorphSpec, demorph_image, demorph_latents, morph_images, morph_latents
from .optim import AdamState, adam_step
from .tensor import Tape, Tensor, backward, grad_check, value_and_grad
from .training import gan_smoke_train, procedural_faces

__version__ = "0.1.0"
