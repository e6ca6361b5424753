"""Skeleton action recognition: a conv-transformer encoder, BYOL pre-training
and supervised/semi-supervised evaluation, built on a small numpy autodiff core."""
from .augment import AugmentConfig, make_views
from .byol import ByolConfig, pretrain
from .checkpoint import load_checkpoint
from .config import ExperimentConfig, load_config
from .errors import (CheckpointError, ConfigError, DegenerateInputError, ManifestError,
                     NonFiniteError, RelsarError, ShapeError)
from .model import Encoder, EncoderConfig, count_params, estimate_flops
from .skeleton import DEFAULT_JOINT_MAP, ExperimentManifest, JointMap, load_split
from .supervised import (EvalReport, TrainRecipe, evaluate, finetune, run_recipe, semi_supervised,
                         train_supervised)
from .synth import SynthSpec, synth_dataset

__version__ = "0.1.0"
