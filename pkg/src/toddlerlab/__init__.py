"""
toddlerlab

Learn visual representations by interacting with objects: an agent in a small
3D playpen is trained with soft actor-critic to hold, kick and press props
under an intention, and its encoder is then evaluated with linear heads on
classification, distance estimation and localization.
"""

from ._runtime_version import resolve_package_version
from .agent import AgentNetwork, Decoder, Encoder, IntentionEmbedding, MlpEncoder
from .autodiff import ComputationRecord, Tape, Tensor, backward, no_grad
from .checkpoint import load_checkpoint, save_checkpoint
from .config import (
    AgentConfig,
    EnvConfig,
    RenderConfig,
    ReportConfig,
    RunConfig,
    SacConfig,
    TransferConfig,
    dump_config,
    load_config,
)
from .dataset import (
    Dataset,
    DistanceNormalizer,
    LabeledSample,
    fit_normalizer,
    generate_dataset,
    read_dataset,
    write_dataset,
)
from .environment import (
    EnvState,
    EvaluationResult,
    Playpen,
    PlaypenEnv,
    RewardTable,
    StepResult,
    evaluate_policy,
)
from .exceptions import (
    AutodiffException,
    CheckpointException,
    ConfigurationException,
    DatasetException,
    DimensionException,
    NumericalException,
    ProtocolException,
    ToddlerLabException,
    ValidationException,
)
from .models import (
    Action,
    AgentPose,
    BoundingBox,
    Color,
    Eye,
    Interaction,
    ObjectClass,
    ObjectGeometry,
    PropObject,
    Regime,
    RewardMode,
    Scene,
    StereoCamera,
    Task,
)
from .nn import ConvLayer, ConvTransposeLayer, LinearLayer, Module
from .optim import Adam, AdamState, adam_step
from .renderer import mask_to_bbox, render, silhouette_mask
from .report import ResultRow, write_report
from .sac import ReplayBuffer, Transition, greedy_policy, train
from .scene_builder import SceneBuilder
from .transfer import CellResult, iou, run_matrix, train_autoencoder, train_head

__version__ = resolve_package_version()
__all__ = [
    "Action",
    "Adam",
    "AdamState",
    "AgentConfig",
    "AgentNetwork",
    "AgentPose",
    "AutodiffException",
    "BoundingBox",
    "CellResult",
    "CheckpointException",
    "Color",
    "ComputationRecord",
    "ConfigurationException",
    "ConvLayer",
    "ConvTransposeLayer",
    "Dataset",
    "DatasetException",
    "Decoder",
    "DimensionException",
    "DistanceNormalizer",
    "Encoder",
    "EnvConfig",
    "EnvState",
    "EvaluationResult",
    "Eye",
    "IntentionEmbedding",
    "Interaction",
    "LabeledSample",
    "LinearLayer",
    "MlpEncoder",
    "Module",
    "NumericalException",
    "ObjectClass",
    "ObjectGeometry",
    "Playpen",
    "PlaypenEnv",
    "PropObject",
    "ProtocolException",
    "Regime",
    "RenderConfig",
    "ReplayBuffer",
    "ReportConfig",
    "ResultRow",
    "RewardMode",
    "RewardTable",
    "RunConfig",
    "SacConfig",
    "Scene",
    "SceneBuilder",
    "StepResult",
    "StereoCamera",
    "Tape",
    "Task",
    "Tensor",
    "ToddlerLabException",
    "TransferConfig",
    "Transition",
    "ValidationException",
    "adam_step",
    "backward",
    "dump_config",
    "evaluate_policy",
    "fit_normalizer",
    "generate_dataset",
    "greedy_policy",
    "iou",
    "load_checkpoint",
    "load_config",
    "mask_to_bbox",
    "no_grad",
    "read_dataset",
    "render",
    "run_matrix",
    "save_checkpoint",
    "silhouette_mask",
    "train",
    "train_autoencoder",
    "train_head",
    "write_dataset",
    "write_report",
    "__version__",
]
