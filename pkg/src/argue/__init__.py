"""Anomaly detection by gated expert autoencoder paths with an activation alarm."""

from .baseline import AeBaseline, ae_score, train_ae
from .clustering import ClusterAssignment, assign_by_algorithm, assign_by_attribute, assign_by_class
from .datasets import Dataset, ScalerState, SplitSpec, apply_scale, fit_scale, load_csv, load_idx, make_split
from .metrics import EvalResult, average_precision, roc_auc, wilcoxon_signed_rank
from .model import ArgueConfig, ArgueModel, build, score
from .persistence import load_model, save_model
from .trainer import TrainConfig, pretrain, train_argue, train_detector

__version__ = "0.1.0"
