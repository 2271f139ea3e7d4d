"""gatomics: multi-omics integration, statistical feature selection, and a
from-scratch graph attention classifier over protein-interaction networks."""

from .autodiff import Tape, Tensor, backward, grad_check
from .diffexpr import (EbPrior, ModeratedTests, PerFeatureStats, estimate_prior,
                       filter_by_p, group_stats, log2_plus_one, moderated_t,
                       select_differential)
from .gat import (BatchNormParams, GatLayerParams, GatModel, batch_norm_forward,
                  gat_layer_forward, init_params, load_model, model_forward,
                  predict, save_model)
from .lasso import (KktReport, LassoFit, LassoProblem, kkt_check, lambda_max,
                    lasso_fit, select_features_ovr, soft_threshold)
from .metrics import ConfusionMatrix, accuracy, confusion, macro_prf
from .omics import (IntegratedDataset, LabelEncoding, OmicsMatrix, SampleLabels,
                    encode_labels, integrate, load_labels, load_matrix,
                    standardize_columns)
from .ppi import (NodeFeatureSpec, PpiGraph, build_edge_index,
                  build_sample_graph_inputs, load_feature_map,
                  map_features_to_nodes, parse_edge_list, unmapped_values)
from .synth import SynthConfig, complementary_preset, generate
from .training import (CvReport, TrainConfig, adam_step, cross_validate, nll_loss,
                       stratified_kfold, train_fold)

__version__ = "0.1.0"
