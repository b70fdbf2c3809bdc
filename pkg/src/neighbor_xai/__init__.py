"""Neighbor-importance explanations for two-layer GNN node classifiers,
evaluated with deletion-based loyalty metrics."""

from .autodiff import BackpropMode, Tape, backward, relu_backward
from .explainers import (
    Explanation, MaskTrainConfig, PGExplainerConfig, PGExplainerModel,
    SmoothGradConfig, deconvnet_explain, explain, gnnexplainer,
    guided_explain, nonzero_neighbors, pgexplainer_explain, pgexplainer_train,
    read_explanations, saliency, smoothgrad, write_explanations,
)
from .graph import (
    Graph, Subgraph, delete_neighbors, khop_subgraph, load_graph, save_graph,
    set_self_loops,
)
from .metrics import (
    MetricCurve, all_deleted_loyalty, auc, loyalty, loyalty_probabilities,
    schedule,
)
from .models import (
    ModelConfig, Prediction, TrainedModel, forward, init_model,
    load_checkpoint, predict_all, save_checkpoint, train,
)
from .synth import (
    GADGET_CENTER, GADGET_PENDANT, make_pendant_gadget,
    make_planted_synthetic, make_random_graph, make_separable_synthetic,
)

__version__ = "0.1.0"
