from wassmark.ot.common import softmax_normalize
from wassmark.ot.cost import GroundCost
from wassmark.ot.sinkhorn import (
    ConvergenceWarning,
    LossResult,
    SinkhornConfig,
    TransportPlan,
    sinkhorn_gradient,
    sinkhorn_w1,
    solve_entropic,
    wasserstein_loss,
)
from wassmark.ot.exact import exact_w1
from wassmark.ot.losses import (
    js_divergence,
    js_divergence_loss,
    l2_heatmap_loss,
    l2_softmax_loss,
    soft_argmax_loss,
    soft_argmax_value,
)
