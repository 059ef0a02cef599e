from .metrics import compute_miou, compute_f1, per_frame_iou, per_frame_f1, MetricsReport, ClipMetrics
from .evaluator import predict_logits, predict_clip, evaluate, evaluate_predictions, robustness_eval, write_robustness, summary_frame, plot_robustness, condition_label

__all__ = [
    'compute_miou',
    'compute_f1',
    'per_frame_iou',
    'per_frame_f1',
    'MetricsReport',
    'ClipMetrics',
    'predict_logits',
    'predict_clip',
    'evaluate',
    'evaluate_predictions',
    'robustness_eval',
    'write_robustness',
    'summary_frame',
    'plot_robustness',
    'condition_label',
]

classes = __all__
