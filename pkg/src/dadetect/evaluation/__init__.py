from .ap import AP_RULES, ClassEval, EvalReport, average_precision, evaluate, load_detections
from .report import (
    ablation_markdown,
    ablation_table,
    draw_boxes,
    emit_eval_report,
    image_grid,
    save_grid,
    write_ablation_table,
)

__all__ = [
    "AP_RULES",
    "ClassEval",
    "EvalReport",
    "average_precision",
    "evaluate",
    "load_detections",
    "ablation_markdown",
    "ablation_table",
    "draw_boxes",
    "emit_eval_report",
    "image_grid",
    "save_grid",
    "write_ablation_table",
]
