from .dgb import BootstrapPlan, dgb_rank
from .jpta import JptaModel, jpta_fit, jpta_select, spline_basis
from .lmm import LmmResult, lmm_pvalue, lmm_view_pvalues
from .scores import CombinedP, VariableScoreTable, fisher_combine, normalize_scores

__all__ = [
    "BootstrapPlan", "dgb_rank", "JptaModel", "jpta_fit", "jpta_select", "spline_basis",
    "LmmResult", "lmm_pvalue", "lmm_view_pvalues", "CombinedP", "VariableScoreTable",
    "fisher_combine", "normalize_scores",
]
