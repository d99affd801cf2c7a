"""cape: deterministic capability verification.

Parse model outputs into PredicateGraphs, evaluate CPL policies against
them with deterministic tier-ordered verdicts, correct violations with
mandatory re-verification, run the verify-correct-train loop over
pluggable providers, and score policy-pack adherence.
"""

from .correction import (
    CONSTRAINED_REWRITE,
    DETERMINISTIC_PATCH,
    TEMPLATE_INSERT,
    CorrectionResult,
    Patch,
    apply_deterministic,
    apply_template,
    correct,
    select_strategy,
    serialize_correction_result,
)
from .cpl import (
    EvalEnv,
    LintWarning,
    Policy,
    Scope,
    ViolationAction,
    eval_expr,
    lint_policy,
    parse_expr,
    parse_policy,
)
from .errors import (
    ConfigError,
    DocumentSyntaxError,
    DuplicateIdError,
    EmptyInputError,
    EngineError,
    EvalError,
    EvalErrorKind,
    ExprError,
    MissingCaseError,
    PackError,
    PatchError,
    PolicyError,
    ProviderError,
    RubricError,
    SchemaError,
    TemplateError,
)
from .graph import (
    Citation,
    Claim,
    CodeBlock,
    Entity,
    Operation,
    PredicateGraph,
    Span,
    ToolCall,
    canonical_serialize,
    parse_graph,
    validate_graph,
)
from .loop import (
    LoopConfig,
    LoopReport,
    ProviderSet,
    TrainingExample,
    run_loop,
    violation_stats,
)
from .meta import (
    Issue,
    MetaAssessment,
    RewardComponents,
    Rubric,
    VerifierAnalysis,
    meta_filter,
    reward,
    score_to_level,
    validate_rubric,
)
from .packs import AdherenceProfile, PolicyPack, load_pack, render_profile, run_pack
from .verifier import (
    PolicyResult,
    Verdict,
    Violation,
    evaluate_pack,
    evaluate_policy,
    resolve_order,
    serialize_verdict,
)

__version__ = "0.1.0"

__all__ = [
    "AdherenceProfile",
    "CONSTRAINED_REWRITE",
    "Citation",
    "Claim",
    "CodeBlock",
    "ConfigError",
    "CorrectionResult",
    "DETERMINISTIC_PATCH",
    "DocumentSyntaxError",
    "DuplicateIdError",
    "EmptyInputError",
    "EngineError",
    "Entity",
    "EvalEnv",
    "EvalError",
    "EvalErrorKind",
    "ExprError",
    "Issue",
    "LintWarning",
    "LoopConfig",
    "LoopReport",
    "MetaAssessment",
    "MissingCaseError",
    "Operation",
    "PackError",
    "Patch",
    "PatchError",
    "Policy",
    "PolicyError",
    "PolicyPack",
    "PolicyResult",
    "PredicateGraph",
    "ProviderError",
    "ProviderSet",
    "RewardComponents",
    "Rubric",
    "RubricError",
    "SchemaError",
    "Scope",
    "Span",
    "TEMPLATE_INSERT",
    "TemplateError",
    "ToolCall",
    "TrainingExample",
    "Verdict",
    "VerifierAnalysis",
    "Violation",
    "ViolationAction",
    "apply_deterministic",
    "apply_template",
    "canonical_serialize",
    "correct",
    "eval_expr",
    "evaluate_pack",
    "evaluate_policy",
    "lint_policy",
    "load_pack",
    "meta_filter",
    "parse_expr",
    "parse_graph",
    "parse_policy",
    "render_profile",
    "resolve_order",
    "reward",
    "run_loop",
    "run_pack",
    "score_to_level",
    "select_strategy",
    "serialize_correction_result",
    "serialize_verdict",
    "validate_graph",
    "validate_rubric",
    "violation_stats",
    "__version__",
]
