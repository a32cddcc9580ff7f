"""Stance-classification evaluation harness.

Corpus filtering and splitting, annotator aggregation, prompting-strategy
compilation (including the two-phase scoring + reflective re-read method),
endpoint clients with a deterministic mock, response parsing, and macro
metrics with class-wise reports.
"""

from .annotation import (
    AgreementReport,
    AnnotationRow,
    NoMajorityError,
    agreement_report,
    assign_gold_labels,
    fleiss_kappa,
    majority_label,
    majority_vote,
)
from .corpus import (
    DatasetSplit,
    KeywordFilter,
    LabeledComment,
    RawComment,
    deduplicate,
    filter_by_keywords,
    keyword_frequency,
    label_distribution,
    load_corpus,
    load_labeled_corpus,
    split_dataset,
    temporal_distribution,
    truncate_text,
)
from .labels import ALL_LABELS, StanceLabel, decode_label, encode_label
from .llm import (
    CompletionResult,
    EndpointConfig,
    MockRules,
    RetryPolicy,
    complete,
    load_mock_rules,
    mock_complete,
)
from .metrics import (
    ConfusionMatrix,
    MetricsReport,
    accuracy,
    class_metrics,
    confusion_matrix,
    f1_score,
    macro_f1_paper,
    macro_f1_per_class_avg,
    macro_precision,
    macro_recall,
    metrics_report,
)
from .parse import (
    ParsedPrediction,
    ParseError,
    ScoreParseError,
    ScoreTriple,
    parse_label,
    parse_scores,
)
from .prompt import (
    STRATEGIES,
    Exemplar,
    PromptPhase,
    PromptPlan,
    Strategy,
    build_plan,
    get_strategy,
    render_phase,
    select_exemplars,
)
from .runner import (
    EvalReport,
    RunConfig,
    RunRecord,
    emit_report,
    report_from_records,
    run_evaluation,
)
from .vectorize import (
    LinearModel,
    SparseVector,
    TrainConfig,
    Vocabulary,
    bow_vector,
    fit_baseline,
    fit_vocabulary,
    predict_linear,
    tfidf_vector,
    tokenize,
    train_linear_baseline,
)

__version__ = "0.1.0"
