"""reformguard: reformulate-and-vote defense against adversarial and backdoor
text attacks, with an attack simulator, distillation losses, an evaluation
harness, and an HTTP gateway."""

from .attacksim import (
    ClassifierError,
    ClassifierOracle,
    PerturbBudget,
    TriggerKind,
    TriggerSpec,
    char_perturb,
    inject_sentence_trigger,
    inject_word_trigger,
    poison_dataset,
    sem_sim,
    strip_injected_trigger,
    synonym_perturb,
)
from .config import DefenseConfig, load_config
from .corpus import (
    AttackTag,
    DatasetError,
    LabeledDataset,
    Sample,
    load_jsonl,
    sample_subset,
    save_jsonl,
)
from .distill import (
    ExtractionPair,
    ExtractionResult,
    LogitSequence,
    TargetTokenSequence,
    TokenDistributionSequence,
    build_extraction_dataset,
    combined_loss,
    hard_label_loss,
    soft_label_loss,
    temperature_softmax,
)
from .ensemble import ModuleVerdict, VoteResult, defend_classify, vote
from .metrics import (
    Condition,
    EvalReport,
    PredictionRecord,
    accuracy,
    attack_success_rate,
    build_report,
    render_table,
)
from .reformulate import (
    DELIMITER,
    GenerationParams,
    LlmBackend,
    PromptTemplate,
    ReformOutcome,
    ReformulationEngine,
    Task,
    reformulate_batch,
    render_prompt,
    sanitize,
    split_batch_response,
)

__version__ = "0.1.0"
