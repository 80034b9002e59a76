"""templm: distill a conditional LM into a template-based data-to-text generator."""

from .backend import (
    END_TOKEN,
    ConditioningContext,
    LMBackend,
    TokenDistribution,
    linearize_data,
)
from .core import (
    ClusterKey,
    ClusterPolicy,
    DataInput,
    FilledOutput,
    Template,
    TemplateToken,
    cluster_key,
    fields_of,
    fill,
    parse_template_tokens,
)
from .evaluation import (
    PhraseTable,
    audit_lexicalized,
    bleu,
    load_starter_table,
    match_phrasings,
    precision_errors,
    recall_errors,
    rouge_l,
)
from .extraction import RecombinationPlan, delexicalize, extract_initial, recombine
from .inference import output_is_faithful, realize, select_content
from .ngram import NGramBackend, NGramModel, train_ngram
from .refinement import (
    GapContext,
    consensus_beam_search,
    find_ungeneralizable_spans,
    heuristic_chunker,
    refine,
    token_generalizability,
)
from .remote import RemoteBackend
from .templateset import TemplateSet
from .validation import template_generalizability, validate_cluster

__version__ = "0.1.0"

__all__ = [
    "ClusterKey",
    "ClusterPolicy",
    "ConditioningContext",
    "DataInput",
    "END_TOKEN",
    "FilledOutput",
    "GapContext",
    "LMBackend",
    "NGramBackend",
    "NGramModel",
    "PhraseTable",
    "RecombinationPlan",
    "RemoteBackend",
    "Template",
    "TemplateSet",
    "TemplateToken",
    "TokenDistribution",
    "audit_lexicalized",
    "bleu",
    "cluster_key",
    "consensus_beam_search",
    "delexicalize",
    "extract_initial",
    "fields_of",
    "fill",
    "find_ungeneralizable_spans",
    "heuristic_chunker",
    "linearize_data",
    "load_starter_table",
    "match_phrasings",
    "output_is_faithful",
    "parse_template_tokens",
    "precision_errors",
    "realize",
    "recall_errors",
    "recombine",
    "refine",
    "rouge_l",
    "select_content",
    "template_generalizability",
    "token_generalizability",
    "train_ngram",
    "validate_cluster",
    "__version__",
]
