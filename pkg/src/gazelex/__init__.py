"""Unknown-word detection for ESL readers from webcam-grade gaze traces.

The pipeline: condition a raw gaze trace (moving average, uniform
resampling), align it to the document under the uniform-reading-speed
assumption, extract one-second context windows, add knowledge features,
and classify tokens with a gaze/context/knowledge fusion model. A
synthetic-session generator provides ground truth at desk scale, and a
small HTTP service runs the pipeline for the browser reader.
"""

from .alignment import (
    AlignmentConfig,
    ContextWindow,
    ReadingSession,
    anticipate_word_times,
    attach_knowledge,
    build_dataset,
    chunk_gaze,
    extract_context,
    make_negatives,
    read_dataset,
    write_dataset,
)
from .corpus import (
    DocumentLayout,
    SubwordTokenizer,
    TokenizedDocument,
    WordBox,
    load_document,
    save_document,
    tokenize,
    train_vocab,
    word_token_spans,
)
from .errors import (
    AlignmentError,
    EvalError,
    GazeLexError,
    GenerationError,
    LayoutError,
    ModelError,
    TraceError,
    TrainingDiverged,
)
from .estimator import UnknownWordDetector, validate_windows
from .evalharness import (
    EvalReport,
    ablate,
    evaluate_windows,
    jaccard_matrix,
    metrics,
    run_protocol,
    split_cross_document,
    split_cross_user,
    split_random,
)
from .knowledge import (
    FrequencyTable,
    GazetteerNerTagger,
    KnowledgeFeatures,
    LexiconPosTagger,
    build_frequency_table,
    featurize,
    tf_bucket,
)
from .pipeline import (
    CorpusAssets,
    alignment_for_corpus,
    build_training_windows,
    condition_corpus,
    score_session,
    windows_for_all_words,
)
from .model import (
    EmbeddingStore,
    ForwardTrace,
    ModelConfig,
    bce_loss,
    forward,
    init_params,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)
from .signal import GazeSample, GazeTrace, condition, read_trace, resample, smooth, write_trace
from .synthgen import (
    DifficultyConfig,
    ReaderProfile,
    SynthCorpus,
    SynthSession,
    make_corpus,
    simulate_session,
)

__version__ = "0.1.0"
