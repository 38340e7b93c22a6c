"""Second-pass language-model rescoring toolkit for segment lattices."""

from .errors import (
    BackendError,
    DecodeError,
    InvalidLatticeError,
    LatticeFormatError,
    MalformedResponseError,
    PathLimitExceededError,
    ResponseIdMismatchError,
    ScoreLengthMismatchError,
    ScorerError,
    ScorerTimeoutError,
)
from .lattice import (
    Arc,
    Lattice,
    LatticePath,
    Utterance,
    ValidationReport,
    best_path,
    concat,
    count_paths,
    enumerate_paths,
    read_utterances,
    validate,
    write_utterances,
)
from .decoder import (
    BeamTrace,
    DecoderConfig,
    EmissionMatrix,
    FusionConfig,
    LabelLM,
    SegmentDecodeResult,
    build_lattice,
    decode_segment,
    decode_utterance,
    read_emissions,
    write_emissions,
)
from .metrics import (
    Alignment,
    EvalReport,
    SalientTermSet,
    align,
    avg_paths_per_segment,
    oracle_wer,
    salient_terms,
    ster,
    wer,
)
from .rescore import (
    Hypothesis,
    RescoreParams,
    UtteranceRescore,
    combine,
    first_pass_transcript,
    nbest,
    rescore_segment,
    rescore_utterance,
)
from .scoring import (
    CachingScorer,
    NGramScorer,
    Scorer,
    UniformScorer,
    log_perplexity_per_word,
    ngram_train,
    score,
    score_split,
)
from .protocol import ProtocolScorer, ScoreRequest, ScoreResponse, protocol_score
from .tuner import TuneGrid, TuneResult, apply_params, tune

__version__ = "0.1.0"
