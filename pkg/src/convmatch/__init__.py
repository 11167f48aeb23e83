"""Context-dependent convolutional matching of phrase pairs.

A gated convolutional encoder summarizes a tagged source sentence and a
target phrase into fixed-length vectors; an MLP head scores the pair, and a
max-margin curriculum (easy, medium, difficult negatives) trains the whole
stack with hand-written backpropagation on top of numpy.
"""

from .corpus import (
    AlignedSentencePair,
    ContextualExample,
    Difficulty,
    PhraseTable,
    TrainingTriple,
    TriplePools,
    build_pools,
    consistent_span_pairs,
    extract_phrase_pairs,
    gen_difficult_negative,
    gen_easy_negative,
    gen_medium_negative,
    mix_probabilities,
    mix_sample,
    parse_corpus,
    read_corpus,
    write_corpus,
)
from .convnet import (
    ActivationTape,
    ConvLayerParams,
    EncoderStack,
    encode,
    encoder_backward,
    gated_conv_forward,
    global_pool,
    maxpool_forward,
    min_input_length,
    shape_transcript,
)
from .embeddings import (
    EmbeddingTable,
    PretrainConfig,
    PretrainResult,
    TaggedSentenceMatrix,
    Vocabulary,
    WordPairScorer,
    build_vocab,
    context_window,
    load_embeddings,
    lookup_tagged,
    pretrain_bilingual,
    save_embeddings,
    word_pair_score,
)
from .matcher import MatcherParams, hinge_active, hinge_loss, match_score
from .model import ModelConfig, TranslationMatcher, load_model, save_model
from .trainer import (
    CurriculumResult,
    GradientSet,
    TrainConfig,
    grad_check,
    run_curriculum,
    sgd_step,
    triple_loss,
    triple_loss_and_grads,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
