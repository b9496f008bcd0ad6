"""scribe: factorized style modeling and synthesis for online handwriting strokes.

A writer's style lives in a vector, the way a character string is generally
drawn lives in a square matrix, and their product is the instruction a
mixture-density stroke decoder turns into pen deltas. The package covers the
full pipeline: a small reverse-mode tensor engine, stroke/text data handling
with a procedural synthetic corpus, unsupervised stroke-to-character
segmentation, training of the factorized model, and the inference-time
applications (sampling from reference handwriting, new-character estimation,
style interpolation, writer identification, and an invertibility audit).
"""

from .alphabet import Alphabet, default_alphabet, one_hot_encode
from .applications import (
    Codebook,
    audit_invertibility,
    build_codebook,
    estimate_new_character,
    identify_writer,
    interpolate_char_bilinear,
    interpolate_writer,
    writer_vec_of_sample,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .database import StyleDatabase, build_database, sample_wcts
from .dataset import ingest_absolute, load_dataset, save_dataset
from .features import FEATURE_DIM, FEATURE_NAMES, extract_features
from .losses import loss_flags, loss_loc, loss_w_consistency, loss_wct_reconstruction, total_loss
from .model import (
    CharMatrix,
    DecodeResult,
    MdnStep,
    ModelConfig,
    PrefixStyle,
    StyleModel,
    decode_strokes,
    mdn_nll,
)
from .nn import LstmParams, init_lstm, lstm_forward
from .optim import Adam
from .render import RenderSpec, render_svg
from .segmentation import Segmenter, decode_alignment, seg_ctc_loss, segment_dataset, train_segmenter
from .strokes import StrokePoint, StrokeSequence, delta_decode, delta_encode, reorder_delayed_strokes
from .synthetic import SyntheticWriterStyle, make_styles, synth_corpus, synthetic_alphabet
from .tensor import SingularMatrixError, Tensor, grad_check, mat_inverse, no_grad
from .training import TrainConfig, TrainingDiverged, train

__version__ = "0.1.0"
