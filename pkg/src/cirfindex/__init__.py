"""Cancelable biometric identification with protected templates and a protected rank-k index."""

from .cirf import (
    APPROX_WINDOW,
    EXACT_WINDOW,
    BioImage,
    ShiftWindow,
    TemplateParam,
    brute_corr,
    brute_min_hamming,
    correlation_window,
    flip,
    match_correlation,
    min_hamming_score,
    protect_query,
    protect_template,
    revoke,
    transform_query,
    transform_template,
)
from .estimators import BinaryFactorizer, CancelableIdentifier, CIRFTransformer, check_binary_images
from .gf import REFERENCE, GFParams, InttCounter, find_params, validate_params
from .identify import Database, KeyStore, enroll, eer, hit_rate, payload_size
from .lowrank import FactorIndex, factorize, reconstruct
from .synth import CorpusSpec, generate_corpus, load_dataset, save_dataset, zero_pad

__version__ = "0.1.0"
