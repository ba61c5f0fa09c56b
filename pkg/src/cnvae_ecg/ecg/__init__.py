from .io import Dataset, FormatError, read_dataset, record_hash, split_hash, write_dataset
from .leads import expand_to_twelve, limb_residuals, reduce_to_eight
from .preprocess import (
    FilterError,
    Normalizer,
    PercentileBounds,
    dequantize,
    percentile_bounds,
    percentile_filter,
    quantize,
    resample,
)
from .record import CHEST_LEADS, DEFAULT_CLASSES, LEADS_8, LEADS_12, ClassVocabulary, EcgRecord
