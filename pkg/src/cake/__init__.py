"""Compact emotion embeddings trained on frozen feature vectors.

Train 2-3 dimensional emotion representations jointly over several datasets
(one classifier head each, shared embedding, imbalance-corrected softmax
cross-entropy), score them with confusion-matrix metrics, and render the
learned decision boundaries as dense emotion maps.
"""

from .benchmark import (
    BENCHMARK_KS,
    BENCHMARK_SEED,
    benchmark_prototypes,
    benchmark_synth_config,
    benchmark_train_config,
)
from .data import (
    CLASS_NAMES,
    N_EMOTIONS,
    DatasetBundle,
    DomainMeta,
    EmotionClass,
    FeatureFileError,
    FeatureRecord,
    SynthConfig,
    bundle_arrays,
    bundles_equal,
    class_counts,
    load_feature_file,
    read_csv_features,
    synth_generate,
    write_csv_features,
    write_feature_file,
)
from .gradcheck import GradCheckResult, run_gradient_checks
from .metrics import (
    ConfusionMatrix,
    accuracy,
    confusion,
    format_report_csv,
    format_report_text,
    macro_f1,
    mean_class_recall,
    merge,
    per_class_f1,
)
from .model import (
    Batch,
    Gradients,
    ModelConfig,
    ModelParams,
    av_regress,
    backprop,
    classify,
    embed,
    embed_many,
    init_params,
    load_checkpoint,
    predict,
    predict_from_embedding,
    save_checkpoint,
)
from .numerics import (
    SeededRng,
    derive_seed,
    finite_diff_grad,
    log_softmax,
    relative_error,
    softmax_stable,
)
from .objective import (
    LossWeights,
    class_weights,
    compute_loss_weights,
    dataset_weights,
    mse_loss,
    multidomain_loss,
)
from .optim import AdamState, adam_init, adam_step
from .trainer import (
    TrainConfig,
    TrainResult,
    cross_evaluate,
    evaluate_domains,
    fit_av_head,
    history_csv,
    make_batches,
    repeat_train,
    sweep_csv,
    sweep_representation_size,
    train,
)
from .vizmap import (
    PALETTE,
    EmotionMap,
    GridSpec,
    emit_map_image,
    grid_embeddings,
    map_ppm_bytes,
    map_svg_text,
    plan_grid,
    read_ppm_classes,
    render_emotion_map,
    scatter_av,
)

__version__ = "0.1.0"
