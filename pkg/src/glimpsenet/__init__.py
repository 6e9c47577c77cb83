"""RGB-D human detection with depth-driven head-top proposals and a
multi-scale glimpse LSTM, fully self-contained on synthetic scenes.

The pipeline in order: `synth` renders deterministic RGB-D scenes with
ground truth, `proposals` finds candidate head-top pixels from depth
geometry, `glimpse` builds ordered large-to-small windows per candidate,
`features` turns windows into per-modality vector sequences, `nnet`
classifies a sequence with a single-chain or fusion LSTM trained by exact
BPTT (`training`), and `evaluation` scores detections as FPPI vs miss-rate
curves. `cli` wires the stages together over documented file formats.
"""

from .errors import (ConfigError, FormatError, InvalidDepthError,
                     TrainingDivergedError)
from .evaluation import (CurvePoint, Detection, EvalCurve, GroundTruth,
                         MatchParams, compute_curve, emit_curve,
                         load_curve_csv, log_average_miss_rate, match_image)
from .features import (ExtractorConfig, FeatureSequence, bilinear_resize,
                       extract_patch, extract_sequence, load_features,
                       save_features)
from .glimpse import (GlimpseConfig, GlimpseSet, build_glimpse_set,
                      clip_patch, peripheral_size, window_for_scale)
from .imaging import (CameraIntrinsics, ColorImage, DepthMap, Rect,
                      clamp_rect, default_intrinsics, load_color_ppm,
                      load_depth_pgm, load_intrinsics, project_size,
                      round_half_up, save_color_ppm, save_depth_pgm,
                      save_intrinsics)
from .nnet import (CellState, ConcatModelParams, ForwardTrace,
                   FusionModelParams, LstmParams, backward, forward_concat,
                   forward_fusion, init_concat, init_fusion,
                   load_checkpoint, loss_nll, lstm_cell, predict,
                   save_checkpoint, sigmoid)
from .proposals import (Proposal, ProposalParams, generate_proposals,
                        is_head_top, load_proposals_jsonl,
                        save_proposals_jsonl)
from .rng import SplitMix64
from .synth import (HumanSpec, SceneDistribution, SceneSpec,
                    generate_dataset, render_scene, sample_scene)
from .training import (Dataset, EpochStats, TrainConfig, TrainResult,
                       learning_rate, resample_epoch, train)

__version__ = "0.1.0"
