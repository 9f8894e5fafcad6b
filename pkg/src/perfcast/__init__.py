"""CPU-only training-batch-time prediction toolkit for transformer LLMs
under pipeline/model/data parallelism: operator-level workload vectors,
tree-ensemble latency regressors, and a 1F1B pipeline timeline model
cross-validated by a discrete-event simulator."""

from .configs import ClusterSpec, ModelConfig, ParallelLayout
from .workload import (OperatorKind, StageInventory, WorkloadVector,
                       align_vocab, stage_inventory, workload_vector)
from .partition import (StagePartition, StageParamCount, encoder_param_count,
                        partition_encoders, stage_param_count)
from .benchkit import (AxisSpec, BenchRecord, SynthHardwareModel,
                       aggregate_latency, gen_comm_grid, gen_compute_grid,
                       ingest_csv, synth_dataset, synth_latency, write_csv)
from .regress import (FitReport, TrainedRegressor, fit_forest, fit_gbt,
                      fit_tree, load_model, predict_latency, save_model,
                      select_model)
from .timeline import (ScheduleTrace, StageTimes, closed_form_runtime,
                       compare_formula_vs_sim, simulate_1f1b)
from .predictor import (RegressorBank, TimelineBreakdown, predict_batch_time,
                        stage_times, sweep)

__version__ = "0.1.0"
