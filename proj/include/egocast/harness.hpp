#pragma once

#include "egocast/checkpoint.hpp"
#include "egocast/metrics.hpp"
#include "egocast/runconfig.hpp"
#include "egocast/seqfile.hpp"

namespace egocast {

// Fixed file names inside a run directory.
constexpr const char* kEstimatorCheckpoint = "estimator.ckpt";
constexpr const char* kForecasterCheckpoint = "forecaster.ckpt";
constexpr const char* kConfigEcho = "config.json";
constexpr const char* kCurvesCsv = "curves.csv";
constexpr const char* kReportJson = "report.json";
constexpr const char* kPerJointCsv = "per_joint.csv";

struct EvalCommandOptions {
  bool oracle = false;
  std::string predictor = "model";  // model | echo-gt | gt-drift
  int threads = 0;                  // 0: honor EGOCAST_THREADS, default 1
  // Checkpoints to evaluate; default to the ones inside cfg.out_dir, so a
  // separate output directory can score an existing run.
  std::string estimator_ckpt;
  std::string forecaster_ckpt;
};

// CLI command bodies. Each validates its inputs, writes outputs under
// cfg.out_dir, and echoes the effective config there.
void cmd_generate(const RunConfig& cfg);
void cmd_train_current(const RunConfig& cfg);
void cmd_train_forecast(const RunConfig& cfg);
EvalReport cmd_eval(const RunConfig& cfg, const EvalCommandOptions& options);
void cmd_ablate_window(const RunConfig& cfg, const std::vector<int>& window_sizes);
void cmd_ablate_visual(const RunConfig& cfg);

// Building blocks shared with the acceptance suite.
std::unique_ptr<VisualFeatureProvider> make_provider(const ProviderConfig& cfg,
                                                     const SkeletonSpec& skeleton, int dim);

// Chained-model inference function with a per-sequence pseudo-groundtruth
// cache (bitwise identical to end_to_end_infer).
InferFn make_pipeline_infer(const CurrentFrameModel& estimator,
                            const VisualFeatureProvider& provider,
                            const ForecastModel& forecaster);

// Held-out current-frame MPJPE over every frame_stride-th annotated frame.
double current_frame_mpjpe_cm(const CurrentFrameModel& model,
                              const VisualFeatureProvider& provider,
                              std::span<const PoseSequence> data, int frame_stride = 1);

void save_estimator_checkpoint(const std::string& path, CurrentFrameModel& model, long step);
void save_forecaster_checkpoint(const std::string& path, ForecastModel& model, long step);
CurrentFrameModel load_estimator_checkpoint(const std::string& path);
ForecastModel load_forecaster_checkpoint(const std::string& path);

nlohmann::json skeleton_to_json(const SkeletonSpec& skeleton);
SkeletonSpec skeleton_from_json(const nlohmann::json& j);

void write_loss_csv(const std::string& path, const std::vector<double>& trace);
void write_curve_csv(const std::string& path, const HorizonCurve& curve);
void write_per_joint_csv(const std::string& path, const SkeletonSpec& skeleton,
                         const std::vector<double>& per_joint_cm);
void write_report_json(const std::string& path, const EvalReport& report,
                       const SkeletonSpec& skeleton);

int eval_thread_cap();  // EGOCAST_THREADS, default 1

}  // namespace egocast
