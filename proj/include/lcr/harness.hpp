#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lcr/edge_prompt.hpp"
#include "lcr/model.hpp"
#include "lcr/tensor.hpp"

namespace lcr {

// ---- synthetic motion videos -------------------------------------------

enum class MotionClass : std::size_t { kTranslateLeft = 0, kTranslateRight = 1, kRotate = 2, kScale = 3 };
enum class ShapeKind : std::size_t { kRectangle = 0, kDisk = 1, kTriangle = 2 };

const char* motion_name(MotionClass motion);

struct SyntheticVideoSpec {
  std::size_t num_classes = 4;
  std::size_t frames = 8;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t samples = 800;  // total, split 80/20
  double noise = 0.03;        // std of additive pixel noise
  std::uint64_t seed = 7;
};

struct VideoSample {
  std::size_t label = 0;
  ShapeKind shape = ShapeKind::kRectangle;
  std::size_t frames = 0, channels = 3, height = 0, width = 0;
  std::vector<double> pixels;  // [T, 3, H, W]
  std::vector<EdgeMap> edges;  // cached adaptive Canny map per frame

  // One frame as [3, H, W] values.
  std::span<const double> frame(std::size_t t) const;
  Image frame_image(std::size_t t) const;
  // [3, T, H, W], the layout forward_video expects.
  Tensor video_tensor() const;
};

struct Dataset {
  std::vector<VideoSample> train;
  std::vector<VideoSample> val;
};

// Renders one clip: a random shape on a random background moving according
// to `motion`. Every clip class draws its starting pose from the same
// distribution, so a single frame carries no label information.
VideoSample render_video(MotionClass motion, const SyntheticVideoSpec& spec, std::uint64_t seed);

// Balanced classes, stratified 80/20 split, edge maps precomputed.
Dataset generate_dataset(const SyntheticVideoSpec& spec);

// Hand-written motion classifier on raw frames (centroid drift, area growth,
// orientation change). Used to show the label lives in the frame order.
MotionClass motion_oracle(const VideoSample& sample);

// Same clip with frames in the given order (edge maps follow their frames).
VideoSample reorder_frames(const VideoSample& sample, const std::vector<std::size_t>& order);

// ---- loss & optimization -----------------------------------------------

// Mean over the batch of -sum_k q_k log softmax(logits)_k with q = 1 - eps
// on the label and eps / (K - 1) elsewhere. logits: [K] or [B, K].
Tensor smoothed_ce(const Tensor& logits, const std::vector<std::size_t>& labels, double eps);

struct TrainConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch = 16;
  std::size_t steps = 2000;
  double smoothing = 0.1;
  double clip_norm = 1.0;  // <= 0 disables clipping
  std::size_t eval_every = 250;
  std::uint64_t seed = 0;
  bool mask_training = true;  // tube masking during training
  std::string metrics_path;     // empty: no log file
  std::string checkpoint_path;  // empty: no checkpoint

  void validate() const;
  std::map<std::string, std::string> to_key_values() const;
  static TrainConfig from_key_values(const std::map<std::string, std::string>& kv, const TrainConfig& base);
};

class Adam {
 public:
  Adam(std::vector<NamedParam> params, double lr, double beta1, double beta2, double eps);

  // Applies one update from the gradients currently held by the parameters.
  void step();
  std::size_t steps() const { return t_; }

 private:
  std::vector<NamedParam> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

// Scales all gradients so their joint L2 norm is at most max_norm. Returns
// the norm before clipping.
double clip_grad_norm(const std::vector<NamedParam>& params, double max_norm);

// Thrown when the loss goes non-finite; the message names the first
// non-finite tensor.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Name of the first parameter whose value or gradient is non-finite.
std::optional<std::string> first_non_finite(const std::vector<NamedParam>& params);

struct MetricsRow {
  std::size_t step = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  std::vector<MetricsRow> log;
  double best_val_acc = -1.0;
  std::size_t best_step = 0;
  double final_train_acc = 0.0;
  double final_val_acc = 0.0;
};

// Logits [B, classes] for samples [first, first + count) of `set`.
Tensor batch_logits(const LcrModel& model, const std::vector<const VideoSample*>& batch,
                    const StreamOptions& options = {});

double evaluate(const LcrModel& model, const std::vector<VideoSample>& set, std::size_t batch = 32);

using ProgressFn = std::function<void(const MetricsRow&)>;

// Adam training with gradient clipping. Evaluates every eval_every steps and
// at the end, writes `step,loss,train_acc,val_acc` lines and keeps the best
// validation checkpoint (float32 parameters, evaluated after rounding).
TrainResult train(LcrModel& model, const TrainConfig& config, const Dataset& data,
                  const ProgressFn& progress = {});

// ---- benchmarks & oracles ------------------------------------------------

struct BenchRow {
  std::size_t tokens = 0;
  double recurrent_seconds = 0.0;
  double bruteforce_seconds = 0.0;
};

// Median-of-`repeats` forward times of both WKV forms on random inputs.
std::vector<BenchRow> bench_wkv(const std::vector<std::size_t>& lengths, std::size_t heads,
                                std::size_t head_dim, std::size_t repeats = 7, std::uint64_t seed = 0);

struct OracleResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Runs the equivalence and gradient checks that need no training.
std::vector<OracleResult> run_oracles(std::uint64_t seed = 0);

}  // namespace lcr
