#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lcr/cross_rwkv.hpp"
#include "lcr/edge_prompt.hpp"
#include "lcr/grad_check.hpp"
#include "lcr/lcr_cell.hpp"
#include "lcr/tensor.hpp"
#include "lcr/token_shift.hpp"
#include "lcr/wkv.hpp"

namespace lcr {

enum class PositionEncoding { kAdditive, kRotary };

struct ModelConfig {
  std::string name = "custom";
  std::size_t frame_height = 32;
  std::size_t frame_width = 32;
  std::size_t in_channels = 3;
  std::size_t patch = 8;
  std::size_t depth = 1;
  std::size_t hidden = 64;
  std::size_t heads = 4;
  std::size_t num_classes = 4;
  std::size_t frames = 8;
  double tube_mask_ratio = 0.5;
  WkvMode wkv_mode = WkvMode::kBidirectional;
  bool cell_clamp = false;
  double cell_clamp_limit = 10.0;
  PositionEncoding position = PositionEncoding::kAdditive;
  bool edge_every_layer = true;
  std::size_t conv_kernel = 3;
  std::size_t hidden_ratio = 4;

  // Throws ConfigError on indivisible frame/patch sizes, channel counts not
  // divisible by 4 * heads, or an out-of-range mask ratio.
  void validate() const;
  GridGeometry geometry() const;
  std::size_t patches() const { return (frame_height / patch) * (frame_width / patch); }
  std::size_t tokens() const { return patches() + 1; }
  CrossRwkvConfig block_config() const;

  std::map<std::string, std::string> to_key_values() const;
  // Unknown keys throw ConfigError; missing keys keep `base` values.
  static ModelConfig from_key_values(const std::map<std::string, std::string>& kv,
                                     const ModelConfig& base);
  static ModelConfig from_key_values(const std::map<std::string, std::string>& kv);

  // LCR-S, LCR, LCR-L (112x112, patch 8) and LCR-224, LCR-L-224, LCR-XL-224
  // (224x224, patch 16), plus "tiny" (32x32 desk-scale).
  static ModelConfig preset(const std::string& name);
  static std::vector<std::string> preset_names();
};

// Reported values of the six model variants.
struct ReferenceVariant {
  std::string preset;
  double params_millions;
  double flops_tera;
};
const std::vector<ReferenceVariant>& reference_variants();

struct LcrModel {
  ModelConfig config;
  Tensor patch_weight;  // [in_channels * P * P, C]
  Tensor patch_bias;    // [C]
  Tensor cls_token;     // [C]
  Tensor position;      // [L + 1, C]; empty with rotary encoding
  Tensor mask_token;    // [C]
  ZeroEmbed edge_embed;
  std::vector<CrossRwkvBlock> blocks;
  ClassifierHead head;

  static LcrModel create(const ModelConfig& config, std::uint64_t seed);

  std::vector<NamedParam> parameters() const;
  std::size_t parameter_count() const;
  // Deep copy of every parameter tensor.
  LcrModel clone() const;
};

// ---- accounting -------------------------------------------------------

struct ParamBreakdown {
  std::vector<std::pair<std::string, std::size_t>> modules;
  std::size_t total = 0;
};

ParamBreakdown param_breakdown(const ModelConfig& config);
std::size_t param_count(const ModelConfig& config);

struct FlopEstimate {
  std::uint64_t macs_per_frame = 0;
  std::uint64_t macs_per_video = 0;
  std::uint64_t flops_per_video() const { return 2 * macs_per_video; }
};

// Multiply-accumulates of matmuls, convolutions and the WKV scan for one
// forward pass over config.frames frames.
FlopEstimate flops_estimate(const ModelConfig& config);

// ---- patch embedding & masking -----------------------------------------

// frames [B, in_channels, H, W] -> tokens [B, L + 1, C]: non-overlapping
// P x P patch embedding, CLS appended last, positional embedding added.
Tensor embed_frame(const Tensor& frames, const LcrModel& model);

// video [in_channels, T, H, W] -> T token grids of [L + 1, C].
std::vector<Tensor> patch_embed(const Tensor& video, const LcrModel& model);

// One spatial mask over the L patch positions, shared by every frame.
struct TubeMask {
  std::vector<std::uint8_t> patches;  // 1 = masked; CLS is never masked

  std::size_t masked_count() const;
  bool empty() const { return masked_count() == 0; }
};

// Masks exactly floor(ratio * patches) positions drawn uniformly without
// replacement. ratio must lie in [0, 1).
TubeMask make_tube_mask(std::size_t patches, double ratio, std::uint64_t seed);

// Replaces masked patch tokens of every batch element's frame by `token`.
// tokens: [B, L + 1, C] (or [L + 1, C] with one mask).
Tensor apply_tube_mask(const Tensor& tokens, std::span<const TubeMask> masks, const Tensor& token);

// Masks a token sequence (one grid per frame) with a single tube mask.
std::pair<std::vector<Tensor>, TubeMask> tube_mask(const std::vector<Tensor>& sequence, double ratio,
                                                   std::uint64_t seed, const Tensor& mask_token);

// ---- forward pass ------------------------------------------------------

// Converts frame b of a [B, C, H, W] tensor (or a [C, H, W] tensor) to an image.
Image frame_image(const Tensor& frames, std::size_t b = 0);

struct StreamOptions {
  std::vector<TubeMask> masks;   // one per batch element; empty = no masking
  bool tail_average = false;     // average logits over the last ceil(T/3) frames
  std::size_t expected_frames = 0;  // required with tail_average
};

// Frame-by-frame inference / training interface. Consumes one frame at a
// time and keeps only the recurrent state between frames.
class FrameStream {
 public:
  FrameStream(const LcrModel& model, std::size_t batch, StreamOptions options = {});

  // frames: [B, in_channels, H, W] or [in_channels, H, W] when B = 1.
  // Edge maps are extracted from the pixels unless supplied (one per batch
  // element).
  void push(const Tensor& frames, std::span<const EdgeMap> edges = {});

  // Logits [B, classes] from the current state (or the tail average).
  Tensor logits() const;

  const RecurrentState& state() const { return state_; }
  const Tensor& last_output() const { return last_output_; }
  std::size_t frames_seen() const { return state_.frame; }
  // Bytes carried between frames: exactly one RecurrentState.
  std::size_t retained_bytes() const { return state_.bytes(); }

 private:
  const LcrModel& model_;
  std::size_t batch_;
  StreamOptions options_;
  GridGeometry geom_;
  RecurrentState state_;
  Tensor last_output_;
  std::optional<Tensor> tail_sum_;
  std::size_t tail_count_ = 0;
};

// Runs FrameStream over a whole video [in_channels, T, H, W] (B = 1, logits
// [classes]) or a batch [B, in_channels, T, H, W] (logits [B, classes]).
Tensor forward_video(const Tensor& video, const LcrModel& model, const StreamOptions& options = {});

// ---- checkpoints -------------------------------------------------------

// Layout (little-endian):
//   "LCRCKPT\0" | u32 version | u32 config length | config text (key = value lines)
//   | u32 tensor count | per tensor: u32 name length, name, u32 rank,
//   u64 extents[rank], f32 values[numel]
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const LcrModel& model);
LcrModel deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const LcrModel& model, const std::string& path);
LcrModel load_checkpoint(const std::string& path);

// Rounds every parameter to the nearest 32-bit float in place.
void round_to_float32(LcrModel& model);

}  // namespace lcr
