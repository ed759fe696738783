#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace imu2emg::model {

enum class FfnKind { geglu, gelu };

struct ModelConfig {
  std::size_t input_dim = 24;
  std::size_t d_model = 256;
  std::size_t n_layers = 4;
  std::size_t n_heads = 8;
  std::size_t conv_kernel = 5;
  std::size_t ffn_hidden = 512;  // GEGLU hidden width
  std::size_t output_dim = 10;
  double dropout_rate = 0.1;
  std::size_t groupnorm_groups = 8;
  std::size_t seq_len = 101;
  FfnKind ffn = FfnKind::geglu;
  double norm_eps = 1e-5;

  /// Hidden width actually used by the FFN. The plain GELU variant widens
  /// to round((3dH + 2H) / (2d + 1)) so both variants carry the same
  /// number of FFN parameters up to rounding.
  std::size_t effective_hidden() const;

  /// Every violated invariant, empty when valid.
  std::vector<std::string> problems() const;
  /// Throws ConfigError listing all problems.
  void validate() const;

  /// Fixed key order so equal configs serialize to equal bytes.
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);

  bool operator==(const ModelConfig&) const = default;
};

std::string ffn_name(FfnKind k);
FfnKind parse_ffn(const std::string& name);

/// Closed-form parameter count.
std::size_t parameter_count(const ModelConfig& cfg);

/// Small configuration used by gradient checks: d_model 8, one layer,
/// T = 7, 3 inputs, 2 outputs.
ModelConfig tiny_config();

}  // namespace imu2emg::model
