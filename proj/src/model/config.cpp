#include "imu2emg/model/config.hpp"

#include <cmath>

#include <json.hpp>

#include "imu2emg/core/errors.hpp"

namespace imu2emg::model {

std::string ffn_name(FfnKind k) { return k == FfnKind::geglu ? "geglu" : "gelu"; }

FfnKind parse_ffn(const std::string& name) {
  if (name == "geglu") return FfnKind::geglu;
  if (name == "gelu") return FfnKind::gelu;
  throw ConfigError("unknown ffn kind '" + name + "' (expected geglu or gelu)");
}

std::size_t ModelConfig::effective_hidden() const {
  if (ffn == FfnKind::geglu) return ffn_hidden;
  const double d = static_cast<double>(d_model);
  const double h = static_cast<double>(ffn_hidden);
  return static_cast<std::size_t>(std::llround((3 * d * h + 2 * h) / (2 * d + 1)));
}

std::vector<std::string> ModelConfig::problems() const {
  std::vector<std::string> out;
  auto positive = [&](std::size_t v, const char* name) {
    if (v == 0) out.push_back(std::string(name) + " must be positive");
  };
  positive(input_dim, "input_dim");
  positive(d_model, "d_model");
  positive(n_heads, "n_heads");
  positive(conv_kernel, "conv_kernel");
  positive(ffn_hidden, "ffn_hidden");
  positive(output_dim, "output_dim");
  positive(groupnorm_groups, "groupnorm_groups");
  positive(seq_len, "seq_len");
  if (n_heads && d_model % n_heads)
    out.push_back("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
  if (groupnorm_groups && d_model % groupnorm_groups)
    out.push_back("d_model (" + std::to_string(d_model) + ") must be divisible by groupnorm_groups (" +
                  std::to_string(groupnorm_groups) + ")");
  if (conv_kernel % 2 == 0) out.push_back("conv_kernel must be odd, got " + std::to_string(conv_kernel));
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) out.push_back("dropout_rate must lie in [0, 1)");
  if (!(norm_eps > 0.0)) out.push_back("norm_eps must be positive");
  return out;
}

void ModelConfig::validate() const {
  const auto p = problems();
  if (p.empty()) return;
  std::string msg = "invalid model config:";
  for (const auto& s : p) msg += "\n  - " + s;
  throw ConfigError(msg);
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["input_dim"] = input_dim;
  j["d_model"] = d_model;
  j["n_layers"] = n_layers;
  j["n_heads"] = n_heads;
  j["conv_kernel"] = conv_kernel;
  j["ffn_hidden"] = ffn_hidden;
  j["output_dim"] = output_dim;
  j["dropout_rate"] = dropout_rate;
  j["groupnorm_groups"] = groupnorm_groups;
  j["seq_len"] = seq_len;
  j["ffn"] = ffn_name(ffn);
  j["norm_eps"] = norm_eps;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ModelConfig c;
    c.input_dim = j.value("input_dim", c.input_dim);
    c.d_model = j.value("d_model", c.d_model);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
    c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
    c.output_dim = j.value("output_dim", c.output_dim);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.groupnorm_groups = j.value("groupnorm_groups", c.groupnorm_groups);
    c.seq_len = j.value("seq_len", c.seq_len);
    c.ffn = parse_ffn(j.value("ffn", std::string("geglu")));
    c.norm_eps = j.value("norm_eps", c.norm_eps);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
}

std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t d = c.d_model;
  const std::size_t h = c.effective_hidden();
  const std::size_t embed = d * c.input_dim * c.conv_kernel + d + 2 * d;
  const std::size_t attn = 4 * (d * d + d);
  const std::size_t ffn = c.ffn == FfnKind::geglu ? 3 * d * h + 2 * h + d : 2 * d * h + h + d;
  const std::size_t layer = 4 * d + attn + ffn;
  const std::size_t head = 2 * d + d * c.output_dim + c.output_dim;
  return embed + c.n_layers * layer + head;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.input_dim = 3;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.conv_kernel = 5;
  c.ffn_hidden = 16;
  c.output_dim = 2;
  c.dropout_rate = 0.0;
  c.groupnorm_groups = 2;
  c.seq_len = 7;
  return c;
}

}  // namespace imu2emg::model
