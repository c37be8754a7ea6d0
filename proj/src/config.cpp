#include "l2copy/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "l2copy/errors.hpp"

namespace l2copy {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::size_t parse_size(std::string_view key, std::string_view text) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("invalid unsigned integer for " + std::string(key) + ": '" + std::string(text) + "'");
  }
  return v;
}

std::uint64_t parse_u64(std::string_view key, std::string_view text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("invalid unsigned integer for " + std::string(key) + ": '" + std::string(text) + "'");
  }
  return v;
}

double parse_double(std::string_view key, std::string_view text) {
  const std::string s(text);
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) {
    throw ConfigError("invalid number for " + std::string(key) + ": '" + s + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  throw ConfigError("invalid boolean for " + std::string(key) + ": '" + std::string(text) + "'");
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct Field {
  std::function<void(Config&, std::string_view, std::string_view)> set;
  std::function<std::string(const Config&)> get;
};

template <typename Member>
Field size_field(Member member) {
  return {[member](Config& c, std::string_view k, std::string_view v) { member(c) = parse_size(k, v); },
          [member](const Config& c) { return std::to_string(member(const_cast<Config&>(c))); }};
}

template <typename Member>
Field double_field(Member member) {
  return {[member](Config& c, std::string_view k, std::string_view v) { member(c) = parse_double(k, v); },
          [member](const Config& c) { return format_double(member(const_cast<Config&>(c))); }};
}

template <typename Member>
Field bool_field(Member member) {
  return {[member](Config& c, std::string_view k, std::string_view v) { member(c) = parse_bool(k, v); },
          [member](const Config& c) { return std::string(member(const_cast<Config&>(c)) ? "true" : "false"); }};
}

const std::vector<std::pair<std::string, Field>>& field_table() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"model.d", size_field([](Config& c) -> std::size_t& { return c.model.d; })},
      {"model.heads", size_field([](Config& c) -> std::size_t& { return c.model.heads; })},
      {"model.filter", size_field([](Config& c) -> std::size_t& { return c.model.filter; })},
      {"model.encoder_layers", size_field([](Config& c) -> std::size_t& { return c.model.encoder_layers; })},
      {"model.decoder_layers", size_field([](Config& c) -> std::size_t& { return c.model.decoder_layers; })},
      {"model.predictor_layers", size_field([](Config& c) -> std::size_t& { return c.model.predictor_layers; })},
      {"model.max_len", size_field([](Config& c) -> std::size_t& { return c.model.max_len; })},
      {"model.interactive", bool_field([](Config& c) -> bool& { return c.model.interactive; })},
      {"model.predictor", bool_field([](Config& c) -> bool& { return c.model.predictor; })},
      {"model.copynet", bool_field([](Config& c) -> bool& { return c.model.copynet; })},
      {"model.joint_training", bool_field([](Config& c) -> bool& { return c.model.joint_training; })},
      {"model.mask_encoder", bool_field([](Config& c) -> bool& { return c.model.mask_encoder; })},
      {"model.mask_decoder", bool_field([](Config& c) -> bool& { return c.model.mask_decoder; })},
      {"model.mask_copynet", bool_field([](Config& c) -> bool& { return c.model.mask_copynet; })},
      {"model.mt_first", bool_field([](Config& c) -> bool& { return c.model.mt_first; })},
      {"model.dropout", double_field([](Config& c) -> double& { return c.model.dropout; })},
      {"model.norm_eps", double_field([](Config& c) -> double& { return c.model.norm_eps; })},
      {"loss.alpha", double_field([](Config& c) -> double& { return c.loss.alpha; })},
      {"loss.lambda", double_field([](Config& c) -> double& { return c.loss.lambda; })},
      {"loss.prob_floor", double_field([](Config& c) -> double& { return c.loss.prob_floor; })},
      {"loss.score_eps", double_field([](Config& c) -> double& { return c.loss.score_eps; })},
      {"train.steps", size_field([](Config& c) -> std::size_t& { return c.train.steps; })},
      {"train.token_budget", size_field([](Config& c) -> std::size_t& { return c.train.token_budget; })},
      {"train.warmup", size_field([](Config& c) -> std::size_t& { return c.train.warmup; })},
      {"train.lr_scale", double_field([](Config& c) -> double& { return c.train.lr_scale; })},
      {"train.clip_norm", double_field([](Config& c) -> double& { return c.train.clip_norm; })},
      {"train.beta1", double_field([](Config& c) -> double& { return c.train.beta1; })},
      {"train.beta2", double_field([](Config& c) -> double& { return c.train.beta2; })},
      {"train.epsilon", double_field([](Config& c) -> double& { return c.train.epsilon; })},
      {"train.seed",
       {[](Config& c, std::string_view k, std::string_view v) { c.train.seed = parse_u64(k, v); },
        [](const Config& c) { return std::to_string(c.train.seed); }}},
      {"train.log_interval", size_field([](Config& c) -> std::size_t& { return c.train.log_interval; })},
      {"train.checkpoint_interval",
       size_field([](Config& c) -> std::size_t& { return c.train.checkpoint_interval; })},
      {"decode.beam", size_field([](Config& c) -> std::size_t& { return c.decode.beam; })},
      {"decode.length_alpha", double_field([](Config& c) -> double& { return c.decode.length_alpha; })},
      {"decode.max_len", size_field([](Config& c) -> std::size_t& { return c.decode.max_len; })},
      {"data.min_count", size_field([](Config& c) -> std::size_t& { return c.data.min_count; })},
      {"data.bpe_merges", size_field([](Config& c) -> std::size_t& { return c.data.bpe_merges; })},
      {"data.union_labels", bool_field([](Config& c) -> bool& { return c.data.union_labels; })},
  };
  return table;
}

const Field& find_field(std::string_view key) {
  for (const auto& [name, field] : field_table()) {
    if (name == key) return field;
  }
  throw ConfigError("unknown configuration key: '" + std::string(key) + "'");
}

}  // namespace

void ModelConfig::validate() const {
  if (d == 0 || heads == 0) throw ConfigError("model.d and model.heads must be positive");
  if (d % heads != 0) {
    throw ConfigError("model.d (" + std::to_string(d) + ") must be divisible by model.heads (" +
                      std::to_string(heads) + ")");
  }
  if (filter == 0) throw ConfigError("model.filter must be positive");
  if (encoder_layers == 0 || decoder_layers == 0) throw ConfigError("encoder and decoder need at least one layer");
  if (predictor && predictor_layers == 0) throw ConfigError("model.predictor_layers must be >= 1 with the predictor");
  if (joint_training && !predictor) {
    throw ConfigError("model.joint_training requires model.predictor (there are no copy scores to train)");
  }
  if (max_len < 2) throw ConfigError("model.max_len must be at least 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
  if (!(norm_eps > 0.0)) throw ConfigError("model.norm_eps must be positive");
}

void Config::set(std::string_view key, std::string_view value) { find_field(key).set(*this, key, trim(value)); }

std::string Config::get(std::string_view key) const { return find_field(key).get(*this); }

const std::vector<std::string>& Config::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, _] : field_table()) out.push_back(name);
    return out;
  }();
  return names;
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& [name, field] : field_table()) out += name + "=" + field.get(*this) + "\n";
  return out;
}

void Config::apply_text(std::string_view text) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value, got '" + content + "'", line_no);
    try {
      set(trim(content.substr(0, eq)), content.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
}

void Config::apply_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  apply_text(buffer.str());
}

void Config::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override must look like key=value: '" + std::string(assignment) + "'");
  }
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void Config::validate() const {
  model.validate();
  if (!(loss.alpha >= 0.0 && loss.alpha <= 1.0)) throw ConfigError("loss.alpha must lie in [0, 1]");
  if (!(loss.lambda >= 0.0)) throw ConfigError("loss.lambda must be non-negative");
  if (!(loss.prob_floor > 0.0) || !(loss.score_eps > 0.0 && loss.score_eps < 0.5)) {
    throw ConfigError("loss.prob_floor and loss.score_eps must be small positive numbers");
  }
  if (train.token_budget == 0) throw ConfigError("train.token_budget must be positive");
  if (train.warmup == 0) throw ConfigError("train.warmup must be positive");
  if (!(train.beta1 >= 0.0 && train.beta1 < 1.0) || !(train.beta2 >= 0.0 && train.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (decode.beam == 0) throw ConfigError("decode.beam must be at least 1");
}

Config profile_config(std::string_view profile) {
  Config c;
  if (profile == "test") return c;
  if (profile == "paper") {
    c.model.d = 512;
    c.model.heads = 8;
    c.model.filter = 2048;
    c.model.encoder_layers = 6;
    c.model.decoder_layers = 6;
    c.model.predictor_layers = 3;
    c.model.dropout = 0.1;
    c.train.token_budget = 25000;
    c.train.warmup = 4000;
    c.train.steps = 100000;
    return c;
  }
  throw ConfigError("unknown profile '" + std::string(profile) + "' (expected test or paper)");
}

const std::vector<AblationRow>& ablation_grid() {
  static const std::vector<AblationRow> rows = {
      {1, true, false, false, false}, {2, false, false, true, false}, {3, false, true, true, true},
      {4, true, false, true, false},  {5, true, true, false, false},  {6, true, true, true, false},
      {7, true, true, true, true},
  };
  return rows;
}

int ablation_row_id(bool interactive, bool predictor, bool copynet, bool joint_training) {
  for (const auto& row : ablation_grid()) {
    if (row.interactive == interactive && row.predictor == predictor && row.copynet == copynet &&
        row.joint_training == joint_training) {
      return row.id;
    }
  }
  throw ConfigError("switch combination (interactive=" + std::to_string(interactive) +
                    ", predictor=" + std::to_string(predictor) + ", copynet=" + std::to_string(copynet) +
                    ", joint_training=" + std::to_string(joint_training) + ") is not an ablation row");
}

void apply_ablation_row(ModelConfig& model, const AblationRow& row) {
  model.interactive = row.interactive;
  model.predictor = row.predictor;
  model.copynet = row.copynet;
  model.joint_training = row.joint_training;
}

}  // namespace l2copy
