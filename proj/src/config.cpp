#include "mcc/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>

namespace mcc::config {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

int64_t to_int(const std::string& key, const std::string& v) {
  try {
    size_t used;
    const int64_t r = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw parse_error("config: bad integer for key '" + key + "': " + v);
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t used;
    const double r = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw parse_error("config: bad number for key '" + key + "': " + v);
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw parse_error("config: bad boolean for key '" + key + "': " + v);
}

}  // namespace

ParsedConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open config file: " + path);
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  int ln = 0;
  while (std::getline(f, line)) {
    ++ln;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw parse_error(path + ":" + std::to_string(ln) +
                        ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty() || value.empty())
      throw parse_error(path + ":" + std::to_string(ln) +
                        ": expected 'key = value'");
    entries.emplace_back(key, value);
  }

  ParsedConfig pc;
  // Preset applies first so later keys can override it.
  for (const auto& [k, v] : entries) {
    if (k != "preset") continue;
    if (v == "desk") {
      pc.model = model::ModelConfig::desk();
    } else if (v == "paper") {
      pc.model = model::ModelConfig::paper();
    } else {
      throw parse_error("config: unknown preset '" + v + "'");
    }
  }

  bool have_total_steps = false;
  using Handler = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Handler> handlers = {
      {"preset", [](const std::string&, const std::string&) {}},
      {"image_size", [&](const std::string& k, const std::string& v) {
         pc.model.image_size = static_cast<int>(to_int(k, v)); }},
      {"patch_size", [&](const std::string& k, const std::string& v) {
         pc.model.patch_size = static_cast<int>(to_int(k, v)); }},
      {"enc_dim", [&](const std::string& k, const std::string& v) {
         pc.model.enc_dim = static_cast<int>(to_int(k, v)); }},
      {"enc_layers", [&](const std::string& k, const std::string& v) {
         pc.model.enc_layers = static_cast<int>(to_int(k, v)); }},
      {"enc_heads", [&](const std::string& k, const std::string& v) {
         pc.model.enc_heads = static_cast<int>(to_int(k, v)); }},
      {"dec_dim", [&](const std::string& k, const std::string& v) {
         pc.model.dec_dim = static_cast<int>(to_int(k, v)); }},
      {"dec_layers", [&](const std::string& k, const std::string& v) {
         pc.model.dec_layers = static_cast<int>(to_int(k, v)); }},
      {"dec_heads", [&](const std::string& k, const std::string& v) {
         pc.model.dec_heads = static_cast<int>(to_int(k, v)); }},
      {"use_rgb", [&](const std::string& k, const std::string& v) {
         pc.model.use_rgb = to_bool(k, v); }},
      {"conditioning", [&](const std::string& k, const std::string& v) {
         if (v == "detailed") pc.model.conditioning = model::Conditioning::Detailed;
         else if (v == "global") pc.model.conditioning = model::Conditioning::Global;
         else throw parse_error("config: bad value for '" + k + "': " + v); }},
      {"decoder_mode", [&](const std::string& k, const std::string& v) {
         if (v == "concat_attn") pc.model.decoder_mode = model::DecoderMode::ConcatAttn;
         else if (v == "cross_attn") pc.model.decoder_mode = model::DecoderMode::CrossAttn;
         else throw parse_error("config: bad value for '" + k + "': " + v); }},
      {"n_queries_train", [&](const std::string& k, const std::string& v) {
         pc.model.n_queries_train = static_cast<int>(to_int(k, v)); }},
      {"tau", [&](const std::string& k, const std::string& v) {
         pc.model.tau = to_double(k, v); }},
      {"occupancy_threshold", [&](const std::string& k, const std::string& v) {
         pc.model.occupancy_threshold = to_double(k, v); }},
      {"mode", [&](const std::string& k, const std::string& v) {
         if (v == "object") { pc.model.mode = synth::SceneMode::Object; }
         else if (v == "scene") { pc.model.mode = synth::SceneMode::Scene; }
         else throw parse_error("config: bad value for '" + k + "': " + v);
         pc.train.mode = pc.model.mode; }},
      {"lr", [&](const std::string& k, const std::string& v) {
         pc.train.lr = to_double(k, v); }},
      {"warmup_frac", [&](const std::string& k, const std::string& v) {
         pc.train.warmup_frac = to_double(k, v); }},
      {"total_steps", [&](const std::string& k, const std::string& v) {
         pc.train.total_steps = to_int(k, v);
         have_total_steps = true; }},
      {"batch_size", [&](const std::string& k, const std::string& v) {
         pc.train.batch_size = static_cast<int>(to_int(k, v)); }},
      {"seed", [&](const std::string& k, const std::string& v) {
         pc.train.seed = static_cast<uint64_t>(to_int(k, v)); }},
      {"scale_aug_min", [&](const std::string& k, const std::string& v) {
         pc.train.scale_aug_min = to_double(k, v); }},
      {"scale_aug_max", [&](const std::string& k, const std::string& v) {
         pc.train.scale_aug_max = to_double(k, v); }},
      {"rotation_aug", [&](const std::string& k, const std::string& v) {
         pc.train.rotation_aug = to_bool(k, v); }},
      {"rotation_range_deg", [&](const std::string& k, const std::string& v) {
         pc.train.rotation_range_deg = to_double(k, v); }},
      {"color_loss_weight", [&](const std::string& k, const std::string& v) {
         pc.train.color_loss_weight = to_double(k, v); }},
      {"log_interval", [&](const std::string& k, const std::string& v) {
         pc.train.log_interval = to_int(k, v); }},
      {"checkpoint_interval", [&](const std::string& k, const std::string& v) {
         pc.train.checkpoint_interval = to_int(k, v); }},
  };

  for (const auto& [k, v] : entries) {
    auto it = handlers.find(k);
    if (it == handlers.end())
      throw invalid_argument("config: unknown key '" + k + "'");
    it->second(k, v);
  }
  if (!have_total_steps)
    throw invalid_argument("config: missing required key 'total_steps'");
  pc.model.validate();
  pc.train.validate();
  if (pc.train.mode != pc.model.mode)
    throw invalid_argument("config: train/model mode mismatch");
  return pc;
}

}  // namespace mcc::config
