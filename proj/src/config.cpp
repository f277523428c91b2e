#include "quads/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "quads/error.hpp"

namespace quads {

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::distill: return "distill";
    case Strategy::quant_after: return "quant-after";
    case Strategy::mct: return "mct";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "distill") return Strategy::distill;
  if (name == "quant-after") return Strategy::quant_after;
  if (name == "mct") return Strategy::mct;
  throw Error("unknown strategy \"" + std::string(name) + "\" (expected distill, quant-after or mct)");
}

RunConfig::RunConfig() {
  teacher.conv_layers = {{3, 32, 2}, {3, 32, 2}};
  teacher.ff_layers = {64};
  student.conv_layers = {{3, 12, 2}, {3, 12, 2}};
  student.ff_layers = {24};
  teacher_training.lr = 3e-3;
  pretraining.max_epochs = 10;
  pretraining.lr = 3e-3;
}

namespace {

std::string trim(std::string s) {
  const auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string text = trim(raw);
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw Error("config key " + key + ": cannot parse \"" + raw + "\" as a number");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value) && key != "corpus.snr_db")
      throw Error("config key " + key + ": value must be finite");
  }
  return value;
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

double parse_double(const std::string& key, const std::string& raw) {
  const std::string t = trim(raw);
  if (t == "inf") return std::numeric_limits<double>::infinity();
  return parse_number<double>(key, raw);
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string t = trim(raw);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw Error("config key " + key + ": expected true or false, got \"" + raw + "\"");
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(xs[i]);
  }
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& raw) {
  std::vector<T> out;
  for (const auto& item : split(raw, ',')) out.push_back(parse_number<T>(key, item));
  return out;
}

struct Key {
  std::string section;
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;

  std::string dotted() const { return section + "." + name; }
};

#define QUADS_NUM(sec, key, T, field)                                                              \
  Key {                                                                                            \
    sec, key, [](const RunConfig& c) { return std::to_string(c.field); },                          \
        [](RunConfig& c, const std::string& v) { c.field = parse_number<T>(sec "." key, v); }      \
  }
#define QUADS_REAL(sec, key, field)                                                                \
  Key {                                                                                            \
    sec, key, [](const RunConfig& c) { return fmt(c.field); },                                     \
        [](RunConfig& c, const std::string& v) { c.field = parse_double(sec "." key, v); }         \
  }
#define QUADS_BOOL(sec, key, field)                                                                \
  Key {                                                                                            \
    sec, key, [](const RunConfig& c) { return fmt_bool(c.field); },                                \
        [](RunConfig& c, const std::string& v) { c.field = parse_bool(sec "." key, v); }           \
  }
#define QUADS_PATH(sec, key, field)                                                                \
  Key {                                                                                            \
    sec, key, [](const RunConfig& c) { return c.field.string(); },                                 \
        [](RunConfig& c, const std::string& v) { c.field = trim(v); }                              \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      QUADS_PATH("paths", "root", root),
      QUADS_PATH("paths", "corpus", corpus_dir),
      QUADS_PATH("paths", "teacher", teacher_path),

      QUADS_NUM("corpus", "n_classes", std::size_t, corpus.n_classes),
      QUADS_NUM("corpus", "samples_per_class", std::size_t, corpus.samples_per_class),
      Key{"corpus", "sample_rate", [](const RunConfig& c) { return std::to_string(c.corpus.sample_rate); },
          [](RunConfig& c, const std::string& v) {
            c.corpus.sample_rate = parse_number<int>("corpus.sample_rate", v);
            c.mel.sample_rate = c.corpus.sample_rate;
          }},
      QUADS_REAL("corpus", "duration_s", corpus.duration_s),
      QUADS_REAL("corpus", "snr_db", corpus.snr_db),
      QUADS_REAL("corpus", "freq_jitter", corpus.freq_jitter),
      QUADS_REAL("corpus", "tone_fraction", corpus.tone_fraction),
      QUADS_NUM("corpus", "seed", std::uint64_t, corpus.seed),

      QUADS_NUM("mel", "n_mels", std::size_t, mel.n_mels),
      QUADS_REAL("mel", "window_ms", mel.window_ms),
      QUADS_REAL("mel", "hop_ms", mel.hop_ms),
      QUADS_REAL("mel", "fmin", mel.fmin),
      Key{"mel", "fmax", [](const RunConfig& c) { return c.mel.fmax ? fmt(*c.mel.fmax) : std::string(); },
          [](RunConfig& c, const std::string& v) {
            if (trim(v).empty())
              c.mel.fmax.reset();
            else
              c.mel.fmax = parse_double("mel.fmax", v);
          }},
      QUADS_REAL("mel", "log_floor", mel.log_floor),

      Key{"model", "latent_dim", [](const RunConfig& c) { return std::to_string(c.student.latent_dim); },
          [](RunConfig& c, const std::string& v) {
            c.student.latent_dim = c.teacher.latent_dim = parse_number<std::size_t>("model.latent_dim", v);
          }},
      Key{"teacher", "conv", [](const RunConfig& c) { return format_conv_layers(c.teacher.conv_layers); },
          [](RunConfig& c, const std::string& v) { c.teacher.conv_layers = parse_conv_layers(v); }},
      Key{"teacher", "ff", [](const RunConfig& c) { return join(c.teacher.ff_layers); },
          [](RunConfig& c, const std::string& v) { c.teacher.ff_layers = parse_list<std::size_t>("teacher.ff", v); }},
      QUADS_NUM("teacher", "epochs", int, teacher_training.max_epochs),
      QUADS_NUM("teacher", "patience", int, teacher_training.patience),
      QUADS_REAL("teacher", "lr", teacher_training.lr),
      QUADS_NUM("teacher", "batch_size", std::size_t, teacher_training.batch_size),
      QUADS_NUM("teacher", "seed", std::uint64_t, teacher_training.seed),

      Key{"student", "conv", [](const RunConfig& c) { return format_conv_layers(c.student.conv_layers); },
          [](RunConfig& c, const std::string& v) { c.student.conv_layers = parse_conv_layers(v); }},
      Key{"student", "ff", [](const RunConfig& c) { return join(c.student.ff_layers); },
          [](RunConfig& c, const std::string& v) { c.student.ff_layers = parse_list<std::size_t>("student.ff", v); }},
      QUADS_NUM("student", "pretrain_epochs", int, pretraining.max_epochs),
      QUADS_NUM("student", "pretrain_patience", int, pretraining.patience),
      QUADS_REAL("student", "pretrain_lr", pretraining.lr),

      QUADS_NUM("schedule", "seed", std::uint64_t, schedule.seed),
      QUADS_NUM("schedule", "bits", int, bits),
      Key{"schedule", "init", [](const RunConfig& c) { return std::string(c.pretrained_init ? "pretrained" : "random"); },
          [](RunConfig& c, const std::string& v) {
            const std::string t = trim(v);
            if (t != "random" && t != "pretrained")
              throw Error("config key schedule.init: expected random or pretrained, got \"" + v + "\"");
            c.pretrained_init = t == "pretrained";
          }},
      Key{"schedule", "strategy", [](const RunConfig& c) { return std::string(strategy_name(c.strategy)); },
          [](RunConfig& c, const std::string& v) { c.strategy = parse_strategy(trim(v)); }},
      QUADS_NUM("schedule", "cycles", int, schedule.cycles),
      QUADS_NUM("schedule", "distill_epochs", int, schedule.distill_epochs),
      QUADS_NUM("schedule", "quant_epochs", int, schedule.quant_epochs),
      QUADS_NUM("schedule", "final_quant_epochs", int, schedule.final_quant_epochs),
      QUADS_REAL("schedule", "alpha", schedule.alpha),
      QUADS_REAL("schedule", "lr_encoder", schedule.lr_encoder),
      QUADS_REAL("schedule", "lr_classifier", schedule.lr_classifier),
      QUADS_REAL("schedule", "lr_codebook", schedule.lr_codebook),
      Key{"schedule", "optimizer", [](const RunConfig& c) { return std::string(optimizer_name(c.schedule.optimizer)); },
          [](RunConfig& c, const std::string& v) {
            c.schedule.optimizer = c.teacher_training.optimizer = c.pretraining.optimizer = parse_optimizer(trim(v));
          }},
      QUADS_NUM("schedule", "batch_size", std::size_t, schedule.batch_size),
      QUADS_BOOL("schedule", "refit_codebooks", schedule.refit_codebooks),
      QUADS_BOOL("schedule", "double_count_task_loss", schedule.double_count_task_loss),
      QUADS_BOOL("schedule", "quantize_head", schedule.policy.quantize_head),
      QUADS_BOOL("schedule", "quantize_biases", schedule.policy.quantize_biases),
      QUADS_NUM("schedule", "kmeans_iters", int, schedule.kmeans.max_iters),
      QUADS_NUM("schedule", "kmeans_restarts", int, schedule.kmeans.restarts),

      Key{"ablation", "seeds", [](const RunConfig& c) { return join(c.ablation_seeds); },
          [](RunConfig& c, const std::string& v) { c.ablation_seeds = parse_list<std::uint64_t>("ablation.seeds", v); }},
      Key{"ablation", "bits", [](const RunConfig& c) { return join(c.ablation_bits); },
          [](RunConfig& c, const std::string& v) { c.ablation_bits = parse_list<int>("ablation.bits", v); }},

      Key{"energy", "per_mac",
          [](const RunConfig& c) {
            std::string out;
            for (const auto& [b, e] : c.energy_table) out += (out.empty() ? "" : ",") + std::to_string(b) + ":" + fmt(e);
            return out;
          },
          [](RunConfig& c, const std::string& v) {
            c.energy_table.clear();
            for (const auto& item : split(v, ',')) {
              const auto parts = split(item, ':');
              if (parts.size() != 2) throw Error("config key energy.per_mac: expected bits:value pairs, got \"" + item + "\"");
              c.energy_table[parse_number<int>("energy.per_mac", parts[0])] = parse_double("energy.per_mac", parts[1]);
            }
          }},
  };
  return table;
}

#undef QUADS_NUM
#undef QUADS_REAL
#undef QUADS_BOOL
#undef QUADS_PATH

const Key& find_key(const std::string& section, const std::string& name) {
  for (const auto& k : keys())
    if (k.section == section && k.name == name) return k;
  throw Error("unknown config key [" + section + "] " + name);
}

}  // namespace

std::vector<ConvLayerSpec> parse_conv_layers(const std::string& text) {
  std::vector<ConvLayerSpec> out;
  for (const auto& item : split(text, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 3) throw Error("conv layer \"" + item + "\" must be kernel:channels:stride");
    out.push_back({parse_number<std::size_t>("conv.kernel", parts[0]), parse_number<std::size_t>("conv.channels", parts[1]),
                   parse_number<std::size_t>("conv.stride", parts[2])});
  }
  return out;
}

std::string format_conv_layers(const std::vector<ConvLayerSpec>& layers) {
  std::string out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(layers[i].kernel) + ":" + std::to_string(layers[i].out_channels) + ":" +
           std::to_string(layers[i].stride);
  }
  return out;
}

void RunConfig::validate() const {
  corpus.validate();
  mel.validate();
  if (mel.sample_rate != corpus.sample_rate) throw Error("mel and corpus sample rates differ");
  if (teacher.n_mels != mel.n_mels || student.n_mels != mel.n_mels)
    throw Error("model n_mels must match mel.n_mels");
  teacher.validate();
  student.validate();
  if (teacher.latent_dim != student.latent_dim) throw Error("teacher and student latent sizes differ");
  if (!(bits == 32 || (bits >= 1 && bits <= kMaxCodebookBits)))
    throw Error("bits must be in [1, 16] or 32, got " + std::to_string(bits));
  resolved_schedule().validate();
  for (const auto* o : {&teacher_training, &pretraining})
    if (o->max_epochs < 0 || o->patience < 1 || o->lr < 0.0 || o->batch_size < 1)
      throw Error("invalid teacher/pretraining options");
  if (ablation_seeds.empty()) throw Error("ablation.seeds must not be empty");
  for (int b : ablation_bits)
    if (b < 1 || b > kMaxCodebookBits) throw Error("ablation.bits entries must lie in [1, 16]");
  if (input_frames() < std::max(teacher.min_input_frames(), student.min_input_frames()))
    throw Error("clips are too short for the conv stack");
}

std::filesystem::path RunConfig::resolved_root() const {
  if (!root.empty()) return root;
  if (const char* env = std::getenv("QUADS_RUN_DIR"); env && *env) return env;
  return "runs";
}

std::filesystem::path RunConfig::resolved_corpus_dir() const {
  return corpus_dir.empty() ? resolved_root() / "corpus" : corpus_dir;
}

std::filesystem::path RunConfig::resolved_teacher_path() const {
  return teacher_path.empty() ? resolved_root() / "teacher" / "teacher.qdsm" : teacher_path;
}

MctSchedule RunConfig::resolved_schedule() const {
  MctSchedule s = schedule;
  s.bit_length = bits == 32 ? kMaxCodebookBits : bits;
  return s;
}

std::size_t RunConfig::input_frames() const {
  const auto samples = static_cast<std::size_t>(std::llround(corpus.duration_s * corpus.sample_rate));
  return dsp::frame_count(samples, mel);
}

void set_config_value(RunConfig& cfg, const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos) throw Error("config override \"" + dotted_key + "\" must be section.key");
  const Key& k = find_key(dotted_key.substr(0, dot), dotted_key.substr(dot + 1));
  k.set(cfg, value);
  if (k.section == "mel" && k.name == "n_mels") cfg.teacher.n_mels = cfg.student.n_mels = cfg.mel.n_mels;
}

RunConfig parse_config(const std::string& text, const RunConfig& defaults) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error("config: " + e.message() + " at line " + std::to_string(e.line()));
  }
  RunConfig cfg = defaults;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw Error("config key \"" + section + "\" is outside any section");
    if (std::none_of(keys().begin(), keys().end(), [&](const Key& k) { return k.section == section; }))
      throw Error("unknown config section [" + section + "]");
    for (const auto& [name, value] : body) set_config_value(cfg, section + "." + name, value.data());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string to_ini(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& k : keys()) {
    if (k.section != section) {
      out += (section.empty() ? "[" : "\n[") + k.section + "]\n";
      section = k.section;
    }
    out += k.name + " = " + k.get(cfg) + "\n";
  }
  return out;
}

}  // namespace quads
