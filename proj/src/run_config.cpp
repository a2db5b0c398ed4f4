#include "kmerspace/run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <functional>
#include <algorithm>
#include <type_traits>
#include <sstream>

namespace kmerspace {

namespace pt = boost::property_tree;

void RunConfig::resolve() {
  train.seed = seed;
  head_train.seed = seed;
  encoder.k = augment.k;
  damage.fragment_len = damage.fragment_len ? damage.fragment_len : augment.k;
}

void RunConfig::validate() const {
  encoder.validate();
  augment.validate();
  loss.validate();
  damage.validate();
  if (head.L > 1) head.validate();
  if (window == 0) throw ConfigError("map.window must be >= 1");
  if (train.batch_pairs == 0) throw ConfigError("train.batch_pairs must be >= 1");
  if (train.warmup > train.iterations && train.iterations > 0)
    throw ConfigError("train.warmup must not exceed train.iterations");
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out{};
  is >> out;
  if (!is || !is.eof()) throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::array<std::size_t, 4> parse_four(const std::string& key, const std::string& v) {
  std::array<std::size_t, 4> out{};
  std::istringstream is(v);
  std::string part;
  std::size_t i = 0;
  while (std::getline(is, part, ',')) {
    if (i == 4) throw ConfigError("config key '" + key + "': expected 4 comma-separated values");
    out[i++] = parse_number<std::size_t>(key, part);
  }
  if (i != 4) throw ConfigError("config key '" + key + "': expected 4 comma-separated values");
  return out;
}

std::string four_str(const std::array<std::size_t, 4>& a) {
  return std::to_string(a[0]) + "," + std::to_string(a[1]) + "," + std::to_string(a[2]) + "," + std::to_string(a[3]);
}

template <typename T>
std::string num(T v) {
  if constexpr (std::is_integral_v<T>) return std::to_string(v);
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Field {
  std::string section, key;
  Setter set;
  Getter get;
};

template <typename T>
Field numeric(std::string section, std::string key, T RunConfig::*outer) {
  return {section, key, [outer](RunConfig& c, const std::string& k, const std::string& v) { c.*outer = parse_number<T>(k, v); },
          [outer](const RunConfig& c) { return num(c.*outer); }};
}

template <typename S, typename T>
Field nested(std::string section, std::string key, S RunConfig::*outer, T S::*inner) {
  if constexpr (std::is_same_v<T, bool>) {
    return {section, key,
            [outer, inner](RunConfig& c, const std::string& k, const std::string& v) { c.*outer.*inner = parse_bool(k, v); },
            [outer, inner](const RunConfig& c) { return std::string(c.*outer.*inner ? "true" : "false"); }};
  } else {
    return {section, key,
            [outer, inner](RunConfig& c, const std::string& k, const std::string& v) {
              c.*outer.*inner = parse_number<T>(k, v);
            },
            [outer, inner](const RunConfig& c) { return num(c.*outer.*inner); }};
  }
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    v.push_back(numeric("run", "seed", &RunConfig::seed));
    v.push_back({"encoder", "preset",
                 [](RunConfig& c, const std::string&, const std::string& s) {
                   const std::size_t k = c.encoder.k;
                   c.encoder = EncoderConfig::preset(s);
                   c.encoder.k = k;
                   c.encoder_preset = s;
                 },
                 [](const RunConfig& c) { return c.encoder_preset; }});
    v.push_back({"encoder", "stage_channels",
                 [](RunConfig& c, const std::string& k, const std::string& s) { c.encoder.stage_channels = parse_four(k, s); },
                 [](const RunConfig& c) { return four_str(c.encoder.stage_channels); }});
    v.push_back({"encoder", "stage_blocks",
                 [](RunConfig& c, const std::string& k, const std::string& s) { c.encoder.stage_blocks = parse_four(k, s); },
                 [](const RunConfig& c) { return four_str(c.encoder.stage_blocks); }});
    v.push_back(nested("encoder", "embed_dim", &RunConfig::encoder, &EncoderConfig::embed_dim));
    v.push_back(nested("encoder", "norm_first", &RunConfig::encoder, &EncoderConfig::norm_first));
    v.push_back(nested("encoder", "init_gain", &RunConfig::encoder, &EncoderConfig::init_gain));

    v.push_back(nested("augment", "k", &RunConfig::augment, &AugmentConfig::k));
    v.push_back(nested("augment", "d", &RunConfig::augment, &AugmentConfig::d));
    v.push_back(nested("augment", "flat_sub_rate", &RunConfig::augment, &AugmentConfig::flat_sub_rate));
    v.push_back(nested("augment", "deam_rate", &RunConfig::augment, &AugmentConfig::deam_rate));
    v.push_back(nested("augment", "deam_end_len", &RunConfig::augment, &AugmentConfig::deam_end_len));
    v.push_back(nested("augment", "revcomp_prob", &RunConfig::augment, &AugmentConfig::revcomp_prob));
    v.push_back(nested("augment", "deam_after_revcomp", &RunConfig::augment, &AugmentConfig::deam_after_revcomp));

    v.push_back(nested("loss", "tau", &RunConfig::loss, &LossConfig::tau));
    v.push_back(nested("loss", "gamma", &RunConfig::loss, &LossConfig::gamma));
    v.push_back({"loss", "mode",
                 [](RunConfig& c, const std::string&, const std::string& s) { c.loss.mode = parse_loss_mode(s); },
                 [](const RunConfig& c) { return to_string(c.loss.mode); }});
    v.push_back({"loss", "weighting",
                 [](RunConfig& c, const std::string&, const std::string& s) { c.loss.weighting = parse_weighting(s); },
                 [](const RunConfig& c) { return to_string(c.loss.weighting); }});

    v.push_back(nested("train", "batch_pairs", &RunConfig::train, &TrainConfig::batch_pairs));
    v.push_back(nested("train", "iterations", &RunConfig::train, &TrainConfig::iterations));
    v.push_back(nested("train", "warmup", &RunConfig::train, &TrainConfig::warmup));
    v.push_back(nested("train", "lr", &RunConfig::train, &TrainConfig::lr));
    v.push_back(nested("train", "weight_decay", &RunConfig::train, &TrainConfig::weight_decay));
    v.push_back(nested("train", "checkpoint_every", &RunConfig::train, &TrainConfig::checkpoint_every));

    v.push_back({"head", "kind",
                 [](RunConfig& c, const std::string&, const std::string& s) { c.head.kind = parse_head_kind(s); },
                 [](const RunConfig& c) { return to_string(c.head.kind); }});
    v.push_back(nested("head", "mlp_width", &RunConfig::head, &HeadConfig::mlp_width));
    v.push_back(nested("head", "mlp_layers", &RunConfig::head, &HeadConfig::mlp_layers));
    v.push_back(nested("head", "base", &RunConfig::head, &HeadConfig::base));
    v.push_back(nested("head", "gpt_blocks", &RunConfig::head, &HeadConfig::gpt_blocks));
    v.push_back(nested("head", "gpt_heads", &RunConfig::head, &HeadConfig::gpt_heads));
    v.push_back(nested("head", "ff_dim", &RunConfig::head, &HeadConfig::ff_dim));
    v.push_back(nested("head", "token_dim", &RunConfig::head, &HeadConfig::token_dim));
    v.push_back(nested("head", "mlp_out_tokens", &RunConfig::head, &HeadConfig::mlp_out_tokens));

    v.push_back(nested("head_train", "iterations", &RunConfig::head_train, &HeadTrainConfig::iterations));
    v.push_back(nested("head_train", "batch", &RunConfig::head_train, &HeadTrainConfig::batch));
    v.push_back(nested("head_train", "warmup", &RunConfig::head_train, &HeadTrainConfig::warmup));
    v.push_back(nested("head_train", "lr", &RunConfig::head_train, &HeadTrainConfig::lr));
    v.push_back(nested("head_train", "weight_decay", &RunConfig::head_train, &HeadTrainConfig::weight_decay));
    v.push_back(nested("head_train", "pool_size", &RunConfig::head_train, &HeadTrainConfig::pool_size));

    v.push_back(nested("damage", "fragment_len", &RunConfig::damage, &DamageConfig::fragment_len));
    v.push_back(nested("damage", "overhang_geom_p", &RunConfig::damage, &DamageConfig::overhang_geom_p));
    v.push_back(nested("damage", "deam_ss", &RunConfig::damage, &DamageConfig::deam_ss));
    v.push_back(nested("damage", "deam_ds", &RunConfig::damage, &DamageConfig::deam_ds));
    v.push_back(nested("damage", "seq_error_rate", &RunConfig::damage, &DamageConfig::seq_error_rate));

    v.push_back(numeric("map", "window", &RunConfig::window));

    v.push_back(nested("inversion", "quantile", &RunConfig::inversion, &InversionConfig::quantile));
    v.push_back(nested("inversion", "window", &RunConfig::inversion, &InversionConfig::window));
    v.push_back(nested("inversion", "cluster_gap", &RunConfig::inversion, &InversionConfig::cluster_gap));
    v.push_back(nested("inversion", "min_support", &RunConfig::inversion, &InversionConfig::min_support));
    v.push_back(nested("inversion", "local_background", &RunConfig::inversion, &InversionConfig::local_background));
    return v;
  }();
  return f;
}

}  // namespace

RunConfig parse_run_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  // The preset resets the architecture, so it is applied before the other encoder keys.
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& [section, body] : tree) {
      if (body.empty() && !body.data().empty()) throw ConfigError("config: key '" + section + "' outside a section");
      for (const auto& [key, value] : body) {
        const bool is_preset = section == "encoder" && key == "preset";
        if ((pass == 0) != is_preset) continue;
        auto it = std::find_if(fields().begin(), fields().end(),
                               [&](const Field& f) { return f.section == section && f.key == key; });
        if (it == fields().end()) throw ConfigError("config: unknown key '" + section + "." + key + "'");
        try {
          it->set(cfg, section + "." + key, value.data());
        } catch (const ConfigError&) {
          throw;
        } catch (const std::exception& e) {
          throw ConfigError("config key '" + section + "." + key + "': " + e.what());
        }
      }
    }
  }
  cfg.resolve();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_run_config(in);
}

void write_run_config(std::ostream& out, const RunConfig& cfg) {
  std::string section;
  for (const Field& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << '=' << f.get(cfg) << '\n';
  }
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_run_config(out, cfg);
}

}  // namespace kmerspace
