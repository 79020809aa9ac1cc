#include "idlink/config.hpp"

#include <fmt/core.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "idlink/error.hpp"

namespace idlink {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ParseError(fmt::format("config key '{}': cannot parse '{}' as a number", key, v));
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError(fmt::format("config key '{}': expected true or false, got '{}'", key, v));
}

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }
std::string fmt_bool(bool v) { return v ? "true" : "false"; }

template <typename F>
auto wrap_parse(std::string_view key, F&& f) {
  try {
    return f();
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(fmt::format("config key '{}': {}", key, e.what()));
  }
}

struct Field {
  std::string_view key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
};

#define IDLINK_DOUBLE(KEY, MEMBER)                                                           \
  Field {                                                                                    \
    KEY, [](const ExperimentConfig& c) { return fmt_double(c.MEMBER); },                     \
        [](ExperimentConfig& c, std::string_view v) { c.MEMBER = parse_number<double>(KEY, v); } \
  }
#define IDLINK_INT(KEY, MEMBER)                                                           \
  Field {                                                                                 \
    KEY, [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); },              \
        [](ExperimentConfig& c, std::string_view v) { c.MEMBER = parse_number<int>(KEY, v); } \
  }
#define IDLINK_BOOL(KEY, MEMBER)                                                       \
  Field {                                                                              \
    KEY, [](const ExperimentConfig& c) { return fmt_bool(c.MEMBER); },                 \
        [](ExperimentConfig& c, std::string_view v) { c.MEMBER = parse_bool(KEY, v); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      Field{"dataset", [](const ExperimentConfig& c) { return c.dataset; },
            [](ExperimentConfig& c, std::string_view v) { c.dataset = std::string(v); }},
      Field{"model", [](const ExperimentConfig& c) { return std::string(to_string(c.model)); },
            [](ExperimentConfig& c, std::string_view v) { c.model = wrap_parse("model", [&] { return parse_model(v); }); }},
      Field{"augmentation", [](const ExperimentConfig& c) { return std::string(to_string(c.augmentation.kind)); },
            [](ExperimentConfig& c, std::string_view v) {
              c.augmentation.kind = wrap_parse("augmentation", [&] { return parse_augmentation(v); });
            }},
      IDLINK_DOUBLE("drop_edge_rate_1", augmentation.drop_edge_rate_1),
      IDLINK_DOUBLE("drop_edge_rate_2", augmentation.drop_edge_rate_2),
      IDLINK_DOUBLE("drop_feature_rate_1", augmentation.drop_feature_rate_1),
      IDLINK_DOUBLE("drop_feature_rate_2", augmentation.drop_feature_rate_2),
      Field{"commu_detect", [](const ExperimentConfig& c) { return c.augmentation.detector; },
            [](ExperimentConfig& c, std::string_view v) { c.augmentation.detector = std::string(v); }},
      IDLINK_DOUBLE("cutoff", augmentation.cutoff),
      Field{"partition_file", [](const ExperimentConfig& c) { return c.partition_file; },
            [](ExperimentConfig& c, std::string_view v) { c.partition_file = std::string(v); }},
      IDLINK_INT("n_layers", train.encoder.n_layers),
      IDLINK_INT("layer_size", train.encoder.layer_size),
      Field{"norm", [](const ExperimentConfig& c) { return std::string(to_string(c.train.encoder.norm)); },
            [](ExperimentConfig& c, std::string_view v) {
              c.train.encoder.norm = wrap_parse("norm", [&] { return parse_norm(v); });
            }},
      IDLINK_DOUBLE("batchnorm_mm", train.encoder.batchnorm_momentum),
      IDLINK_BOOL("weight_standardization", train.encoder.weight_standardization),
      IDLINK_INT("ct_epochs", train.ct_epochs),
      IDLINK_INT("batch_size", train.batch_size),
      IDLINK_DOUBLE("gnn_lr", train.gnn_lr),
      IDLINK_DOUBLE("pred_lr", train.pred_lr),
      IDLINK_INT("proj_hidden", train.proj_hidden),
      Field{"loss_func", [](const ExperimentConfig& c) { return std::string(to_string(c.train.loss_func)); },
            [](ExperimentConfig& c, std::string_view v) {
              c.train.loss_func = wrap_parse("loss_func", [&] { return parse_decoder_loss(v); });
            }},
      IDLINK_BOOL("mask_input", train.mask_input),
      IDLINK_DOUBLE("mask_input_rate", train.mask_input_rate),
      IDLINK_DOUBLE("weight_decay", train.weight_decay),
      IDLINK_DOUBLE("tau", train.tau),
      IDLINK_DOUBLE("ema_decay", train.ema_decay),
      IDLINK_INT("decoder_hidden", train.decoder_hidden),
      IDLINK_INT("decoder_epochs", train.decoder_epochs),
      Field{"link_anchor",
            [](const ExperimentConfig& c) {
              return std::string(c.train.link_loss.anchor == LinkAnchor::positive ? "positive" : "negative");
            },
            [](ExperimentConfig& c, std::string_view v) {
              if (v == "positive") c.train.link_loss.anchor = LinkAnchor::positive;
              else if (v == "negative") c.train.link_loss.anchor = LinkAnchor::negative;
              else throw ParseError(fmt::format("config key 'link_anchor': expected positive or negative, got '{}'", v));
            }},
      IDLINK_BOOL("link_include_positive", train.link_loss.include_positive),
      IDLINK_DOUBLE("split_train", split.train),
      IDLINK_DOUBLE("split_val", split.val),
      IDLINK_DOUBLE("split_test", split.test),
      Field{"seeds",
            [](const ExperimentConfig& c) {
              std::string out;
              for (std::size_t i = 0; i < c.seeds.size(); ++i) out += (i ? "," : "") + std::to_string(c.seeds[i]);
              return out;
            },
            [](ExperimentConfig& c, std::string_view v) { c.seeds = parse_seed_list(v); }},
      IDLINK_INT("hits_k", hits_k),
  };
  return table;
}

#undef IDLINK_DOUBLE
#undef IDLINK_INT
#undef IDLINK_BOOL

bool on_grid(double v, double lo, double hi, double step) {
  if (v < lo - 1e-12 || v > hi + 1e-12) return false;
  const double k = (v - lo) / step;
  return std::abs(k - std::round(k)) < 1e-6;
}

void require(bool ok, std::string_view what) {
  if (!ok) throw std::invalid_argument(fmt::format("config outside the search space: {}", what));
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset.empty()) throw std::invalid_argument("dataset must be set");
  augmentation.validate();
  train.validate();
  if (split.train < 0 || split.val < 0 || split.test < 0 || std::abs(split.train + split.val + split.test - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must be non-negative and sum to 1");
  if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
  if (hits_k < 1) throw std::invalid_argument("hits_k must be positive");
}

void ExperimentConfig::validate_search_space() const {
  validate();
  const auto& t = train;
  require(t.ct_epochs == 100 || t.ct_epochs == 500 || t.ct_epochs == 1500 || t.ct_epochs == 3000, "ct_epochs");
  require(on_grid(t.batch_size, 256, 6400, 64), "batch_size");
  require(t.gnn_lr >= 1e-4 && t.gnn_lr <= 1e-2, "gnn_lr");
  require(t.pred_lr >= 1e-4 && t.pred_lr <= 1e-2, "pred_lr");
  require(on_grid(t.proj_hidden, 64, 512, 64), "proj_hidden");
  require(t.weight_decay >= 1e-6 && t.weight_decay <= 1e-4, "weight_decay");
  require(on_grid(t.tau, 0.1, 0.9, 0.1), "tau");
  require(t.encoder.n_layers >= 1 && t.encoder.n_layers <= 4, "n_layers");
  require(on_grid(t.encoder.layer_size, 64, 512, 64), "layer_size");
  require(on_grid(t.encoder.batchnorm_momentum, 0.8, 1.0, 0.01), "batchnorm_mm");
  const auto& a = augmentation;
  for (double r : {a.drop_edge_rate_1, a.drop_edge_rate_2, a.drop_feature_rate_1, a.drop_feature_rate_2})
    require(on_grid(r, 0.0, 0.9, 0.1), "drop rates");
  require(a.detector == "louvain" || a.detector == "leiden" || a.detector == "infomap", "commu_detect");
}

std::string ExperimentConfig::method_name() const {
  if (model == ModelKind::gcn_supervised) return "gcn_supervised";
  return fmt::format("{}_{}", to_string(model), to_string(augmentation.kind));
}

std::string serialize_config(const ExperimentConfig& c) {
  std::string out;
  for (const Field& f : fields()) out += fmt::format("{} = {}\n", f.key, f.get(c));
  return out;
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(fmt::format("config line {}: expected key = value", line_no));
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const Field* field = nullptr;
    for (const Field& f : fields())
      if (f.key == key) field = &f;
    if (!field) throw ParseError(fmt::format("config line {}: unknown key '{}'", line_no, key));
    field->set(c, value);
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open config '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& c) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write config '{}'", path.string()));
  out << serialize_config(c);
}

std::vector<Seed> parse_seed_list(std::string_view text) {
  std::vector<Seed> seeds;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const std::string_view item = trim(text.substr(0, comma));
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    if (item.empty()) continue;
    if (const auto dash = item.find('-'); dash != std::string_view::npos && dash > 0) {
      const auto lo = parse_number<Seed>("seeds", trim(item.substr(0, dash)));
      const auto hi = parse_number<Seed>("seeds", trim(item.substr(dash + 1)));
      if (hi < lo) throw ParseError(fmt::format("seed range '{}' is empty", item));
      for (Seed s = lo; s <= hi; ++s) seeds.push_back(s);
    } else {
      seeds.push_back(parse_number<Seed>("seeds", item));
    }
  }
  return seeds;
}

}  // namespace idlink
