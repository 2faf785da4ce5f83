#include "synmrc/config.hpp"

#include <cstdlib>
#include <functional>
#include <sstream>

namespace synmrc {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  in >> value;
  if (in.fail() || !(in >> std::ws).eof()) throw ConfigError("bad value for " + key + ": '" + text + "'");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("bad boolean for " + key + ": '" + text + "'");
}

template <typename T>
std::string join(const std::vector<T>& items) {
  std::ostringstream out;
  for (std::size_t i = 0; i < items.size(); ++i) out << (i ? "," : "") << items[i];
  return out.str();
}

template <typename T>
std::string show(T value) {
  std::ostringstream out;
  out << value;
  return out.str();
}

}  // namespace

KeyValues KeyValues::parse(std::string_view text, std::string_view origin) {
  KeyValues kv;
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(number) + ": expected key = value");
    }
    kv.set(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse(read_file(path), path.string());
}

void KeyValues::set_assignment(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
  const std::string key = trim(assignment.substr(0, eq));
  if (key.empty()) throw ConfigError("empty key in '" + std::string(assignment) + "'");
  set(key, trim(assignment.substr(eq + 1)));
}

void KeyValues::merge(const KeyValues& overrides) {
  for (const auto& [k, v] : overrides.values_) values_[k] = v;
}

std::optional<std::string> KeyValues::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValues::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::bins: return "bins";
    case ExperimentKind::curriculum: return "curriculum";
    case ExperimentKind::distill_lambda: return "distill_lambda";
    case ExperimentKind::distill_rc_vs_raw: return "distill_rc_vs_raw";
    case ExperimentKind::distill_scale: return "distill_scale";
  }
  return "?";
}

ExperimentKind experiment_from_string(std::string_view text) {
  for (auto kind : all_experiments()) {
    if (to_string(kind) == text) return kind;
  }
  throw ConfigError("unknown experiment: " + std::string(text));
}

std::vector<ExperimentKind> all_experiments() {
  return {ExperimentKind::bins, ExperimentKind::curriculum, ExperimentKind::distill_lambda,
          ExperimentKind::distill_rc_vs_raw, ExperimentKind::distill_scale};
}

namespace {

// One table drives both directions of the key-value mapping.
struct Field {
  std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)> read;
  std::function<std::string(const ExperimentConfig&)> write;
};

template <typename T>
Field number(T ExperimentConfig::*member) {
  return {[member](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*member = parse_number<T>(k, v); },
          [member](const ExperimentConfig& c) { return show(c.*member); }};
}

template <typename S, typename T>
Field nested(S ExperimentConfig::*outer, T S::*member) {
  return {[outer, member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*outer.*member = parse_number<T>(k, v);
          },
          [outer, member](const ExperimentConfig& c) { return show(c.*outer.*member); }};
}

template <typename T>
Field list(std::vector<T> ExperimentConfig::*member) {
  return {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            std::vector<T> out;
            for (const auto& item : split_list(v)) out.push_back(parse_number<T>(k, item));
            c.*member = std::move(out);
          },
          [member](const ExperimentConfig& c) { return join(c.*member); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"experiment",
       {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.experiment = experiment_from_string(v); },
        [](const ExperimentConfig& c) { return std::string(to_string(c.experiment)); }}},
      {"seed", number(&ExperimentConfig::seed)},
      {"seeds", list(&ExperimentConfig::seeds)},
      {"output_dir",
       {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.output_dir = v; },
        [](const ExperimentConfig& c) { return c.output_dir.string(); }}},
      {"world_path",
       {[](ExperimentConfig& c, const std::string&, const std::string& v) {
          if (v.empty()) c.world_path.reset();
          else c.world_path = v;
        },
        [](const ExperimentConfig& c) { return c.world_path ? c.world_path->string() : std::string(); }}},
      {"world.entities", nested(&ExperimentConfig::world, &WorldConfig::n_entities)},
      {"world.relations", nested(&ExperimentConfig::world, &WorldConfig::n_relations)},
      {"world.types", nested(&ExperimentConfig::world, &WorldConfig::n_types)},
      {"world.modifiers", nested(&ExperimentConfig::world, &WorldConfig::n_modifiers)},
      {"world.fillers", nested(&ExperimentConfig::world, &WorldConfig::n_fillers)},
      {"world.documents", nested(&ExperimentConfig::world, &WorldConfig::n_documents)},
      {"world.unlabeled_documents", nested(&ExperimentConfig::world, &WorldConfig::n_unlabeled_documents)},
      {"world.paragraphs_per_document", nested(&ExperimentConfig::world, &WorldConfig::paragraphs_per_document)},
      {"world.entities_per_document", nested(&ExperimentConfig::world, &WorldConfig::entities_per_document)},
      {"world.min_facts_per_paragraph", nested(&ExperimentConfig::world, &WorldConfig::min_facts_per_paragraph)},
      {"world.max_facts_per_paragraph", nested(&ExperimentConfig::world, &WorldConfig::max_facts_per_paragraph)},
      {"world.min_paragraph_length", nested(&ExperimentConfig::world, &WorldConfig::min_paragraph_length)},
      {"world.max_paragraph_length", nested(&ExperimentConfig::world, &WorldConfig::max_paragraph_length)},
      {"world.templates_per_relation", nested(&ExperimentConfig::world, &WorldConfig::templates_per_relation)},
      {"gold.train", nested(&ExperimentConfig::gold, &GoldSizes::train)},
      {"gold.dev", nested(&ExperimentConfig::gold, &GoldSizes::dev)},
      {"gold.test", nested(&ExperimentConfig::gold, &GoldSizes::test)},
      {"gold.unanswerable_ratio", nested(&ExperimentConfig::gold, &GoldSizes::unanswerable_ratio)},
      {"gen.top_p", nested(&ExperimentConfig::gen, &GenConfig::top_p)},
      {"gen.top_k", nested(&ExperimentConfig::gen, &GenConfig::top_k)},
      {"gen.noise_rate", nested(&ExperimentConfig::gen, &GenConfig::noise_rate)},
      {"gen.per_context", nested(&ExperimentConfig::gen, &GenConfig::examples_per_context)},
      {"gen.unanswerable_ratio", nested(&ExperimentConfig::gen, &GenConfig::unanswerable_ratio)},
      {"pool.answerable", number(&ExperimentConfig::pool_answerable)},
      {"pool.unanswerable", number(&ExperimentConfig::pool_unanswerable)},
      {"bins.sizes", list(&ExperimentConfig::bin_sizes)},
      {"bins.unanswerable_ratio", number(&ExperimentConfig::bin_unanswerable_ratio)},
      {"curriculum.switch_fraction", number(&ExperimentConfig::switch_fraction)},
      {"train.learning_rate", number(&ExperimentConfig::learning_rate)},
      {"train.batch_size", number(&ExperimentConfig::batch_size)},
      {"train.gold_epochs", number(&ExperimentConfig::gold_epochs)},
      {"train.pretrain_epochs", number(&ExperimentConfig::pretrain_epochs)},
      {"train.checker_epochs", number(&ExperimentConfig::checker_epochs)},
      {"distill.lambdas", list(&ExperimentConfig::lambdas)},
      {"distill.gold_epochs", number(&ExperimentConfig::distill_gold_epochs)},
      {"distill.synthetic_epochs", number(&ExperimentConfig::distill_synthetic_epochs)},
      {"distill.then_gold_epochs", number(&ExperimentConfig::distill_then_gold_epochs)},
      {"distill.unit", number(&ExperimentConfig::distill_unit)},
      {"distill.multiples", list(&ExperimentConfig::distill_multiples)},
      {"distill.rc_vs_raw_multiple", number(&ExperimentConfig::rc_vs_raw_multiple)},
      {"distill.cache_teacher_outputs",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.cache_teacher_outputs = parse_bool(k, v); },
        [](const ExperimentConfig& c) { return std::string(c.cache_teacher_outputs ? "true" : "false"); }}},
  };
  return table;
}

}  // namespace

ExperimentConfig config_from(const KeyValues& values) {
  ExperimentConfig c;
  for (const auto& [key, value] : values.entries()) {
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown config key: " + key);
    it->second.read(c, key, value);
  }
  c.gen.seed = derive_seed(c.seed, "gen");
  return c;
}

KeyValues to_key_values(const ExperimentConfig& config) {
  KeyValues kv;
  for (const auto& [key, field] : fields()) kv.set(key, field.write(config));
  return kv;
}

void validate(const ExperimentConfig& c) {
  if (c.seeds.empty()) throw ConfigError("seeds must be non-empty");
  if (c.world_path && !std::filesystem::exists(*c.world_path)) {
    throw ConfigError("world_path does not exist: " + c.world_path->string());
  }
  validate(c.world);
  validate(c.gen);
  if (c.gold.train < 1 || c.gold.dev < 1 || c.gold.test < 1) throw ConfigError("gold splits must be non-empty");
  if (c.gold.unanswerable_ratio < 0.0 || c.gold.unanswerable_ratio > 1.0) {
    throw ConfigError("gold.unanswerable_ratio must lie in [0, 1]");
  }
  if (c.pool_answerable < 1 || c.pool_unanswerable < 0) throw ConfigError("bad pool sizes");
  if (c.bin_sizes.empty()) throw ConfigError("bins.sizes must be non-empty");
  for (int b : c.bin_sizes) {
    if (b < 1 || b > c.pool_answerable) {
      throw ConfigError("bin size " + std::to_string(b) + " does not fit a pool of " + std::to_string(c.pool_answerable));
    }
  }
  if (c.switch_fraction < 0.0 || c.switch_fraction > 1.0) throw ConfigError("switch_fraction must lie in [0, 1]");
  for (double l : c.lambdas) {
    if (l < 0.0 || l > 1.0) throw ConfigError("lambda must lie in [0, 1]");
  }
  if (c.distill_unit < 1 || c.distill_multiples.empty()) throw ConfigError("bad distillation ladder");
  for (int epochs : {c.gold_epochs, c.pretrain_epochs, c.checker_epochs, c.distill_gold_epochs,
                     c.distill_synthetic_epochs, c.distill_then_gold_epochs}) {
    if (epochs < 1) throw ConfigError("epoch counts must be >= 1");
  }
  validate(c.schedule(1, 0));
}

std::filesystem::path workspace_root() {
  if (const char* root = std::getenv(kWorkspaceVariable); root && *root) return root;
  return std::filesystem::current_path();
}

std::filesystem::path resolve(const std::filesystem::path& path) {
  return path.is_absolute() ? path : workspace_root() / path;
}

ExperimentConfig load_experiment_config(const std::optional<std::filesystem::path>& file,
                                        const std::vector<std::string>& assignments) {
  KeyValues kv;
  if (file) kv.merge(KeyValues::load(resolve(*file)));
  KeyValues flags;
  for (const auto& a : assignments) flags.set_assignment(a);
  kv.merge(flags);
  ExperimentConfig c = config_from(kv);
  c.output_dir = resolve(c.output_dir);
  if (c.world_path) c.world_path = resolve(*c.world_path);
  validate(c);
  return c;
}

}  // namespace synmrc
