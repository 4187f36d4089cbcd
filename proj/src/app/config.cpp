#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>

#include "nmt/app.hpp"
#include "nmt/error.hpp"
#include "nmt/text.hpp"

namespace nmt::app {

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  fail(ErrorKind::kContract, "config key '" + key + "': '" + value + "' is not " + want);
}

std::size_t to_size(const std::string& key, const std::string& value) {
  std::size_t v = 0;
  const auto* end = value.data() + value.size();
  const auto r = std::from_chars(value.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) bad_value(key, value, "a non-negative integer");
  return v;
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) bad_value(key, value, "a number");
    return v;
  } catch (const std::logic_error&) {
    bad_value(key, value, "a number");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value, "a boolean");
}

std::vector<std::string> to_list(const std::string& value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    auto comma = value.find(',', start);
    if (comma == std::string::npos) comma = value.size();
    auto item = text::trim(std::string_view(value).substr(start, comma - start));
    if (!item.empty()) out.push_back(item);
    start = comma + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  for (int digits = 6; digits <= 17; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    if (std::stod(buf) == v) break;
  }
  return buf;
}

std::string unquote(std::string v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename M>
Field size_field(const char* key, M RunConfig::*member) {
  return {key, [member](const RunConfig& c) { return std::to_string(c.*member); },
          [member, key](RunConfig& c, const std::string& v) {
            c.*member = static_cast<M>(to_size(key, v));
          }};
}

Field double_field(const char* key, double RunConfig::*member) {
  return {key, [member](const RunConfig& c) { return fmt_double(c.*member); },
          [member, key](RunConfig& c, const std::string& v) { c.*member = to_double(key, v); }};
}

Field bool_field(const char* key, bool RunConfig::*member) {
  return {key, [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); },
          [member, key](RunConfig& c, const std::string& v) { c.*member = to_bool(key, v); }};
}

Field string_field(const char* key, std::string RunConfig::*member) {
  return {key, [member](const RunConfig& c) { return "\"" + c.*member + "\""; },
          [member](RunConfig& c, const std::string& v) { c.*member = unquote(v); }};
}

Field list_field(const char* key, std::vector<std::string> RunConfig::*member) {
  return {key, [member](const RunConfig& c) { return join(c.*member); },
          [member](RunConfig& c, const std::string& v) { c.*member = to_list(v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      string_field("data.dir", &RunConfig::data_dir),
      string_field("data.general", &RunConfig::general),
      list_field("data.domains", &RunConfig::domains),
      size_field("data.max_words", &RunConfig::max_words),
      size_field("tokenizer.source_vocab", &RunConfig::source_vocab),
      size_field("tokenizer.target_vocab", &RunConfig::target_vocab),
      double_field("tokenizer.character_coverage", &RunConfig::character_coverage),
      list_field("model.families", &RunConfig::families),
      size_field("model.lstm_embed", &RunConfig::lstm_embed),
      size_field("model.lstm_hidden", &RunConfig::lstm_hidden),
      size_field("model.transformer_dim", &RunConfig::transformer_dim),
      size_field("model.transformer_heads", &RunConfig::transformer_heads),
      size_field("model.transformer_layers", &RunConfig::transformer_layers),
      size_field("model.transformer_ff", &RunConfig::transformer_ff),
      size_field("model.max_positions", &RunConfig::max_positions),
      bool_field("model.pre_norm", &RunConfig::pre_norm),
      double_field("model.dropout", &RunConfig::dropout),
      size_field("train.batch_size", &RunConfig::batch_size),
      size_field("train.max_epochs", &RunConfig::max_epochs),
      double_field("train.learning_rate", &RunConfig::learning_rate),
      double_field("train.finetune_lr_scale", &RunConfig::finetune_lr_scale),
      size_field("train.finetune_epochs", &RunConfig::finetune_epochs),
      size_field("train.factor", &RunConfig::factor),
      double_field("train.clip_norm", &RunConfig::clip_norm),
      size_field("train.seed", &RunConfig::seed),
      size_field("decode.max_length", &RunConfig::max_length),
      size_field("decode.comma_split_threshold", &RunConfig::comma_split_threshold),
      string_field("decode.joiner", &RunConfig::joiner),
      bool_field("eval.smooth", &RunConfig::smooth),
  };
  return table;
}

const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (key == f.key) return f;
  }
  fail(ErrorKind::kContract, "unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  field(key).set(*this, text::trim(value));
}

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

void RunConfig::load_file(const std::filesystem::path& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorKind::kData, "config file: " + std::string(e.what()));
  }
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) {
      fail(ErrorKind::kContract, "config key '" + section + "' is outside any [section]");
    }
    for (const auto& [name, value] : body) set(section + "." + name, value.data());
  }
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    fail(ErrorKind::kContract, "override '" + assignment + "' is not of the form key=value");
  }
  set(text::trim(std::string_view(assignment).substr(0, eq)), assignment.substr(eq + 1));
}

std::string RunConfig::to_ini() const {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    const std::string key = f.key;
    const auto dot = key.find('.');
    if (key.substr(0, dot) != section) {
      section = key.substr(0, dot);
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += key.substr(dot + 1) + " = " + f.get(*this) + "\n";
  }
  return out;
}

void RunConfig::echo(const std::filesystem::path& dir) const {
  write_text(dir / "config.ini", to_ini());
}

models::ModelConfig RunConfig::model_config(models::Family family) const {
  models::ModelConfig m;
  m.family = family;
  m.lstm.embed_dim = lstm_embed;
  m.lstm.hidden_dim = lstm_hidden;
  m.lstm.dropout = dropout;
  m.transformer.model_dim = transformer_dim;
  m.transformer.heads = transformer_heads;
  m.transformer.layers = transformer_layers;
  m.transformer.ff_dim = transformer_ff;
  m.transformer.max_positions = max_positions;
  m.transformer.pre_norm = pre_norm;
  m.transformer.dropout = dropout;
  return m;
}

training::TrainConfig RunConfig::train_config(models::Family family) const {
  training::TrainConfig t;
  t.model = model_config(family);
  t.batch_size = batch_size;
  t.max_epochs = max_epochs;
  t.learning_rate = learning_rate;
  t.finetune_lr_scale = finetune_lr_scale;
  t.clip_norm = clip_norm;
  t.seed = seed;
  return t;
}

decoding::DecodeConfig RunConfig::decode_config() const {
  decoding::DecodeConfig d;
  d.max_length = max_length;
  d.comma_split_threshold = comma_split_threshold;
  d.joiner = joiner;
  d.validate();
  return d;
}

subword::TrainOptions RunConfig::tokenizer_options(bool source) const {
  subword::TrainOptions o;
  o.vocab_size = source ? source_vocab : target_vocab;
  o.character_coverage = character_coverage;
  o.seed = seed;
  return o;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kData, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::kData, "failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kData, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace nmt::app
