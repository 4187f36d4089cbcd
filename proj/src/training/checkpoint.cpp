#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nmt/error.hpp"
#include "nmt/training.hpp"

namespace nmt::training {

using nlohmann::json;

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) fail(ErrorKind::kContract, std::string(what) + " too large for checkpoint");
  return static_cast<std::uint32_t>(v);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      fail(ErrorKind::kCorrupt, std::string("checkpoint truncated while reading ") + what);
    }
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint16_t u16(const char* what) {
    auto b = take(2, what);
    return static_cast<std::uint16_t>(static_cast<unsigned char>(b[0]) |
                                      (static_cast<unsigned char>(b[1]) << 8));
  }

  std::uint32_t u32(const char* what) {
    auto b = take(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
    return v;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

json config_to_json(const models::ModelConfig& c) {
  json j;
  j["family"] = models::to_string(c.family);
  if (c.family == models::Family::kLstm) {
    const auto& l = c.lstm;
    j["src_vocab"] = l.src_vocab;
    j["tgt_vocab"] = l.tgt_vocab;
    j["embed_dim"] = l.embed_dim;
    j["hidden_dim"] = l.hidden_dim;
    j["dropout"] = l.dropout;
  } else {
    const auto& t = c.transformer;
    j["src_vocab"] = t.src_vocab;
    j["tgt_vocab"] = t.tgt_vocab;
    j["model_dim"] = t.model_dim;
    j["heads"] = t.heads;
    j["layers"] = t.layers;
    j["ff_dim"] = t.ff_dim;
    j["max_positions"] = t.max_positions;
    j["dropout"] = t.dropout;
    j["pre_norm"] = t.pre_norm;
  }
  return j;
}

models::ModelConfig config_from_json(const json& j) {
  models::ModelConfig c;
  c.family = models::parse_family(j.at("family").get<std::string>());
  if (c.family == models::Family::kLstm) {
    auto& l = c.lstm;
    l.src_vocab = j.at("src_vocab");
    l.tgt_vocab = j.at("tgt_vocab");
    l.embed_dim = j.at("embed_dim");
    l.hidden_dim = j.at("hidden_dim");
    l.dropout = j.at("dropout");
  } else {
    auto& t = c.transformer;
    t.src_vocab = j.at("src_vocab");
    t.tgt_vocab = j.at("tgt_vocab");
    t.model_dim = j.at("model_dim");
    t.heads = j.at("heads");
    t.layers = j.at("layers");
    t.ff_dim = j.at("ff_dim");
    t.max_positions = j.at("max_positions");
    t.dropout = j.at("dropout");
    t.pre_norm = j.at("pre_norm");
  }
  c.set_vocab(c.src_vocab(), c.tgt_vocab());
  return c;
}

}  // namespace

std::string model_config_json(const models::ModelConfig& config) {
  return config_to_json(config).dump();
}

models::ModelConfig parse_model_config_json(std::string_view text) {
  try {
    return config_from_json(json::parse(text));
  } catch (const json::exception& e) {
    fail(ErrorKind::kData, std::string("model config: ") + e.what());
  }
}

Checkpoint capture(const models::Seq2Seq<float>& model, const TokenizerPair& tokenizers) {
  Checkpoint c;
  c.model = model.config();
  const auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.parameters.emplace_back(params[i].name, params[i].value);
  }
  c.source_fingerprint = tokenizers.source.fingerprint();
  c.target_fingerprint = tokenizers.target.fingerprint();
  return c;
}

void restore(const Checkpoint& checkpoint, models::Seq2Seq<float>& model) {
  auto& params = model.parameters();
  if (checkpoint.parameters.size() != params.size()) {
    fail(ErrorKind::kShape, "checkpoint has " + std::to_string(checkpoint.parameters.size()) +
                                " parameters, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, value] = checkpoint.parameters[i];
    auto& p = params[i];
    if (name != p.name) {
      fail(ErrorKind::kShape, "checkpoint parameter '" + name + "' where model expects '" +
                                  p.name + "'");
    }
    if (value.shape != p.value.shape) {
      fail(ErrorKind::kShape, "parameter '" + name + "' has shape " +
                                  ad::shape_string(value.shape) + " in checkpoint but " +
                                  ad::shape_string(p.value.shape) + " in model");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].value.data = checkpoint.parameters[i].second.data;
  }
}

std::unique_ptr<models::Seq2Seq<float>> instantiate(const Checkpoint& checkpoint) {
  auto model = models::make_model<float>(checkpoint.model, 0);
  restore(checkpoint, *model);
  return model;
}

void verify_tokenizers(const Checkpoint& checkpoint, const TokenizerPair& tokenizers) {
  auto check = [](const std::string& expected, const subword::SubwordModel& m, const char* side) {
    if (m.fingerprint() != expected) {
      fail(ErrorKind::kFingerprint, std::string(side) + " tokenizer fingerprint " +
                                        m.fingerprint() + " does not match checkpoint " +
                                        expected + "; use the tokenizer the model was trained with");
    }
  };
  check(checkpoint.source_fingerprint, tokenizers.source, "source");
  check(checkpoint.target_fingerprint, tokenizers.target, "target");
}

std::string serialize_checkpoint(const Checkpoint& c) {
  json meta;
  meta["model"] = config_to_json(c.model);
  meta["source_fingerprint"] = c.source_fingerprint;
  meta["target_fingerprint"] = c.target_fingerprint;
  meta["epoch"] = c.epoch;
  meta["validation_loss"] = c.validation_loss;
  meta["seed"] = c.seed;
  meta["strategy"] = c.strategy;
  const std::string meta_text = meta.dump();

  std::string out(kCheckpointMagic, 4);
  put_u16(out, kCheckpointVersion);
  put_u32(out, checked_u32(meta_text.size(), "metadata"));
  out += meta_text;
  put_u32(out, checked_u32(c.parameters.size(), "parameter count"));
  for (const auto& [name, value] : c.parameters) {
    put_u32(out, checked_u32(name.size(), "parameter name"));
    out += name;
    put_u32(out, checked_u32(value.shape.size(), "rank"));
    for (auto d : value.shape) put_u32(out, checked_u32(d, "dimension"));
    for (float x : value.data) {
      std::uint32_t bits;
      std::memcpy(&bits, &x, 4);
      put_u32(out, bits);
    }
  }
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4, "magic") != std::string_view(kCheckpointMagic, 4)) {
    fail(ErrorKind::kCorrupt, "not a checkpoint file (bad magic bytes)");
  }
  const auto version = r.u16("version");
  if (version != kCheckpointVersion) {
    fail(ErrorKind::kVersion, "checkpoint format version " + std::to_string(version) +
                                  " is not supported (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  const auto meta_len = r.u32("metadata length");
  const auto meta_text = r.take(meta_len, "metadata");
  try {
    const auto meta = json::parse(meta_text);
    c.model = config_from_json(meta.at("model"));
    c.source_fingerprint = meta.at("source_fingerprint");
    c.target_fingerprint = meta.at("target_fingerprint");
    c.epoch = meta.at("epoch");
    c.validation_loss = meta.at("validation_loss");
    c.seed = meta.at("seed");
    c.strategy = meta.at("strategy");
  } catch (const json::exception& e) {
    fail(ErrorKind::kCorrupt, std::string("checkpoint metadata unreadable: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::kCorrupt, std::string("checkpoint metadata invalid: ") + e.what());
  }
  const auto count = r.u32("parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.u32("parameter name length");
    std::string name(r.take(name_len, "parameter name"));
    const auto rank = r.u32("parameter rank");
    ad::Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(r.u32("parameter dimension"));
    const std::size_t n = ad::numel(shape);
    if (n > bytes.size() / 4) fail(ErrorKind::kCorrupt, "parameter '" + name + "' is too large");
    std::vector<float> data(n);
    for (auto& x : data) {
      const std::uint32_t bits = r.u32("parameter values");
      std::memcpy(&x, &bits, 4);
    }
    c.parameters.emplace_back(std::move(name), ad::Array<float>(std::move(shape), std::move(data)));
  }
  if (!r.done()) fail(ErrorKind::kCorrupt, "checkpoint has trailing bytes");
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(checkpoint);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kData, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::kData, "failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kData, "cannot open checkpoint " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_checkpoint(buffer.str());
}

}  // namespace nmt::training
