#include <doctest.h>

#include <filesystem>
#include <map>

#include "nmt/app.hpp"
#include "nmt/error.hpp"
#include "nmt/text.hpp"

using namespace nmt;
using namespace nmt::app;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an nmt::Error");
  return ErrorKind::kInternal;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("nmt_test_app_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Inverse of the toy translation, written from the letter table alone.
std::string untranslate(const std::string& target) {
  const std::u32string letters = U"अबचदएफगहइजकलमनओपखरसतउवभषयझ";
  std::map<char32_t, char> back;
  for (std::size_t i = 0; i < letters.size(); ++i) back[letters[i]] = static_cast<char>('a' + i);
  std::vector<std::string> words;
  for (const auto& w : text::split_words(target)) {
    std::string plain;
    for (char32_t c : text::to_u32(w)) plain.push_back(back.at(c));
    words.push_back(plain);
  }
  if (words.size() >= 2) {
    const auto last = words.back();
    words.pop_back();
    words.insert(words.begin() + 1, last);
  }
  std::string out;
  for (const auto& w : words) out += (out.empty() ? "" : " ") + w;
  return out;
}

}  // namespace

TEST_CASE("config round trips through its echo") {
  RunConfig c;
  c.set("train.max_epochs", "4");
  c.set("decode.joiner", "\" ; \"");
  c.set("model.families", "transformer");
  c.set("model.dropout", "0.25");
  const auto dir = scratch("echo");
  c.echo(dir);
  RunConfig d;
  d.load_file(dir / "config.ini");
  CHECK(d.to_ini() == c.to_ini());
  CHECK(d.max_epochs == 4);
  CHECK(d.joiner == " ; ");
  CHECK(d.families == std::vector<std::string>{"transformer"});
  CHECK(d.dropout == 0.25);
  CHECK(RunConfig().get("decode.joiner") == "\", \"");
  fs::remove_all(dir);
}

TEST_CASE("config rejects unknown keys and bad values") {
  RunConfig c;
  CHECK(kind_of([&] { c.set("train.epochs", "3"); }) == ErrorKind::kContract);
  CHECK(kind_of([&] { c.set("train.max_epochs", "three"); }) == ErrorKind::kContract);
  CHECK(kind_of([&] { c.set("train.max_epochs", "-1"); }) == ErrorKind::kContract);
  CHECK(kind_of([&] { c.set("model.pre_norm", "maybe"); }) == ErrorKind::kContract);
  CHECK(kind_of([&] { c.apply_override("train.seed"); }) == ErrorKind::kContract);
  c.apply_override("train.seed = 42");
  CHECK(c.seed == 42);

  const auto dir = scratch("unknown");
  write_text(dir / "a.ini", "[train]\nmax_epochs = 3\nwarmup = 100\n");
  CHECK(kind_of([&] { RunConfig().load_file(dir / "a.ini"); }) == ErrorKind::kContract);
  write_text(dir / "b.ini", "seed = 3\n");
  CHECK(kind_of([&] { RunConfig().load_file(dir / "b.ini"); }) == ErrorKind::kContract);
  write_text(dir / "c.ini", "; comment\n[train]\nseed = 9\n[eval]\n");
  RunConfig ok;
  ok.load_file(dir / "c.ini");
  CHECK(ok.seed == 9);
  fs::remove_all(dir);
}

TEST_CASE("config feeds the module configs") {
  RunConfig c;
  c.lstm_hidden = 48;
  c.transformer_layers = 3;
  c.learning_rate = 0.01;
  const auto t = c.train_config(models::Family::kTransformer);
  CHECK(t.model.family == models::Family::kTransformer);
  CHECK(t.model.transformer.layers == 3);
  CHECK(t.effective_learning_rate() == 0.01);
  CHECK(c.model_config(models::Family::kLstm).lstm.hidden_dim == 48);
  c.comma_split_threshold = 0;
  CHECK(kind_of([&] { c.decode_config(); }) == ErrorKind::kContract);
}

TEST_CASE("the toy translation is invertible") {
  for (const auto& domain : toy_domains()) {
    const auto c = make_toy_corpus(domain, corpus::Split::kTrain, ToyOptions{});
    for (const auto& p : c.pairs) {
      CHECK(untranslate(p.target) == p.source);
      CHECK(corpus::normalize_text(p.source) == p.source);
      CHECK(corpus::normalize_text(p.target) == p.target);
    }
  }
  CHECK(toy_translate("ab cd ef") == "अब एफ चद");
  CHECK(toy_translate("ab") == "अब");
  CHECK(untranslate(toy_translate("one two three")) == "one two three");
}

TEST_CASE("toy domains are vocabulary-shifted and seeded") {
  ToyOptions o;
  const auto general = make_toy_corpus("general", corpus::Split::kTrain, o);
  const auto ai = make_toy_corpus("ai", corpus::Split::kTrain, o);
  const auto ai_dev = make_toy_corpus("ai", corpus::Split::kDev, o);
  CHECK(general.size() == o.general_train);
  CHECK(ai.size() == o.domain_train);
  CHECK(ai_dev.size() == o.domain_dev);
  CHECK(ai.pairs[0].domain == "ai");
  const auto cov = corpus::token_coverage(general, ai, corpus::Side::kSource);
  CHECK(cov.unique_percent() < 80.0);
  CHECK(cov.unique_percent() > 20.0);
  const auto again = make_toy_corpus("ai", corpus::Split::kTrain, o);
  CHECK(again.pairs == ai.pairs);
  CHECK(ai_dev.pairs[0] != ai.pairs[0]);
  o.seed = 8;
  CHECK(make_toy_corpus("ai", corpus::Split::kTrain, o).pairs != ai.pairs);
  CHECK(kind_of([&] { make_toy_corpus("law", corpus::Split::kTrain, o); }) == ErrorKind::kContract);
}

TEST_CASE("toy data files load back cleanly") {
  const auto dir = scratch("toy");
  ToyOptions o;
  write_toy_data(dir, o);
  const auto dev = load_clean(dir / "chemistry", "chemistry", corpus::Split::kDev, 20);
  CHECK(dev.size() == o.domain_dev);
  CHECK(dev.pairs == make_toy_corpus("chemistry", corpus::Split::kDev, o).pairs);
  CHECK(kind_of([&] { load_clean(dir / "law", "law", corpus::Split::kDev, 20); }) ==
        ErrorKind::kData);
  fs::remove_all(dir);
}

TEST_CASE("a small experiment fills every cell and can be resumed") {
  const auto dir = scratch("experiment");
  ToyOptions o;
  o.general_train = 60;
  o.general_dev = 10;
  o.domain_train = 12;
  o.domain_dev = 8;
  write_toy_data(dir / "data", o);
  RunConfig c;
  c.data_dir = (dir / "data").string();
  c.max_epochs = 1;
  c.finetune_epochs = 1;
  c.factor = 2;
  c.source_vocab = c.target_vocab = 80;
  ExperimentData data = load_experiment_data(c);
  const auto first = run_experiment(c, data, dir / "out");
  CHECK(first.rows.size() == 12);
  CHECK(first.cells.size() == 12);
  const auto csv = read_text(dir / "out" / "matrix.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
  CHECK(fs::exists(dir / "out" / "config.ini"));
  CHECK(fs::exists(dir / "out" / "lstm" / "ai" / "finetune" / "model.nmtc"));
  CHECK(fs::exists(dir / "out" / "transformer" / "chemistry" / "mixed" / "chemistry.dev.log"));
  const auto model_bytes = read_text(dir / "out" / "lstm" / "ai" / "mixed" / "model.nmtc");

  std::vector<std::string> messages;
  const auto second =
      run_experiment(c, data, dir / "out", [&](const std::string& m) { messages.push_back(m); });
  for (const auto& m : messages) CHECK(m.rfind("reusing", 0) == 0);
  CHECK(read_text(dir / "out" / "matrix.csv") == csv);
  CHECK(read_text(dir / "out" / "lstm" / "ai" / "mixed" / "model.nmtc") == model_bytes);
  fs::remove_all(dir);
}
