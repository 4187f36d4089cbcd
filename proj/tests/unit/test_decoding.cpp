#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nmt/decoding.hpp"
#include "nmt/error.hpp"
#include "support/fixtures.hpp"
#include "support/toy.hpp"

using namespace nmt;
using namespace nmt::decoding;
using nmt::testing::copy_corpus;
using nmt::testing::toy_tokenizers;

namespace {

// Emits fixed logits per step and records the tokens it was fed.
class ScriptedModel : public models::Seq2Seq<float> {
 public:
  ScriptedModel(std::vector<std::vector<float>> script, std::vector<int>* fed)
      : Seq2Seq(nmt::testing::tiny_config(models::Family::kLstm)),
        script_(std::move(script)),
        fed_(fed) {}

  ad::Var<float> forward(ad::Tape<float>&, const models::TokenBatch&, Rng*) override {
    fail(ErrorKind::kInternal, "not used");
  }

  std::unique_ptr<models::StepDecoder<float>> start_decoding(std::span<const int>) override {
    struct Decoder : models::StepDecoder<float> {
      const std::vector<std::vector<float>>* script;
      std::vector<int>* fed;
      std::size_t step = 0;
      std::vector<float> next(int prev) override {
        if (fed) fed->push_back(prev);
        const auto& s = *script;
        return s[std::min(step++, s.size() - 1)];
      }
    };
    auto d = std::make_unique<Decoder>();
    d->script = &script_;
    d->fed = fed_;
    return d;
  }

 private:
  std::vector<std::vector<float>> script_;
  std::vector<int>* fed_;
};

std::vector<float> one_hot(int id, std::size_t vocab = 8) {
  std::vector<float> v(vocab, 0.0f);
  v[id] = 1.0f;
  return v;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an nmt::Error");
  return ErrorKind::kInternal;
}

std::string words(std::size_t n, std::size_t comma_after = 0) {
  std::string s;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i > 1) s += ' ';
    s += "w" + std::to_string(i);
    if (i == comma_after) s += ',';
  }
  return s;
}

}  // namespace

TEST_CASE("greedy decoding stops at EOS and feeds back its own output") {
  std::vector<int> fed;
  ScriptedModel model({one_hot(5), one_hot(6), one_hot(subword::kEosId), one_hot(7)}, &fed);
  const std::vector<int> src = {4, 4};
  const auto out = greedy_decode(model, src, DecodeConfig{});
  CHECK(out == std::vector<int>{5, 6});
  CHECK(fed == std::vector<int>{subword::kBosId, 5, 6});
}

TEST_CASE("greedy decoding breaks ties toward the lowest id") {
  std::vector<float> tie(8, 0.0f);
  tie[6] = 2.0f;
  tie[5] = 2.0f;
  ScriptedModel model({tie, one_hot(subword::kEosId)}, nullptr);
  const std::vector<int> src = {4};
  CHECK(greedy_decode(model, src, DecodeConfig{}) == std::vector<int>{5});
}

TEST_CASE("greedy decoding respects the length cap") {
  ScriptedModel model({one_hot(5)}, nullptr);
  const std::vector<int> src = {4, 4, 4};
  CHECK(greedy_decode(model, src, DecodeConfig{}).size() == 2 * 3 + 8);
  DecodeConfig one;
  one.max_length = 1;
  CHECK(greedy_decode(model, src, one).size() == 1);
  CHECK(kind_of([&] { greedy_decode(model, std::vector<int>{}, one); }) == ErrorKind::kContract);
}

TEST_CASE("split_segments trims and drops empty segments") {
  CHECK(split_segments("a b, c,, d ,") == std::vector<std::string>{"a b", "c", "d"});
  CHECK(split_segments(",,,,").empty());
  CHECK(split_segments("plain") == std::vector<std::string>{"plain"});
}

TEST_CASE("the comma heuristic splits only long sentences with commas") {
  DecodeConfig cfg;
  std::vector<std::string> calls;
  const SegmentTranslator echo = [&](const std::string& s) {
    calls.push_back(s);
    return "<" + s + ">";
  };

  SUBCASE("short input with a comma is translated once") {
    CHECK(translate_with("One, two three", cfg, echo) == "<one, two three>");
    CHECK(calls.size() == 1);
  }
  SUBCASE("long input without a comma is translated once") {
    translate_with(words(25), cfg, echo);
    CHECK(calls.size() == 1);
  }
  SUBCASE("exactly the threshold does not split") {
    translate_with(words(20, 10), cfg, echo);
    CHECK(calls.size() == 1);
  }
  SUBCASE("25 words with one comma give two calls joined in order") {
    const auto out = translate_with(words(25, 12), cfg, echo);
    REQUIRE(calls.size() == 2);
    CHECK(calls[0] == words(12));
    CHECK(calls[1].rfind("w13", 0) == 0);
    CHECK(out == "<" + calls[0] + ">, <" + calls[1] + ">");
  }
  SUBCASE("segment count is commas plus one minus empty segments") {
    std::string s = words(30, 5);
    s += ", , tail, end";
    translate_with(s, cfg, echo);
    CHECK(calls.size() == 4);
  }
  SUBCASE("only commas yield an empty translation") {
    std::string s;
    for (int i = 0; i < 25; ++i) s += ", ";
    CHECK(translate_with(s, cfg, echo).empty());
    CHECK(calls.empty());
  }
  SUBCASE("empty input is not translated") {
    CHECK(translate_with("  ", cfg, echo).empty());
    CHECK(calls.empty());
  }
  SUBCASE("joiner and threshold are configurable") {
    cfg.comma_split_threshold = 2;
    cfg.joiner = " | ";
    CHECK(translate_with("a b, c", cfg, echo) == "<a b> | <c>");
  }
}

TEST_CASE("detokenize turns markers into spaces") {
  const subword::SubwordModel m({{U"▁abc", -1.0}, {U"de", -2.0}, {U"▁de", -2.0}});
  const int abc = *m.find(U"▁abc");
  const int de = *m.find(U"de");
  const int sde = *m.find(U"▁de");
  CHECK(detokenize(m, std::vector<int>{abc, de}) == "abcde");
  CHECK(detokenize(m, std::vector<int>{abc, sde}) == "abc de");
  CHECK(detokenize(m, std::vector<int>{sde, abc}) == "de abc");
  CHECK(detokenize(m, std::vector<int>{}).empty());
  CHECK(kind_of([&] { detokenize(m, std::vector<int>{99}); }) == ErrorKind::kContract);
}

TEST_CASE("a translator needs the checkpoint's tokenizers") {
  Rng rng(3);
  const auto c = copy_corpus(rng, 12, 1, 3);
  const auto toks = toy_tokenizers(c);
  auto cfg = nmt::testing::tiny_config(models::Family::kLstm);
  cfg.set_vocab(toks.source.vocab_size(), toks.target.vocab_size());
  auto model = models::make_model<float>(cfg, 1);
  const auto ckpt = training::capture(*model, toks);
  CHECK_NOTHROW(Translator(ckpt, toks, DecodeConfig{}));
  const auto other = toy_tokenizers(c, 20);
  CHECK(kind_of([&] { Translator(ckpt, other, DecodeConfig{}); }) == ErrorKind::kFingerprint);
}

TEST_CASE("an overfit copy model reproduces its inputs") {
  Rng rng(5);
  training::TrainingData data;
  data.general_train = copy_corpus(rng, 8, 1, 3);
  data.general_dev = data.general_train;
  const auto toks = toy_tokenizers(data.general_train);
  training::TrainConfig cfg;
  cfg.model.family = models::Family::kLstm;
  cfg.model.lstm.embed_dim = 16;
  cfg.model.lstm.hidden_dim = 32;
  cfg.model.lstm.dropout = 0.0;
  cfg.batch_size = 8;
  cfg.max_epochs = 150;
  cfg.learning_rate = 1e-2;
  const auto result =
      training::run_strategy(training::Strategy::general_only(), data, toks, cfg);
  Translator translator(result.checkpoint, toks, DecodeConfig{});
  for (const auto& p : data.general_train.pairs) {
    const auto ids = subword::encode(toks.source, p.source);
    CHECK(greedy_decode(translator.model(), ids, translator.config()) == ids);
    CHECK(translator.translate(p.source) == p.target);
  }
  const auto first = translator.translate(data.general_train.pairs[0].source);
  CHECK(translator.translate(data.general_train.pairs[0].source) == first);

  const auto dir = std::filesystem::temp_directory_path() / "nmt_test_translate";
  std::filesystem::create_directories(dir);
  {
    std::ofstream in(dir / "in.txt");
    for (const auto& p : data.general_train.pairs) in << p.source << "\r\n";
    in << "\n";
  }
  const auto n = translate_file(translator, dir / "in.txt", dir / "out.txt");
  CHECK(n == data.general_train.size() + 1);
  std::ifstream out(dir / "out.txt", std::ios::binary);
  std::stringstream buffer;
  buffer << out.rdbuf();
  const auto text = buffer.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(n));
  CHECK(text.find('\r') == std::string::npos);
  CHECK(text.rfind(data.general_train.pairs[0].target + "\n", 0) == 0);
  std::filesystem::remove_all(dir);
}
