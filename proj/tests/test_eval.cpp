#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "dialect_lab/errors.h"
#include "dialect_lab/eval.h"
#include "oracles.h"

using namespace dialect_lab;
using namespace dialect_lab::eval;

namespace {

const std::vector<std::string> kNames{"egyptian", "levantine", "gulf"};

EvalReport from_pairs(const std::vector<int>& y, const std::vector<int>& p, const std::string& id = "mfcc+cnn") {
  auto r = metrics(confusion(y, p, kNames));
  r.config_id = id;
  return r;
}

std::string squeeze(const std::string& line) {
  std::istringstream in(line);
  std::string word, out;
  while (in >> word) out += (out.empty() ? "" : " ") + word;
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

EvalReport table_row(const std::string& id, const std::string& name, double acc, double p, double r, double f) {
  EvalReport rep;
  rep.config_id = id;
  rep.display_name = name;
  rep.accuracy = acc;
  rep.macro = {p, r, f};
  rep.weighted = {p, r, f};
  return rep;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("confusion counting") {
    const std::vector<int> y{0, 0, 1, 2}, p{0, 1, 1, 2};
    const auto cm = confusion(y, p, kNames);
    CHECK(cm.counts == std::vector<std::vector<std::int64_t>>{{1, 1, 0}, {0, 1, 0}, {0, 0, 1}});
    CHECK(cm.total() == 4);
    CHECK(cm.trace() == 3);

    const std::vector<int> same{2, 1, 0, 2, 2};
    const auto diag = confusion(same, same, kNames);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        if (i != j) CHECK(diag.counts[i][j] == 0);

    const std::vector<int> empty;
    CHECK_THROWS_AS(confusion(empty, empty, kNames), InvalidArgument);
    CHECK_THROWS_AS(confusion(y, same, kNames), InvalidArgument);
    const std::vector<int> bad{0, 3, 1, 2};
    CHECK_THROWS_AS(confusion(y, bad, kNames), InvalidArgument);
  }

  TEST_CASE("metrics on the four-sample example") {
    const auto r = from_pairs({0, 0, 1, 2}, {0, 1, 1, 2});
    CHECK(r.accuracy == 0.75);
    CHECK(r.precision == std::vector<double>{1.0, 0.5, 1.0});
    CHECK(r.recall == std::vector<double>{0.5, 1.0, 1.0});
    CHECK(r.macro.precision == doctest::Approx(0.8333).epsilon(1e-4));
    CHECK(r.macro.recall == doctest::Approx(0.8333).epsilon(1e-4));
    CHECK(r.macro.f1 == doctest::Approx(0.7778).epsilon(1e-4));
    CHECK(r.support == std::vector<std::int64_t>{2, 1, 1});

    const auto perfect = from_pairs({0, 1, 2, 1}, {0, 1, 2, 1});
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.macro.f1 == 1.0);
    CHECK(perfect.weighted.precision == 1.0);

    // A class that is never predicted has precision 0, not NaN.
    const auto never = from_pairs({0, 1, 2}, {0, 0, 0});
    CHECK(never.precision[1] == 0.0);
    CHECK(never.f1[2] == 0.0);
    CHECK_THROWS_AS(metrics(ConfusionMatrix{}), InvalidArgument);
  }

  TEST_CASE("metrics equal an independent counting script") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<int> y, p;
      for (int i = 0; i < 1000; ++i) {
        y.push_back(static_cast<int>(rng() % 3));
        p.push_back(rng() % 4 == 0 ? static_cast<int>(rng() % 3) : y.back());
      }
      const auto r = from_pairs(y, p);
      const auto o = oracle::count_metrics(y, p, 3);
      CHECK(r.accuracy == o.accuracy);
      CHECK(r.precision == o.precision);
      CHECK(r.recall == o.recall);
      CHECK(r.f1 == o.f1);
      CHECK(r.macro.precision == doctest::Approx(o.macro_p).epsilon(1e-15));
      CHECK(r.macro.f1 == doctest::Approx(o.macro_f1).epsilon(1e-15));
      CHECK(r.weighted.precision == doctest::Approx(o.weighted_p).epsilon(1e-15));
      CHECK(r.weighted.recall == doctest::Approx(o.weighted_r).epsilon(1e-15));
      CHECK(r.weighted.f1 == doctest::Approx(o.weighted_f1).epsilon(1e-15));
      // Weighted recall is accuracy.
      CHECK(r.weighted.recall == doctest::Approx(r.accuracy).epsilon(1e-12));
    }
  }

  TEST_CASE("aggregation") {
    auto a = from_pairs({0, 1, 2, 0, 1, 2, 0, 1, 2, 0}, {0, 1, 2, 0, 1, 2, 0, 1, 2, 1});
    auto b = from_pairs({0, 1, 2, 0, 1, 2, 0, 1, 2, 0}, {0, 1, 2, 0, 1, 2, 0, 1, 0, 1});
    auto c = a;
    a.accuracy = 0.9;
    b.accuracy = 0.8;
    c.accuracy = 0.85;
    a.seeds = {1};
    b.seeds = {2};
    c.seeds = {3};
    const std::vector<EvalReport> three{a, b, c};
    const auto m = aggregate(three);
    CHECK(m.accuracy == doctest::Approx(0.85));
    CHECK(m.seeds == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(m.confusion.total() == 30);
    CHECK(m.macro.f1 == doctest::Approx((a.macro.f1 + b.macro.f1 + c.macro.f1) / 3.0));

    const std::vector<EvalReport> permuted{c, a, b};
    CHECK(aggregate(permuted).macro.precision == doctest::Approx(m.macro.precision).epsilon(1e-15));

    const std::vector<EvalReport> one{b};
    CHECK(aggregate(one).to_json() == b.to_json());
    const std::vector<EvalReport> twins{a, a};
    CHECK(aggregate(twins).macro.recall == a.macro.recall);

    auto other = b;
    other.config_id = "wavelet+rnn";
    const std::vector<EvalReport> mixed{a, other};
    CHECK_THROWS_AS(aggregate(mixed), InvalidArgument);
    CHECK_THROWS_AS(aggregate(std::span<const EvalReport>{}), InvalidArgument);
  }

  TEST_CASE("table rendering") {
    const std::vector<EvalReport> reports{
        table_row("wavelet+rnn", "Wavelet + RNN", 0.665, 0.668, 0.665, 0.664),
        table_row("mfcc+cnn", "MFCC + CNN", 0.912, 0.928, 0.912, 0.910),
        table_row("wavelet+cnn", "Wavelet + CNN", 0.740, 0.742, 0.740, 0.739),
        table_row("mfcc+rnn", "MFCC + RNN", 0.835, 0.838, 0.835, 0.834),
    };
    const auto text = render_table(reports);
    const auto lines = lines_of(text);
    std::vector<std::string> rows;
    for (const auto& l : lines)
      if (l.rfind("MFCC", 0) == 0 || l.rfind("Wavelet", 0) == 0) rows.push_back(squeeze(l));
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == "MFCC + CNN 91.2 92.8 91.2 91.0");
    CHECK(rows[1] == "MFCC + RNN 83.5 83.8 83.5 83.4");
    CHECK(rows[2] == "Wavelet + CNN 74.0 74.2 74.0 73.9");
    CHECK(rows[3] == "Wavelet + RNN 66.5 66.8 66.5 66.4");
    CHECK(text.find("Accuracy (%)") != std::string::npos);
    CHECK(text.find("F1-score (%)") != std::string::npos);
    CHECK(text.find("macro") != std::string::npos);
    CHECK(render_table(reports, AverageMode::kWeighted).find("weighted") != std::string::npos);

    // Columns line up: every row has the same length as the header.
    std::size_t header_len = 0;
    for (const auto& l : lines)
      if (l.rfind("Model", 0) == 0) header_len = l.size();
    for (const auto& l : lines)
      if (l.rfind("MFCC", 0) == 0 || l.rfind("Wavelet", 0) == 0) CHECK(l.size() == header_len);

    const std::vector<EvalReport> single{reports[0]};
    int data_rows = 0;
    for (const auto& l : lines_of(render_table(single)))
      if (l.rfind("Wavelet", 0) == 0 || l.rfind("MFCC", 0) == 0) ++data_rows;
    CHECK(data_rows == 1);
    CHECK(config_rank("mfcc+cnn") < config_rank("wavelet+rnn"));
    CHECK(config_rank("other") > config_rank("wavelet+rnn"));
  }

  TEST_CASE("json rendering and report round trip") {
    auto r = from_pairs({0, 0, 1, 2, 1}, {0, 1, 1, 2, 2}, "mfcc+rnn");
    r.display_name = "MFCC + RNN";
    r.seeds = {1, 2};
    const std::vector<EvalReport> one{r};
    const auto j = nlohmann::json::parse(render_json(one).dump());
    REQUIRE(j.size() == 1);
    CHECK(j[0]["model"] == "MFCC + RNN");
    CHECK(j[0]["config"] == "mfcc+rnn");
    CHECK(j[0]["average"] == "macro");
    CHECK(j[0]["accuracy"].get<double>() == r.accuracy);
    CHECK(j[0]["precision"].get<double>() == r.macro.precision);
    CHECK(j[0]["f1"].get<double>() == r.macro.f1);
    CHECK(render_json(one, AverageMode::kWeighted)[0]["recall"].get<double>() == r.weighted.recall);

    const auto back = EvalReport::from_json(nlohmann::json::parse(r.to_json().dump()));
    CHECK(back.config_id == r.config_id);
    CHECK(back.seeds == r.seeds);
    CHECK(back.accuracy == r.accuracy);
    CHECK(back.precision == r.precision);
    CHECK(back.f1 == r.f1);
    CHECK(back.support == r.support);
    CHECK(back.macro.f1 == r.macro.f1);
    CHECK(back.weighted.precision == r.weighted.precision);
    CHECK(back.confusion.counts == r.confusion.counts);
    CHECK(back.confusion.class_names == kNames);

    CHECK(parse_average_mode("weighted") == AverageMode::kWeighted);
    CHECK(to_string(AverageMode::kMacro) == "macro");
    CHECK_THROWS_AS(parse_average_mode("micro"), InvalidArgument);
  }
}
