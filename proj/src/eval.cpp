#include "dialect_lab/eval.h"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "dialect_lab/errors.h"

namespace dialect_lab::eval {

std::int64_t ConfusionMatrix::total() const {
  std::int64_t n = 0;
  for (const auto& row : counts)
    for (auto v : row) n += v;
  return n;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t n = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) n += counts[i][i];
  return n;
}

ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> preds,
                          const std::vector<std::string>& class_names) {
  if (labels.empty()) throw InvalidArgument("confusion: no samples");
  if (labels.size() != preds.size())
    throw InvalidArgument("confusion: " + std::to_string(labels.size()) +
                          " labels but " + std::to_string(preds.size()) +
                          " predictions");
  const auto C = static_cast<int>(class_names.size());
  ConfusionMatrix cm;
  cm.class_names = class_names;
  cm.counts.assign(class_names.size(), std::vector<std::int64_t>(class_names.size(), 0));
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] < 0 || labels[k] >= C || preds[k] < 0 || preds[k] >= C)
      throw InvalidArgument("confusion: unknown class index at position " +
                            std::to_string(k));
    ++cm.counts[static_cast<std::size_t>(labels[k])][static_cast<std::size_t>(preds[k])];
  }
  return cm;
}

std::string to_string(AverageMode mode) {
  return mode == AverageMode::kMacro ? "macro" : "weighted";
}

AverageMode parse_average_mode(const std::string& text) {
  if (text == "macro") return AverageMode::kMacro;
  if (text == "weighted") return AverageMode::kWeighted;
  throw InvalidArgument("unknown averaging mode '" + text +
                        "' (expected macro or weighted)");
}

EvalReport metrics(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total <= 0) throw InvalidArgument("metrics: confusion matrix is empty");
  const std::size_t C = cm.classes();
  EvalReport r;
  r.confusion = cm;
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  r.precision.assign(C, 0.0);
  r.recall.assign(C, 0.0);
  r.f1.assign(C, 0.0);
  r.support.assign(C, 0);
  for (std::size_t i = 0; i < C; ++i) {
    std::int64_t tp = cm.counts[i][i], predicted = 0, actual = 0;
    for (std::size_t j = 0; j < C; ++j) {
      predicted += cm.counts[j][i];
      actual += cm.counts[i][j];
    }
    r.support[i] = actual;
    r.precision[i] = predicted > 0 ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    r.recall[i] = actual > 0 ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
    const double pr = r.precision[i] + r.recall[i];
    r.f1[i] = pr > 0.0 ? 2.0 * r.precision[i] * r.recall[i] / pr : 0.0;
  }
  for (std::size_t i = 0; i < C; ++i) {
    const auto support = static_cast<double>(r.support[i]);
    const auto n = static_cast<double>(total);
    r.macro.precision += r.precision[i] / static_cast<double>(C);
    r.macro.recall += r.recall[i] / static_cast<double>(C);
    r.macro.f1 += r.f1[i] / static_cast<double>(C);
    r.weighted.precision += r.precision[i] * support / n;
    r.weighted.recall += r.recall[i] * support / n;
    r.weighted.f1 += r.f1[i] * support / n;
  }
  return r;
}

EvalReport aggregate(std::span<const EvalReport> reports) {
  if (reports.empty()) throw InvalidArgument("aggregate: no reports");
  const EvalReport& first = reports.front();
  const std::size_t C = first.precision.size();
  for (const auto& r : reports) {
    if (r.config_id != first.config_id)
      throw InvalidArgument("aggregate: mixed configurations '" + first.config_id +
                            "' and '" + r.config_id + "'");
    if (r.confusion.class_names != first.confusion.class_names || r.precision.size() != C)
      throw InvalidArgument("aggregate: reports use different class sets");
  }
  const double n = static_cast<double>(reports.size());
  EvalReport out;
  out.config_id = first.config_id;
  out.display_name = first.display_name;
  out.confusion.class_names = first.confusion.class_names;
  out.confusion.counts.assign(C, std::vector<std::int64_t>(C, 0));
  out.precision.assign(C, 0.0);
  out.recall.assign(C, 0.0);
  out.f1.assign(C, 0.0);
  out.support.assign(C, 0);
  for (const auto& r : reports) {
    out.seeds.insert(out.seeds.end(), r.seeds.begin(), r.seeds.end());
    out.accuracy += r.accuracy / n;
    for (std::size_t i = 0; i < C; ++i) {
      out.precision[i] += r.precision[i] / n;
      out.recall[i] += r.recall[i] / n;
      out.f1[i] += r.f1[i] / n;
      out.support[i] += r.support[i];
      for (std::size_t j = 0; j < C; ++j)
        out.confusion.counts[i][j] += r.confusion.counts[i][j];
    }
    out.macro.precision += r.macro.precision / n;
    out.macro.recall += r.macro.recall / n;
    out.macro.f1 += r.macro.f1 / n;
    out.weighted.precision += r.weighted.precision / n;
    out.weighted.recall += r.weighted.recall / n;
    out.weighted.f1 += r.weighted.f1 / n;
  }
  return out;
}

namespace {

nlohmann::json averages_json(const Averages& a) {
  return {{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}};
}

Averages averages_from(const nlohmann::json& j) {
  return {j.at("precision").get<double>(), j.at("recall").get<double>(),
          j.at("f1").get<double>()};
}

std::vector<const EvalReport*> ordered(std::span<const EvalReport> reports) {
  std::vector<const EvalReport*> rows;
  for (const auto& r : reports) rows.push_back(&r);
  std::stable_sort(rows.begin(), rows.end(), [](const EvalReport* a, const EvalReport* b) {
    return config_rank(a->config_id) < config_rank(b->config_id);
  });
  return rows;
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", fraction * 100.0);
  return buf;
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  return {{"config", config_id},
          {"model", display_name},
          {"seeds", seeds},
          {"class_names", confusion.class_names},
          {"accuracy", accuracy},
          {"per_class",
           {{"precision", precision}, {"recall", recall}, {"f1", f1}, {"support", support}}},
          {"macro", averages_json(macro)},
          {"weighted", averages_json(weighted)},
          {"confusion", confusion.counts}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.config_id = j.at("config").get<std::string>();
  r.display_name = j.value("model", r.config_id);
  r.seeds = j.value("seeds", std::vector<std::uint64_t>{});
  r.confusion.class_names = j.at("class_names").get<std::vector<std::string>>();
  r.confusion.counts = j.at("confusion").get<std::vector<std::vector<std::int64_t>>>();
  r.accuracy = j.at("accuracy").get<double>();
  const auto& pc = j.at("per_class");
  r.precision = pc.at("precision").get<std::vector<double>>();
  r.recall = pc.at("recall").get<std::vector<double>>();
  r.f1 = pc.at("f1").get<std::vector<double>>();
  r.support = pc.at("support").get<std::vector<std::int64_t>>();
  r.macro = averages_from(j.at("macro"));
  r.weighted = averages_from(j.at("weighted"));
  return r;
}

int config_rank(const std::string& config_id) {
  static const char* kOrder[] = {"mfcc+cnn", "mfcc+rnn", "wavelet+cnn", "wavelet+rnn"};
  for (int i = 0; i < 4; ++i)
    if (config_id == kOrder[i]) return i;
  return 4;
}

std::string render_table(std::span<const EvalReport> reports, AverageMode mode) {
  if (reports.empty()) throw InvalidArgument("render: no reports");
  const std::vector<std::string> header = {"Model", "Accuracy (%)", "Precision (%)",
                                           "Recall (%)", "F1-score (%)"};
  std::vector<std::vector<std::string>> rows;
  for (const EvalReport* r : ordered(reports)) {
    const Averages& a = r->averages(mode);
    rows.push_back({r->display_name.empty() ? r->config_id : r->display_name,
                    percent(r->accuracy), percent(a.precision), percent(a.recall),
                    percent(a.f1)});
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      // Model names left-aligned, numbers right-aligned under their header.
      const std::string pad(width[c] - cells[c].size(), ' ');
      if (c) s += "  ";
      s += c == 0 ? cells[c] + pad : pad + cells[c];
    }
    return s + "\n";
  };
  std::size_t total_width = 0;
  for (std::size_t w : width) total_width += w;
  total_width += 2 * (width.size() - 1);
  const std::string rule(total_width, '-');

  std::ostringstream os;
  os << rule << "\n" << line(header) << rule << "\n";
  for (const auto& row : rows) os << line(row);
  os << rule << "\n";
  os << "precision/recall/F1: " << to_string(mode) << " average\n";
  return os.str();
}

nlohmann::json render_json(std::span<const EvalReport> reports, AverageMode mode) {
  if (reports.empty()) throw InvalidArgument("render: no reports");
  nlohmann::json out = nlohmann::json::array();
  for (const EvalReport* r : ordered(reports)) {
    const Averages& a = r->averages(mode);
    out.push_back({{"model", r->display_name.empty() ? r->config_id : r->display_name},
                   {"config", r->config_id},
                   {"average", to_string(mode)},
                   {"accuracy", r->accuracy},
                   {"precision", a.precision},
                   {"recall", a.recall},
                   {"f1", a.f1}});
  }
  return out;
}

}  // namespace dialect_lab::eval
