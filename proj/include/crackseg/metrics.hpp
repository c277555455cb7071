#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crackseg/core/error.hpp"

namespace crackseg {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct Prf1 {
  double precision = 0, recall = 0, f1 = 0;
  bool degenerate = false;  // some denominator was zero
};

template <typename T>
std::vector<std::uint8_t> binarize(std::span<const T> prob, double threshold = 0.5) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("binarize: threshold must lie in [0, 1]");
  std::vector<std::uint8_t> out(prob.size());
  for (std::size_t i = 0; i < prob.size(); ++i) out[i] = static_cast<double>(prob[i]) >= threshold ? 1 : 0;
  return out;
}

inline ConfusionCounts& accumulate(ConfusionCounts& counts, std::span<const std::uint8_t> pred,
                                   std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size())
    throw ShapeError("accumulate: prediction has " + std::to_string(pred.size()) + " pixels, ground truth " +
                     std::to_string(gt.size()));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, g = gt[i] != 0;
    if (p && g) ++counts.tp;
    else if (p) ++counts.fp;
    else if (g) ++counts.fn;
    else ++counts.tn;
  }
  return counts;
}

inline double f1_score(double precision, double recall) {
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

inline Prf1 prf1(const ConfusionCounts& c) {
  Prf1 r;
  const double tp = static_cast<double>(c.tp);
  if (c.tp + c.fp > 0) r.precision = tp / static_cast<double>(c.tp + c.fp);
  else r.degenerate = true;
  if (c.tp + c.fn > 0) r.recall = tp / static_cast<double>(c.tp + c.fn);
  else r.degenerate = true;
  if (r.precision + r.recall > 0) r.f1 = f1_score(r.precision, r.recall);
  else r.degenerate = true;
  return r;
}

enum class Averaging { micro, macro };

// Per-image rows plus pooled (micro) and per-image-mean (macro) summaries.
class MetricsReport {
 public:
  struct Row {
    std::string id;
    ConfusionCounts counts;
    Prf1 scores;
  };

  void add(std::string id, const ConfusionCounts& c) {
    rows_.push_back({std::move(id), c, prf1(c)});
    pooled_ += c;
  }

  const std::vector<Row>& rows() const noexcept { return rows_; }
  const ConfusionCounts& pooled() const noexcept { return pooled_; }

  Prf1 summary(Averaging mode = Averaging::micro) const {
    if (mode == Averaging::micro) return prf1(pooled_);
    Prf1 m;
    if (rows_.empty()) {
      m.degenerate = true;
      return m;
    }
    for (const auto& r : rows_) {
      m.precision += r.scores.precision;
      m.recall += r.scores.recall;
      m.f1 += r.scores.f1;
      m.degenerate = m.degenerate || r.scores.degenerate;
    }
    const double n = static_cast<double>(rows_.size());
    m.precision /= n;
    m.recall /= n;
    m.f1 /= n;
    return m;
  }

  // Columns: id,tp,fp,fn,tn,precision,recall,f1,degenerate. The last two
  // rows carry the ids "micro" and "macro".
  std::string csv() const {
    std::ostringstream os;
    os << "id,tp,fp,fn,tn,precision,recall,f1,degenerate\n";
    auto line = [&](const std::string& id, const ConfusionCounts& c, const Prf1& s) {
      os << id << ',' << c.tp << ',' << c.fp << ',' << c.fn << ',' << c.tn << ',' << std::fixed
         << std::setprecision(6) << s.precision << ',' << s.recall << ',' << s.f1 << ',' << (s.degenerate ? 1 : 0)
         << '\n';
      os.unsetf(std::ios::floatfield);
    };
    for (const auto& r : rows_) line(r.id, r.counts, r.scores);
    line("micro", pooled_, summary(Averaging::micro));
    line("macro", pooled_, summary(Averaging::macro));
    return os.str();
  }

  nlohmann::json json(double threshold) const {
    auto scores = [](const Prf1& s) {
      return nlohmann::json{{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1},
                            {"degenerate", s.degenerate}};
    };
    auto counts = [](const ConfusionCounts& c) {
      return nlohmann::json{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
    };
    nlohmann::json images = nlohmann::json::array();
    for (const auto& r : rows_) images.push_back({{"id", r.id}, {"counts", counts(r.counts)}, {"scores", scores(r.scores)}});
    return {{"threshold", threshold},
            {"images", images},
            {"summary",
             {{"counts", counts(pooled_)},
              {"micro", scores(summary(Averaging::micro))},
              {"macro", scores(summary(Averaging::macro))}}}};
  }

  // "Pr 89.8  Re 86.9  F1 88.3" in percent, like a results-table row.
  std::string table_row(Averaging mode = Averaging::micro) const {
    const Prf1 s = summary(mode);
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << "Pr " << 100 * s.precision << "  Re " << 100 * s.recall << "  F1 "
       << 100 * s.f1;
    if (s.degenerate) os << "  (degenerate)";
    return os.str();
  }

 private:
  std::vector<Row> rows_;
  ConfusionCounts pooled_;
};

}  // namespace crackseg
