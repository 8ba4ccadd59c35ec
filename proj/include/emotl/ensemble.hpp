#pragma once

// Unweighted-average and majority-vote ensembling, plus the prediction file
// exchanged between `evaluate` and `ensemble`:
//
//   #predictions<TAB>v1<TAB>label0,label1,...
//   <id><TAB><gold label><TAB><p_0><TAB>...<TAB><p_{C-1}>     (posteriors)
//   <id><TAB><gold label><TAB><predicted label>              (hard label)

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emotl/dataset.hpp"
#include "emotl/errors.hpp"

namespace emotl {

using Posterior = std::vector<double>;

// Entries within `tie_tolerance` of the running best count as ties.
inline std::size_t argmax_lowest(const std::vector<double>& v, double tie_tolerance = 0.0) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best] + tie_tolerance) best = i;
  return best;
}

// Means that agree to this many digits are treated as exact ties, so the
// order of floating-point summation cannot decide between models.
inline constexpr double kPosteriorTieTolerance = 1e-12;

inline void validate_posteriors(const std::vector<Posterior>& posteriors, double tol = 1e-6) {
  if (posteriors.empty()) throw ContractViolation("ensemble of zero models");
  const std::size_t c = posteriors.front().size();
  if (c == 0) throw ContractViolation("empty posterior vector");
  for (const auto& p : posteriors) {
    if (p.size() != c) throw ContractViolation("posterior vectors differ in length");
    double s = 0.0;
    for (double v : p) {
      if (!(v >= 0.0)) throw ContractViolation("negative or NaN posterior");
      s += v;
    }
    if (std::abs(s - 1.0) > tol) throw ContractViolation("posterior does not sum to 1");
  }
}

// argmax of the mean posterior; ties (up to kPosteriorTieTolerance) go to the
// lowest class index.
inline std::size_t ensemble_ua(const std::vector<Posterior>& posteriors) {
  validate_posteriors(posteriors);
  std::vector<double> mean(posteriors.front().size(), 0.0);
  for (const auto& p : posteriors)
    for (std::size_t c = 0; c < p.size(); ++c) mean[c] += p[c];
  for (double& v : mean) v /= static_cast<double>(posteriors.size());
  return argmax_lowest(mean, kPosteriorTieTolerance);
}

// Class with the most votes; ties go to the lowest class index.
inline std::size_t ensemble_mv(const std::vector<std::size_t>& votes, std::size_t num_classes) {
  if (votes.empty()) throw ContractViolation("ensemble of zero models");
  std::vector<double> tally(num_classes, 0.0);
  for (std::size_t v : votes) {
    if (v >= num_classes) throw ContractViolation("vote " + std::to_string(v) + " out of " + std::to_string(num_classes) + " classes");
    tally[v] += 1.0;
  }
  return argmax_lowest(tally);
}

struct PredictionRow {
  std::string id;
  std::size_t gold = 0;
  std::optional<Posterior> posterior;  // set for posterior rows
  std::size_t predicted = 0;           // argmax for posterior rows
};

struct PredictionFile {
  std::vector<std::string> labels;
  std::vector<PredictionRow> rows;
};

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void save_predictions(const PredictionFile& pf, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "#predictions\tv1\t" << join_tokens(pf.labels, ",") << '\n';
  for (const auto& r : pf.rows) {
    out << r.id << '\t' << pf.labels.at(r.gold);
    if (r.posterior)
      for (double v : *r.posterior) out << '\t' << format_real(v);
    else
      out << '\t' << pf.labels.at(r.predicted);
    out << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline PredictionFile load_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  PredictionFile pf;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    const auto fields = detail::split(line, '\t');
    if (line_no == 1) {
      if (fields.size() != 3 || fields[0] != "#predictions") throw DataError(path, 1, "missing '#predictions' header");
      if (fields[1] != "v1") throw DataError(path, 1, "unsupported prediction file version '" + fields[1] + "'");
      pf.labels = detail::split(fields[2], ',');
      for (std::size_t i = 0; i < pf.labels.size(); ++i) index[pf.labels[i]] = i;
      if (pf.labels.size() < 2) throw DataError(path, 1, "need at least two labels");
      continue;
    }
    if (line.empty()) continue;
    const std::size_t c = pf.labels.size();
    if (fields.size() != 3 && fields.size() != 2 + c)
      throw DataError(path, line_no, "expected 3 or " + std::to_string(2 + c) + " fields, got " + std::to_string(fields.size()));
    PredictionRow row;
    row.id = fields[0];
    auto gold = index.find(fields[1]);
    if (gold == index.end()) throw DataError(path, line_no, "unknown label '" + fields[1] + "'");
    row.gold = gold->second;
    if (fields.size() == 2 + c) {
      Posterior p(c);
      for (std::size_t k = 0; k < c; ++k) {
        try {
          std::size_t used = 0;
          p[k] = std::stod(fields[2 + k], &used);
          if (used != fields[2 + k].size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
          throw DataError(path, line_no, "bad posterior value '" + fields[2 + k] + "'");
        }
      }
      row.predicted = argmax_lowest(p);
      row.posterior = std::move(p);
    } else {
      auto pred = index.find(fields[2]);
      if (pred == index.end()) throw DataError(path, line_no, "unknown label '" + fields[2] + "'");
      row.predicted = pred->second;
    }
    pf.rows.push_back(std::move(row));
  }
  if (line_no == 0) throw DataError(path, 1, "empty file");
  return pf;
}

enum class EnsembleMethod { ua, mv };

inline EnsembleMethod parse_ensemble_method(const std::string& s) {
  if (s == "ua") return EnsembleMethod::ua;
  if (s == "mv") return EnsembleMethod::mv;
  throw ConfigError("unknown ensemble method '" + s + "' (expected ua or mv)");
}

// Combines aligned prediction files row by row. For UA a hard-label row
// counts as a one-hot posterior; for MV a posterior row votes its argmax.
inline PredictionFile ensemble_files(const std::vector<PredictionFile>& files, EnsembleMethod method) {
  if (files.empty()) throw ConfigError("no prediction files to ensemble");
  const auto& first = files.front();
  PredictionFile out;
  out.labels = first.labels;
  const std::size_t c = first.labels.size();
  for (std::size_t f = 1; f < files.size(); ++f) {
    if (files[f].labels != first.labels) throw DataError("prediction files disagree on the label set");
    if (files[f].rows.size() != first.rows.size()) {
      const std::size_t n = std::min(files[f].rows.size(), first.rows.size());
      std::string id = n < first.rows.size() ? first.rows[n].id : files[f].rows[n].id;
      throw DataError("alignment error: files differ in length; first unmatched id '" + id + "'");
    }
  }
  for (std::size_t i = 0; i < first.rows.size(); ++i) {
    for (const auto& f : files)
      if (f.rows[i].id != first.rows[i].id || f.rows[i].gold != first.rows[i].gold)
        throw DataError("alignment error at id '" + first.rows[i].id + "'");
    PredictionRow row;
    row.id = first.rows[i].id;
    row.gold = first.rows[i].gold;
    if (method == EnsembleMethod::ua) {
      std::vector<Posterior> ps;
      for (const auto& f : files) {
        if (f.rows[i].posterior) {
          ps.push_back(*f.rows[i].posterior);
        } else {
          Posterior one_hot(c, 0.0);
          one_hot[f.rows[i].predicted] = 1.0;
          ps.push_back(std::move(one_hot));
        }
      }
      row.predicted = ensemble_ua(ps);
    } else {
      std::vector<std::size_t> votes;
      for (const auto& f : files) votes.push_back(f.rows[i].predicted);
      row.predicted = ensemble_mv(votes, c);
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace emotl
